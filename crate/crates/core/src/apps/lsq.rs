use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpuError};
use crate::linalg::sym_eigenvalues;

use super::inverter::{check_dim, Inverter};

const RANK_TOLERANCE: f64 = 1e-12;

/// `β = (XᵀX)⁻¹ Xᵀ y` with the inverse from `inverter`.
pub fn linear_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, inverter: &dyn Inverter) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(SpuError::Dimension(format!("{} design rows but {} targets", x.nrows(), y.len())));
    }
    if x.ncols() == 0 || x.nrows() < x.ncols() {
        return Err(SpuError::Dimension("design matrix needs at least as many rows as columns".into()));
    }
    check_dim(inverter.max_dim(), x.ncols(), "normal matrix")?;
    let gram = x.transpose() * x;
    let ev = sym_eigenvalues(&gram);
    let (lo, hi) = (ev.min(), ev.max());
    if !(lo > RANK_TOLERANCE * hi) {
        return Err(SpuError::NotPositiveDefinite { min_eigenvalue: lo });
    }
    let inv = inverter.invert(&gram)?;
    Ok(inv * (x.transpose() * y))
}

/// Columns `[1, x]`.
pub fn line_design(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{linspace, DigitalInverter, ThermodynamicInverter};
    use crate::thermo::SamplingPlan;

    #[test]
    fn exact_line() {
        let xs = linspace(-1.0, 1.0, 21);
        let y = DVector::from_iterator(21, xs.iter().map(|x| 1.0 + 2.0 * x));
        let b = linear_least_squares(&line_design(&xs), &y, &DigitalInverter).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
        let t = linear_least_squares(&line_design(&xs), &y, &ThermodynamicInverter::new(SamplingPlan::new(100_000, 2)))
            .unwrap();
        assert!((t[0] / 1.0 - 1.0).abs() < 0.05 && (t[1] / 2.0 - 1.0).abs() < 0.05, "{t}");
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let y = DVector::from_vec(vec![1.0, 4.0, 2.5, -0.5]);
        let b = linear_least_squares(&DMatrix::from_element(4, 1, 1.0), &y, &DigitalInverter).unwrap();
        assert!((b[0] - 1.75).abs() < 1e-14);
    }

    #[test]
    fn matches_qr_oracle() {
        let x = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 + if j == 0 { 1.0 } else { 0.0 });
        let y = DVector::from_fn(30, |i, _| (i as f64 * 0.37).sin());
        let b = linear_least_squares(&x, &y, &DigitalInverter).unwrap();
        let qr = x.clone().qr();
        let oracle = qr.r().solve_upper_triangular(&(qr.q().transpose() * &y)).unwrap();
        assert!((&b - &oracle).norm() <= 1e-10 * oracle.norm());
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let x = DMatrix::from_fn(5, 2, |i, _| i as f64);
        let y = DVector::zeros(5);
        assert!(matches!(linear_least_squares(&x, &y, &DigitalInverter), Err(SpuError::NotPositiveDefinite { .. })));
        assert!(linear_least_squares(&x, &DVector::zeros(4), &DigitalInverter).is_err());
    }
}
