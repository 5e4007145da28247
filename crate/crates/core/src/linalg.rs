//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpuError};

/// Largest absolute difference between `m[(i, j)]` and `m[(j, i)]`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(SpuError::Dimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpuError::Malformed("matrix contains non-finite entries".into()));
    }
    Ok(())
}

/// Checks symmetry to a tolerance relative to the Frobenius norm.
pub fn ensure_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    ensure_square(m)?;
    let asym = asymmetry(m);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if asym > rel_tol * scale {
        return Err(SpuError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(ev)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1]
}

/// Spectral condition number of a symmetric positive-definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1] / ev[0]
}

/// Eigenvalue-based positive-definiteness check, relative to the spectral radius.
pub fn ensure_positive_definite(m: &DMatrix<f64>) -> Result<()> {
    ensure_symmetric(m, 1e-10)?;
    let ev = sym_eigenvalues(m);
    let lo = ev[0];
    let hi = ev[ev.len() - 1].abs().max(lo.abs());
    if !(lo > 1e-13 * hi) {
        return Err(SpuError::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(())
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol =
        m.clone().cholesky().ok_or_else(|| SpuError::NotPositiveDefinite { min_eigenvalue: min_eigenvalue(m) })?;
    Ok(symmetrize(&chol.inverse()))
}

/// A factor `G` with `G Gᵀ = Q` for a symmetric positive-semidefinite `Q`.
///
/// The matrix is first balanced by its diagonal so that state components of
/// very different magnitude keep their relative precision; tiny negative
/// eigenvalues from round-off are clipped to zero.
pub fn psd_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = q[(i, i)];
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut balanced = q.clone();
    for i in 0..n {
        for j in 0..n {
            balanced[(i, j)] /= d[i] * d[j];
        }
    }
    let balanced = symmetrize(&balanced);
    if let Some(chol) = balanced.clone().cholesky() {
        let mut l = chol.l();
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] *= d[i];
            }
        }
        return l;
    }
    let eig = SymmetricEigen::new(balanced);
    let mut g = eig.eigenvectors.clone();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            g[(i, k)] *= s * d[i];
        }
    }
    g
}

/// `‖estimate − reference‖_F / ‖reference‖_F`.
pub fn rel_frobenius(estimate: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (estimate - reference).norm() / reference.norm()
}

/// Solves `A S + S Aᵀ + W = 0` for `S` by vectorization. Intended for small
/// state dimensions.
pub fn continuous_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, w.iter().map(|v| -v));
    let sol = k.lu().solve(&rhs).ok_or_else(|| SpuError::Numerical("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Solves `S = F S Fᵀ + Q` by repeated doubling. Requires a stable `F`.
pub fn discrete_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = q.clone();
    let mut fk = f.clone();
    for _ in 0..200 {
        let inc = &fk * &s * fk.transpose();
        s += &inc;
        fk = &fk * &fk;
        if inc.norm() <= 1e-16 * s.norm() {
            return Ok(symmetrize(&s));
        }
        if !s.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(SpuError::Numerical("discrete Lyapunov iteration did not converge".into()))
}

/// Roughly logarithmically spaced integers in `[lo, hi]`, deduplicated and
/// always ending at `hi`.
pub fn log_spaced_counts(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let lo = lo.max(1).min(hi.max(1));
    let hi = hi.max(lo);
    if points <= 1 || lo == hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> =
        (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp().round() as usize).collect();
    out.dedup();
    *out.last_mut().expect("non-empty") = hi;
    out
}

/// Haar-distributed random orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `Q diag(λ) Qᵀ` for an orthogonal `q`.
pub fn from_eigen(q: &DMatrix<f64>, eigenvalues: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_row_slice(eigenvalues));
    symmetrize(&(q * d * q.transpose()))
}

/// Geometrically spaced eigenvalues from 1 to `kappa`.
pub fn geometric_spectrum(d: usize, kappa: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    (0..d).map(|k| kappa.powf(k as f64 / (d - 1) as f64)).collect()
}

/// Random SPD matrix with condition number `kappa` and unit smallest eigenvalue.
pub fn random_spd_with_condition<R: Rng + ?Sized>(d: usize, kappa: f64, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    from_eigen(&q, &geometric_spectrum(d, kappa))
}

/// Random SPD matrix `G Gᵀ / d + I`, a generic well-conditioned test target.
pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    symmetrize(&(&g * g.transpose() / d as f64 + DMatrix::identity(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lyapunov_matches_scalar_ou() {
        // dx = -a x dt + s dW has stationary variance s^2 / (2a)
        let a = DMatrix::from_element(1, 1, -3.0);
        let w = DMatrix::from_element(1, 1, 0.5);
        let s = continuous_lyapunov(&a, &w).unwrap();
        assert!((s[(0, 0)] - 0.5 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn discrete_lyapunov_scalar() {
        let f = DMatrix::from_element(1, 1, 0.9);
        let q = DMatrix::from_element(1, 1, 1.0);
        let s = discrete_lyapunov(&f, &q).unwrap();
        assert!((s[(0, 0)] - 1.0 / (1.0 - 0.81)).abs() < 1e-10);
    }

    #[test]
    fn psd_factor_reconstructs_badly_scaled_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_spd(4, &mut rng);
        let scales = [1e-9, 1.0, 1e6, 1e-3];
        let q = DMatrix::from_fn(4, 4, |i, j| base[(i, j)] * scales[i] * scales[j]);
        let g = psd_factor(&q);
        let back = &g * g.transpose();
        for i in 0..4 {
            for j in 0..4 {
                let rel = (back[(i, j)] - q[(i, j)]).abs() / (scales[i] * scales[j]);
                assert!(rel < 1e-10);
            }
        }
    }

    #[test]
    fn psd_factor_handles_singular_input() {
        let v = DVector::from_row_slice(&[1.0, 2.0, -1.0]);
        let q = &v * v.transpose();
        let g = psd_factor(&q);
        assert!((&g * g.transpose() - &q).norm() < 1e-12);
    }

    #[test]
    fn generated_condition_number() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd_with_condition(6, 250.0, &mut rng);
        assert!((condition_number(&m) - 250.0).abs() < 1e-8 * 250.0);
    }

    #[test]
    fn log_counts_are_increasing_and_bounded() {
        let c = log_spaced_counts(10, 100_000, 9);
        assert_eq!(c[0], 10);
        assert_eq!(*c.last().unwrap(), 100_000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn positive_definite_check_uses_eigenvalues() {
        // Positive diagonal but indefinite.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(ensure_positive_definite(&m), Err(SpuError::NotPositiveDefinite { .. })));
    }
}
