use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::CELL_COUNT;
use crate::error::{invalid, Result, SpuError};
use crate::linalg::{ensure_positive_definite, ensure_symmetric, spd_inverse, symmetrize};
use crate::thermo::chain_seed;

use super::inverter::{check_dim, GaussianSampler};

pub const DEFAULT_PATCH_SIZE: usize = CELL_COUNT;

/// Posterior draws over a grid from independent per-patch Gaussian samples of
/// the diagonal blocks of `covariance`; the mean is added afterwards. Rows
/// are draws. A short final patch is padded with independent dimensions
/// that are dropped after sampling.
pub fn sngp_patch_sample(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    patch_size: usize,
    sampler: &dyn GaussianSampler,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let g = mean.len();
    if covariance.shape() != (g, g) {
        return Err(SpuError::Dimension(format!("mean has {g} points but covariance is {:?}", covariance.shape())));
    }
    if patch_size == 0 {
        return Err(invalid("patch size must be positive"));
    }
    check_dim(sampler.max_dim(), patch_size, "patch")?;
    ensure_symmetric(covariance, 1e-10)?;
    let starts: Vec<usize> = (0..g).step_by(patch_size).collect();
    let blocks: Vec<Result<DMatrix<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(k, &start)| {
                s.spawn(move || {
                    let len = patch_size.min(g - start);
                    let block = symmetrize(&covariance.view((start, start), (len, len)).into_owned());
                    let wrap = |e: SpuError| SpuError::Patch { index: k, source: Box::new(e) };
                    ensure_positive_definite(&block).map_err(wrap)?;
                    let mut padded = DMatrix::zeros(patch_size, patch_size);
                    let fill = block.diagonal().mean();
                    padded.view_mut((0, 0), (len, len)).copy_from(&block);
                    for i in len..patch_size {
                        padded[(i, i)] = fill;
                    }
                    let draws = sampler.sample(&padded, n, chain_seed(seed, k)).map_err(wrap)?;
                    Ok(draws.columns(0, len).into_owned())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SpuError::Numerical("patch worker panicked".into()))))
            .collect()
    });
    let mut out = DMatrix::zeros(n, g);
    for (block, &start) in blocks.into_iter().zip(&starts) {
        let b = block?;
        out.columns_mut(start, b.ncols()).copy_from(&b);
    }
    for mut row in out.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(out)
}

/// Zero outside the diagonal `patch_size` blocks.
pub fn block_diagonal(m: &DMatrix<f64>, patch_size: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i / patch_size == j / patch_size { m[(i, j)] } else { 0.0 })
}

/// Posterior mean and covariance of a classifier output over a square grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SngpFixture {
    pub grid: Vec<[f64; 2]>,
    pub side: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

const MOONS: usize = 100;
const FEATURES: usize = 128;
const FEATURE_LENGTH: f64 = 0.5;
const LABEL_NOISE_VAR: f64 = 0.1;
const JITTER: f64 = 1e-6;

/// Synthetic stand-in for a trained feature extractor on two moons:
///
/// 1. 2×100 two-moons points with 0.1 Gaussian jitter, labels ±1;
/// 2. 128 random Fourier features `√(2/D) cos(w·x + b)`, `w ~ N(0, 0.5⁻²)`,
///    `b ~ U[0, 2π)`;
/// 3. Bayesian linear regression on the labels with unit prior and noise
///    variance 0.1;
/// 4. predictive mean and covariance (plus 1e-6 jitter) on a `side × side`
///    grid over `[−1.5, 2.5] × [−1, 1.5]`, row-major in y.
pub fn two_moons_fixture(side: usize, seed: u64) -> Result<SngpFixture> {
    if side < 2 {
        return Err(invalid("grid side must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.1).map_err(|e| invalid(e.to_string()))?;
    let mut pts = Vec::with_capacity(2 * MOONS);
    let mut labels = Vec::with_capacity(2 * MOONS);
    for k in 0..MOONS {
        let t = std::f64::consts::PI * k as f64 / (MOONS - 1) as f64;
        pts.push([t.cos() + jitter.sample(&mut rng), t.sin() + jitter.sample(&mut rng)]);
        labels.push(1.0);
        pts.push([1.0 - t.cos() + jitter.sample(&mut rng), 0.5 - t.sin() + jitter.sample(&mut rng)]);
        labels.push(-1.0);
    }
    let w: Vec<[f64; 2]> = (0..FEATURES)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [a / FEATURE_LENGTH, b / FEATURE_LENGTH]
        })
        .collect();
    let phase: Vec<f64> = (0..FEATURES).map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI)).collect();
    let features = |p: &[[f64; 2]]| {
        let amp = (2.0 / FEATURES as f64).sqrt();
        DMatrix::from_fn(p.len(), FEATURES, |i, j| amp * (w[j][0] * p[i][0] + w[j][1] * p[i][1] + phase[j]).cos())
    };
    let phi = features(&pts);
    let y = DVector::from_vec(labels);
    let precision = DMatrix::identity(FEATURES, FEATURES) + phi.transpose() * &phi / LABEL_NOISE_VAR;
    let post = spd_inverse(&precision)?;
    let weights = &post * phi.transpose() * y / LABEL_NOISE_VAR;

    let mut grid = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let gx = -1.5 + 4.0 * c as f64 / (side - 1) as f64;
            let gy = -1.0 + 2.5 * r as f64 / (side - 1) as f64;
            grid.push([gx, gy]);
        }
    }
    let pg = features(&grid);
    let mean = &pg * weights;
    let mut covariance = symmetrize(&(&pg * post * pg.transpose()));
    for i in 0..grid.len() {
        covariance[(i, i)] += JITTER;
    }
    Ok(SngpFixture { grid, side, mean, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{DigitalSampler, ThermodynamicSampler};
    use crate::linalg::rel_frobenius;
    use crate::stats::sample_covariance;

    fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        c
    }

    #[test]
    fn diagonal_covariance_is_exact() {
        let var = DVector::from_fn(11, |i, _| 0.5 + i as f64);
        let cov = DMatrix::from_diagonal(&var);
        let mean = DVector::from_fn(11, |i, _| i as f64);
        let x = sngp_patch_sample(&mean, &cov, 4, &DigitalSampler, 50_000, 1).unwrap();
        let got = sample_covariance(&x).unwrap();
        assert!(rel_frobenius(&got, &cov) < 0.03);
        let m = x.row_mean();
        assert!((m.transpose() - &mean).amax() < 0.05);
    }

    #[test]
    fn block_diagonal_truth_is_recovered_on_the_device() {
        let fx = two_moons_fixture(4, 3).unwrap();
        let truth = block_diagonal(&fx.covariance, 8);
        let x = sngp_patch_sample(&fx.mean, &truth, 8, &ThermodynamicSampler::default(), 100_000, 2).unwrap();
        let got = sample_covariance(&centered(&x, &fx.mean)).unwrap();
        assert!(rel_frobenius(&got, &truth) < 0.05);
    }

    #[test]
    fn dense_covariance_keeps_only_blocks() {
        let fx = two_moons_fixture(4, 5).unwrap();
        let x = sngp_patch_sample(&fx.mean, &fx.covariance, 8, &DigitalSampler, 100_000, 4).unwrap();
        let got = sample_covariance(&x).unwrap();
        let blocks = block_diagonal(&fx.covariance, 8);
        assert!(rel_frobenius(&got, &blocks) < 0.03);
        assert!(rel_frobenius(&got, &fx.covariance) > 0.1);
    }

    #[test]
    fn bad_patch_is_named() {
        let mut cov = DMatrix::identity(10, 10);
        cov[(9, 9)] = -1.0;
        let err = sngp_patch_sample(&DVector::zeros(10), &cov, 4, &DigitalSampler, 10, 0).unwrap_err();
        assert!(matches!(err, SpuError::Patch { index: 2, .. }), "{err}");
        assert!(err.to_string().contains("patch 2"));
    }

    #[test]
    fn fixture_shape_and_symmetry() {
        let fx = two_moons_fixture(16, 0).unwrap();
        assert_eq!(fx.grid.len(), 256);
        assert_eq!(fx.covariance.shape(), (256, 256));
        assert_eq!(fx.covariance.transpose(), fx.covariance);
        assert_eq!(two_moons_fixture(16, 0).unwrap(), fx);
        assert!(sngp_patch_sample(&fx.mean, &fx.covariance, 9, &ThermodynamicSampler::default(), 10, 0).is_err());
    }
}
