use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SpuError};
use crate::linalg::{min_eigenvalue, symmetrize};

use super::inverter::{check_dim, Inverter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset1D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(SpuError::Dimension(format!("{} inputs but {} targets", x.len(), y.len())));
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return Err(invalid("dataset values must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `yᵢ = sin(xᵢ) + σ εᵢ` on `n` evenly spaced points of `[lo, hi]`.
    pub fn noisy_sine(n: usize, lo: f64, hi: f64, noise_sd: f64, seed: u64) -> Result<Self> {
        let x = linspace(lo, hi, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = x
            .iter()
            .map(|v| v.sin() + noise_sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Self::new(x, y)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// RBF kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub length_scale: f64,
    pub signal_variance: f64,
    /// Standard deviation of the observation noise.
    pub observation_noise: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { length_scale: 1.0, signal_variance: 1.0, observation_noise: 1.0 }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_variance > 0.0 && self.observation_noise >= 0.0)
            || !(self.length_scale.is_finite()
                && self.signal_variance.is_finite()
                && self.observation_noise.is_finite())
        {
            return Err(invalid("kernel needs length_scale > 0, signal_variance > 0, observation_noise >= 0"));
        }
        Ok(())
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.signal_variance * (-(a - b).powi(2) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// `K(x, x) + σ²𝕀`, the train-train block.
    pub fn train_covariance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut k = kernel_matrix(x, x, self)?;
        for i in 0..x.len() {
            k[(i, i)] += self.observation_noise.powi(2);
        }
        Ok(k)
    }
}

/// Noise-free kernel matrix `K[i][j] = k(xaᵢ, xbⱼ)`.
pub fn kernel_matrix(xa: &[f64], xb: &[f64], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    Ok(DMatrix::from_fn(xa.len(), xb.len(), |i, j| spec.eval(xa[i], xb[j])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprPosterior {
    pub test_x: Vec<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GprPosterior {
    pub fn stddev(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,mean,stddev")?;
        for ((x, m), s) in self.test_x.iter().zip(self.mean.iter()).zip(self.stddev()) {
            writeln!(w, "{x:e},{m:e},{s:e}")?;
        }
        Ok(())
    }
}

/// Relative slack on negative posterior eigenvalues before the posterior is rejected.
pub const POSTERIOR_PSD_TOLERANCE: f64 = 1e-6;

/// `μ = Σ₂₁ Σ₁₁⁻¹ y`, `Σ = Σ₂₂ − Σ₂₁ Σ₁₁⁻¹ Σ₁₂`, with `Σ₁₁⁻¹` from `inverter`.
pub fn gpr_posterior(
    train: &Dataset1D,
    test_x: &[f64],
    spec: &KernelSpec,
    inverter: &dyn Inverter,
) -> Result<GprPosterior> {
    spec.validate()?;
    if train.is_empty() {
        return Err(invalid("GPR needs at least one training point"));
    }
    check_dim(inverter.max_dim(), train.len(), "training set")?;
    let s11 = spec.train_covariance(&train.x)?;
    let s21 = kernel_matrix(test_x, &train.x, spec)?;
    let s22 = kernel_matrix(test_x, test_x, spec)?;
    let inv = inverter.invert(&s11)?;
    let y = DVector::from_column_slice(&train.y);
    let w = &s21 * &inv;
    let mean = &w * y;
    let covariance = symmetrize(&(&s22 - &w * s21.transpose()));
    if !test_x.is_empty() {
        let scale = s22.diagonal().amax().max(1.0);
        let lo = min_eigenvalue(&covariance);
        if lo < -POSTERIOR_PSD_TOLERANCE * scale {
            return Err(SpuError::NotPositiveDefinite { min_eigenvalue: lo });
        }
    }
    Ok(GprPosterior { test_x: test_x.to_vec(), mean, covariance })
}
