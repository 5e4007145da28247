use nalgebra::DMatrix;

use crate::circuit::CELL_COUNT;
use crate::compiler::TargetSpec;
use crate::error::Result;
use crate::linalg::{ensure_positive_definite, ensure_symmetric, spd_inverse, symmetrize};
use crate::stats::sample_covariance;
use crate::thermo::{digital_samples, sample_gaussian, Backend, SamplingPlan};

/// Source of `A⁻¹` for symmetric positive-definite `A`.
pub trait Inverter: Sync {
    fn invert(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// Largest dimension the inverter accepts, if bounded.
    fn max_dim(&self) -> Option<usize> {
        None
    }

    fn name(&self) -> &'static str;
}

/// Cholesky inverse.
#[derive(Debug, Clone, Copy, Default)]
pub struct DigitalInverter;

impl Inverter for DigitalInverter {
    fn invert(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        spd_inverse(a)
    }

    fn name(&self) -> &'static str {
        "digital"
    }
}

/// Sample covariance of the emulated device compiled with `𝐂 = A`.
#[derive(Debug, Clone, Default)]
pub struct ThermodynamicInverter {
    pub plan: SamplingPlan,
}

impl ThermodynamicInverter {
    pub fn new(plan: SamplingPlan) -> Self {
        Self { plan }
    }
}

impl Inverter for ThermodynamicInverter {
    fn invert(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let target = TargetSpec::precision(a.clone())?;
        let batch = sample_gaussian(&target, &self.plan, Backend::EmulatedSpu)?;
        sample_covariance(&batch.values)
    }

    fn max_dim(&self) -> Option<usize> {
        Some(CELL_COUNT)
    }

    fn name(&self) -> &'static str {
        "thermodynamic"
    }
}

/// Zero-mean draws from a covariance matrix; rows are samples.
pub trait GaussianSampler: Sync {
    fn sample(&self, covariance: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>>;

    fn max_dim(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DigitalSampler;

impl GaussianSampler for DigitalSampler {
    fn sample(&self, covariance: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        ensure_symmetric(covariance, 1e-10)?;
        ensure_positive_definite(covariance)?;
        Ok(digital_samples(&symmetrize(covariance), n, seed))
    }
}

/// Charges of the device compiled from a covariance target. `n_samples`
/// and `seed` of the plan are overridden per call.
#[derive(Debug, Clone, Default)]
pub struct ThermodynamicSampler {
    pub plan: SamplingPlan,
}

impl GaussianSampler for ThermodynamicSampler {
    fn sample(&self, covariance: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let target = TargetSpec::covariance(covariance.clone())?;
        let plan = SamplingPlan { n_samples: n, seed, ..self.plan.clone() };
        Ok(sample_gaussian(&target, &plan, Backend::EmulatedSpu)?.values)
    }

    fn max_dim(&self) -> Option<usize> {
        Some(CELL_COUNT)
    }
}

pub(crate) fn check_dim(limit: Option<usize>, d: usize, what: &str) -> Result<()> {
    match limit {
        Some(m) if d > m => {
            Err(crate::error::SpuError::Dimension(format!("{what} of size {d} exceeds the {m}-cell device")))
        }
        _ => Ok(()),
    }
}
