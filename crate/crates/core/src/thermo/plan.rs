use serde::{Deserialize, Serialize};

use crate::circuit::DeviceTemplate;
use crate::error::{invalid, Result};
use crate::langevin::Scheme;
use crate::noise::NoiseChainConfig;

/// Decorrelation spacing, in correlation times.
pub const DECORRELATION_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingRate {
    /// Samples per unit time of the device (Hz for SI devices).
    Hz(f64),
    /// Samples per correlation time of the compiled device.
    PerCorrelationTime(f64),
}

impl SamplingRate {
    pub fn resolve(&self, tau_corr: f64) -> f64 {
        match *self {
            SamplingRate::Hz(r) => r,
            SamplingRate::PerCorrelationTime(k) => k / tau_corr,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            SamplingRate::Hz(r) | SamplingRate::PerCorrelationTime(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseMode {
    /// Exact white Gaussian current noise.
    #[default]
    Ideal,
    /// Gated, filtered Gold-code bit streams held for one bit period.
    LfsrChain(NoiseChainConfig),
}

/// Uniform quantizer with saturation at `±range_sigmas · σ_ref`, where `σ_ref`
/// is the largest stationary voltage standard deviation at unit noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub bits: u32,
    pub range_sigmas: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self { bits: 10, range_sigmas: 4.0 }
    }
}

impl AdcModel {
    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.bits) {
            return Err(invalid("ADC resolution must be between 1 and 24 bits"));
        }
        if !(self.range_sigmas > 0.0) {
            return Err(invalid("ADC range must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareOptions {
    pub template: DeviceTemplate,
    /// Snap to the capacitor banks; otherwise use continuous capacitances.
    pub quantize: bool,
    /// Resistance of the parallel loading path to each higher-indexed cell, Ω.
    pub loading_resistance: Option<f64>,
    pub adc: Option<AdcModel>,
}

impl Default for HardwareOptions {
    fn default() -> Self {
        Self {
            template: DeviceTemplate::nominal(),
            quantize: true,
            loading_resistance: None,
            adc: Some(AdcModel::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeviceMode {
    /// Exactly compiled device in simulation units (`R = 1`, `κ₀ = kT`).
    #[default]
    Ideal,
    Hardware(HardwareOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub n_samples: usize,
    pub sampling_rate: SamplingRate,
    /// Discarded equilibration time, in correlation times.
    pub burn_in_multiple: f64,
    /// `κ₀` scale for ideal noise, PDM duty cycle for the LFSR chain.
    pub noise_level: f64,
    /// Keep every k-th raw sample, with `k` the smallest spacing of at least
    /// five correlation times.
    pub decorrelate: bool,
    pub seed: u64,
    /// Independent chains; samples are split evenly and concatenated in chain order.
    pub chains: usize,
    pub scheme: Scheme,
    pub noise: NoiseMode,
    pub device: DeviceMode,
    /// Multiplicative Gaussian spread on every circuit component.
    pub component_tolerance: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            sampling_rate: SamplingRate::PerCorrelationTime(10.0),
            burn_in_multiple: 5.0,
            noise_level: 1.0,
            decorrelate: true,
            seed: 0,
            chains: 1,
            scheme: Scheme::Exact,
            noise: NoiseMode::Ideal,
            device: DeviceMode::Ideal,
            component_tolerance: 0.0,
        }
    }
}

impl SamplingPlan {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        let r = self.sampling_rate.value();
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("sampling rate must be positive"));
        }
        if !(self.burn_in_multiple >= 0.0 && self.burn_in_multiple.is_finite()) {
            return Err(invalid("burn-in multiple must be non-negative"));
        }
        if !(self.noise_level > 0.0 && self.noise_level.is_finite()) {
            return Err(invalid("noise level must be positive"));
        }
        if let NoiseMode::LfsrChain(cfg) = &self.noise {
            cfg.validate()?;
            if self.noise_level > 1.0 {
                return Err(invalid("with the LFSR chain the noise level is a duty cycle in (0, 1]"));
            }
        }
        if self.chains == 0 {
            return Err(invalid("at least one chain is required"));
        }
        if !(self.component_tolerance >= 0.0 && self.component_tolerance < 0.3) {
            return Err(invalid("component tolerance must lie in [0, 0.3)"));
        }
        if let DeviceMode::Hardware(h) = &self.device {
            if let Some(adc) = &h.adc {
                adc.validate()?;
            }
        }
        Ok(())
    }

    /// Sample count of each chain.
    pub fn chain_counts(&self) -> Vec<usize> {
        let (q, r) = (self.n_samples / self.chains, self.n_samples % self.chains);
        (0..self.chains).map(|c| q + usize::from(c < r)).filter(|&n| n > 0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SamplingPlan::default().validate().is_ok());
        assert!(SamplingPlan { n_samples: 0, ..Default::default() }.validate().is_err());
        assert!(SamplingPlan { sampling_rate: SamplingRate::Hz(0.0), ..Default::default() }.validate().is_err());
        let lfsr = SamplingPlan {
            noise: NoiseMode::LfsrChain(NoiseChainConfig::default()),
            noise_level: 2.0,
            ..Default::default()
        };
        assert!(lfsr.validate().is_err());
    }

    #[test]
    fn chain_split() {
        let p = SamplingPlan { n_samples: 10, chains: 3, ..Default::default() };
        assert_eq!(p.chain_counts(), vec![4, 3, 3]);
        let p = SamplingPlan { n_samples: 2, chains: 4, ..Default::default() };
        assert_eq!(p.chain_counts(), vec![1, 1]);
    }

    #[test]
    fn plan_json_defaults() {
        let p: SamplingPlan = serde_json::from_str(r#"{"n_samples": 7, "sampling_rate": {"hz": 12e6}}"#).unwrap();
        assert_eq!(p.n_samples, 7);
        assert_eq!(p.sampling_rate, SamplingRate::Hz(12e6));
        assert!(p.decorrelate);
        let back: SamplingPlan = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
