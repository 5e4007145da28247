//! Pseudo-random noise chain (LFSR → Gold code → PDM → RC filter) and the
//! ideal Gaussian reference source.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Period of a maximal-length 16-bit register.
pub const LFSR_PERIOD: usize = (1 << 16) - 1;

/// Fibonacci LFSR for x¹⁶ + x¹⁵ + x¹³ + x⁴ + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lfsr16 {
    state: u16,
}

impl Lfsr16 {
    pub fn new(seed: u16) -> Result<Self> {
        if seed == 0 {
            return Err(invalid("LFSR seed must be non-zero"));
        }
        Ok(Self { state: seed })
    }

    pub fn state(&self) -> u16 {
        self.state
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        let s = self.state;
        let out = s & 1;
        let fb = (s ^ (s >> 1) ^ (s >> 3) ^ (s >> 12)) & 1;
        self.state = (s >> 1) | (fb << 15);
        out == 1
    }
}

pub fn lfsr_stream(seed: u16, length: usize) -> Result<Vec<bool>> {
    let mut r = Lfsr16::new(seed)?;
    Ok((0..length).map(|_| r.next_bit()).collect())
}

/// XOR of two LFSR streams.
#[derive(Debug, Clone, Copy)]
pub struct GoldCode {
    a: Lfsr16,
    b: Lfsr16,
}

impl GoldCode {
    pub fn new(seed_a: u16, seed_b: u16) -> Result<Self> {
        Ok(Self { a: Lfsr16::new(seed_a)?, b: Lfsr16::new(seed_b)? })
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        self.a.next_bit() ^ self.b.next_bit()
    }
}

pub fn gold_code(seed_a: u16, seed_b: u16, length: usize) -> Result<Vec<bool>> {
    let mut g = GoldCode::new(seed_a, seed_b)?;
    Ok((0..length).map(|_| g.next_bit()).collect())
}

fn check_duty(duty: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(invalid(format!("duty cycle {duty} outside [0, 1]")));
    }
    Ok(())
}

/// First-order sigma-delta enable stream with density `duty`.
#[derive(Debug, Clone, Copy)]
pub struct PdmGate {
    duty: f64,
    acc: f64,
}

impl PdmGate {
    pub fn new(duty: f64) -> Result<Self> {
        check_duty(duty)?;
        Ok(Self { duty, acc: 0.0 })
    }

    #[inline]
    pub fn enable(&mut self) -> bool {
        self.acc += self.duty;
        if self.acc >= 1.0 {
            self.acc -= 1.0;
            true
        } else {
            false
        }
    }
}

/// Bits ANDed with the sigma-delta enable stream.
pub fn pdm_gate(bits: &[bool], duty: f64) -> Result<Vec<bool>> {
    let mut g = PdmGate::new(duty)?;
    Ok(bits.iter().map(|&b| g.enable() && b).collect())
}

/// Discrete one-pole low-pass `y += dt/(dt+τ) (x − y)`.
#[derive(Debug, Clone, Copy)]
pub struct RcFilter {
    alpha: f64,
    y: f64,
}

impl RcFilter {
    pub fn new(tau: f64, dt: f64) -> Result<Self> {
        if !(tau >= 0.0 && dt > 0.0) {
            return Err(invalid("filter needs tau >= 0 and dt > 0"));
        }
        Ok(Self { alpha: dt / (dt + tau), y: 0.0 })
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        self.y += self.alpha * (x - self.y);
        self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn rc_filter(input: &[f64], tau: f64, dt: f64) -> Result<Vec<f64>> {
    let mut f = RcFilter::new(tau, dt)?;
    Ok(input.iter().map(|&x| f.step(x)).collect())
}

/// Unit-variance noise feed for the integrators.
pub trait NoiseSource: Send {
    /// Fills `out` with the next draw for each channel.
    fn fill(&mut self, out: &mut [f64]) -> Result<()>;

    /// `None` for white Gaussian draws; otherwise the interval over which each
    /// value is held as a constant input.
    fn hold_time(&self) -> Option<f64>;

    /// Number of channels a held source provides (unbounded for white sources).
    fn channels(&self) -> Option<usize>;
}

/// Independent standard normal draws.
#[derive(Debug, Clone)]
pub struct IdealGaussianSource {
    rng: ChaCha8Rng,
}

impl IdealGaussianSource {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Wiener increments `√(2 κ₀ dt) ξ`, one per entry of `kappa`.
    pub fn increments(&mut self, kappa: &[f64], dt: f64, out: &mut [f64]) {
        for (o, k) in out.iter_mut().zip(kappa) {
            let xi: f64 = StandardNormal.sample(&mut self.rng);
            *o = (2.0 * k * dt).sqrt() * xi;
        }
    }
}

impl NoiseSource for IdealGaussianSource {
    fn fill(&mut self, out: &mut [f64]) -> Result<()> {
        for o in out.iter_mut() {
            *o = StandardNormal.sample(&mut self.rng);
        }
        Ok(())
    }

    fn hold_time(&self) -> Option<f64> {
        None
    }

    fn channels(&self) -> Option<usize> {
        None
    }
}

/// Settings of the on-chip noise chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChainConfig {
    /// Seeds of the two registers feeding cell 0; later cells derive theirs.
    pub seed_a: u16,
    pub seed_b: u16,
    /// PDM density, the noise level knob.
    pub duty_cycle: f64,
    /// RC filter time constant in seconds.
    pub rc_time_constant: f64,
    /// Bit clock in Hz.
    pub bit_rate: f64,
}

/// Corner frequency of the default RC filter, Hz.
pub const DEFAULT_FILTER_CORNER: f64 = 12e6;

impl Default for NoiseChainConfig {
    fn default() -> Self {
        Self {
            seed_a: 0xace1,
            seed_b: 0x1d87,
            duty_cycle: 1.0,
            rc_time_constant: 1.0 / (2.0 * std::f64::consts::PI * DEFAULT_FILTER_CORNER),
            bit_rate: 96e6,
        }
    }
}

impl NoiseChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_a == 0 || self.seed_b == 0 {
            return Err(invalid("LFSR seeds must be non-zero"));
        }
        if self.seed_a == self.seed_b {
            return Err(invalid("the two LFSR seeds must differ"));
        }
        check_duty(self.duty_cycle)?;
        if !(self.bit_rate > 0.0 && self.rc_time_constant >= 0.0) {
            return Err(invalid("bit rate must be positive and the RC constant non-negative"));
        }
        Ok(())
    }

    /// Derives distinct register seeds from a 64-bit run seed.
    pub fn with_run_seed(mut self, seed: u64) -> Self {
        let s = chain_seeds(seed, 1)[0];
        self.seed_a = s.0;
        self.seed_b = s.1;
        self
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn nonzero_u16(v: u64) -> u16 {
    let s = (v & 0xffff) as u16;
    if s == 0 {
        0xace1
    } else {
        s
    }
}

/// Register seeds for `cells` chains, distinct across all registers.
pub fn chain_seeds(seed: u64, cells: usize) -> Vec<(u16, u16)> {
    let mut used = std::collections::HashSet::new();
    let mut counter = splitmix64(seed);
    let mut next = || loop {
        counter = splitmix64(counter);
        let s = nonzero_u16(counter);
        if used.insert(s) {
            return s;
        }
    };
    (0..cells).map(|_| (next(), next())).collect()
}

#[derive(Debug, Clone)]
struct ChainCell {
    gold: GoldCode,
    gate: PdmGate,
    filter: RcFilter,
}

/// One noise chain per cell. Emits the filtered ±1/0 stream, normalized so
/// that its low-frequency spectral level equals that of unit white noise held
/// for one bit period.
#[derive(Debug, Clone)]
pub struct LfsrChainSource {
    cells: Vec<ChainCell>,
    hold: f64,
}

impl LfsrChainSource {
    pub fn new(config: &NoiseChainConfig, cells: usize) -> Result<Self> {
        config.validate()?;
        let dt = 1.0 / config.bit_rate;
        let mut seeds = vec![(config.seed_a, config.seed_b)];
        if cells > 1 {
            let base = (u64::from(config.seed_a) << 16) | u64::from(config.seed_b);
            seeds.extend(
                chain_seeds(base, cells + 1)
                    .into_iter()
                    .filter(|&(a, b)| ![a, b].iter().any(|s| *s == config.seed_a || *s == config.seed_b))
                    .take(cells - 1),
            );
        }
        let cells = seeds
            .into_iter()
            .map(|(a, b)| {
                Ok(ChainCell {
                    gold: GoldCode::new(a, b)?,
                    gate: PdmGate::new(config.duty_cycle)?,
                    filter: RcFilter::new(config.rc_time_constant, dt)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cells, hold: dt })
    }
}

impl NoiseSource for LfsrChainSource {
    fn fill(&mut self, out: &mut [f64]) -> Result<()> {
        if out.len() > self.cells.len() {
            return Err(invalid(format!(
                "noise chain drives {} cells but {} channels were requested",
                self.cells.len(),
                out.len()
            )));
        }
        for (o, c) in out.iter_mut().zip(self.cells.iter_mut()) {
            let bit = c.gold.next_bit();
            let x = if c.gate.enable() {
                if bit {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            };
            *o = c.filter.step(x);
        }
        Ok(())
    }

    fn hold_time(&self) -> Option<f64> {
        Some(self.hold)
    }

    fn channels(&self) -> Option<usize> {
        Some(self.cells.len())
    }
}
