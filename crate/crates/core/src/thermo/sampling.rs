use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::plan::{DeviceMode, NoiseMode, SamplingPlan, DECORRELATION_MULTIPLE};
use crate::batch::{BatchMeta, Observable, SampleBatch};
use crate::circuit::CircuitParams;
use crate::compiler::{compile_covariance, compile_precision, CompilationResult, TargetKind, TargetSpec};
use crate::error::{invalid, Result, SpuError};
use crate::langevin::{
    integrate_circuit, stationary_voltage_covariance, CircuitRun, CircuitSystem, Scheme, SdeState, TrajectoryConfig,
};
use crate::linalg::{
    ensure_positive_definite, ensure_symmetric, log_spaced_counts, psd_factor, rel_frobenius, spd_inverse,
};
use crate::noise::{splitmix64, IdealGaussianSource, LfsrChainSource, NoiseSource};
use crate::stats::CovarianceAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    EmulatedSpu,
    /// Exact Cholesky sampling, the oracle for the emulator.
    DigitalReference,
}

/// Seed of chain `c`; chain 0 uses the run seed itself.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    if chain == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(chain as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Adc {
    step: f64,
    limit: f64,
    levels: i64,
}

impl Adc {
    fn apply(&self, v: f64) -> f64 {
        let half = self.levels / 2;
        let code = ((v / self.step).floor() as i64).clamp(-half, half - 1);
        (code as f64 + 0.5) * self.step
    }
}

/// A compiled device ready to be sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDevice {
    pub compilation: CompilationResult,
    /// The simulated circuit after tolerance, loading and noise-level changes.
    pub circuit: CircuitParams,
    /// Converts the recorded observable to target units.
    pub gain: f64,
    pub observable: Observable,
    adc: Option<Adc>,
}

impl PreparedDevice {
    /// ADC saturation level in volts, when an ADC is modeled.
    pub fn adc_limit(&self) -> Option<f64> {
        self.adc.map(|a| a.limit)
    }
}

fn compile_target(target: &TargetSpec) -> Result<CompilationResult> {
    match target.kind {
        TargetKind::Precision => compile_precision(&target.matrix, target.kt),
        TargetKind::Covariance => compile_covariance(&target.matrix, target.kt),
    }
}

/// Compiles `target` and applies the hardware effects requested by `plan`.
pub fn prepare_device(target: &TargetSpec, plan: &SamplingPlan) -> Result<PreparedDevice> {
    plan.validate()?;
    let ideal = compile_target(target)?;
    let (compilation, loading, adc) = match &plan.device {
        DeviceMode::Ideal => (ideal, None, None),
        DeviceMode::Hardware(h) => {
            let c = if h.quantize { ideal.quantize(&h.template)? } else { ideal.continuous_hardware(&h.template)? };
            (c, h.loading_resistance, h.adc)
        }
    };
    let mut circuit = compilation.quantized.clone();
    if plan.component_tolerance > 0.0 {
        circuit = circuit.with_tolerance(plan.component_tolerance, splitmix64(plan.seed ^ 0x746f_6c65_7261_6e63))?;
    }
    if let Some(rc) = loading {
        circuit = circuit.with_parallel_loading(rc)?;
    }
    let adc = match adc {
        Some(a) => {
            let v = stationary_voltage_covariance(&circuit)?;
            let sigma = (0..v.nrows()).map(|i| v[(i, i)]).fold(0.0, f64::max).sqrt();
            let limit = a.range_sigmas * sigma;
            let levels = 1i64 << a.bits;
            Some(Adc { step: 2.0 * limit / levels as f64, limit, levels })
        }
        None => None,
    };
    if matches!(plan.noise, NoiseMode::Ideal) {
        circuit = circuit.with_noise_scale(plan.noise_level)?;
    }
    Ok(PreparedDevice {
        gain: compilation.readout_gain / plan.noise_level.sqrt(),
        observable: compilation.observable,
        compilation,
        circuit,
        adc,
    })
}

/// Raw-sample interval and the decorrelation stride (in raw samples).
pub fn sample_spacing(circuit: &CircuitParams, plan: &SamplingPlan) -> (f64, usize) {
    let tau = circuit.correlation_time();
    let interval = 1.0 / plan.sampling_rate.resolve(tau);
    let k =
        if plan.decorrelate { ((DECORRELATION_MULTIPLE * tau / interval) - 1e-9).ceil().max(1.0) as usize } else { 1 };
    (interval, k)
}

fn fastest_timescale(circuit: &CircuitParams) -> f64 {
    let sys = CircuitSystem::new(circuit);
    let rate = sys.drift().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    1.0 / rate
}

/// Runs one chain and returns `n` rows in target units.
pub fn run_chain(device: &PreparedDevice, plan: &SamplingPlan, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let circuit = &device.circuit;
    let d = circuit.dim();
    let tau = circuit.correlation_time();
    let (interval, k) = sample_spacing(circuit, plan);
    let (dt, substeps, mut noise): (f64, usize, Box<dyn NoiseSource>) = match &plan.noise {
        NoiseMode::Ideal => {
            let m = match plan.scheme {
                Scheme::Exact => 1,
                Scheme::EulerMaruyama => (interval * 50.0 / fastest_timescale(circuit)).ceil().max(1.0) as usize,
            };
            (interval / m as f64, m, Box::new(IdealGaussianSource::new(seed)))
        }
        NoiseMode::LfsrChain(cfg) => {
            let hold = 1.0 / cfg.bit_rate;
            let m = (interval / hold).round().max(1.0) as usize;
            let mut cfg = cfg.with_run_seed(seed);
            cfg.duty_cycle = plan.noise_level;
            (hold, m, Box::new(LfsrChainSource::new(&cfg, d)?))
        }
    };
    let stride = k * substeps;
    let cfg =
        TrajectoryConfig { dt, n_steps: n * stride, burn_in: plan.burn_in_multiple * tau, record_stride: stride, seed };
    let run = CircuitRun { scheme: plan.scheme, ..Default::default() };
    let rec = integrate_circuit(circuit, &SdeState::zeros(d), &cfg, run, noise.as_mut())?;
    let mut v = rec.voltages.values;
    if let Some(adc) = device.adc {
        v.apply(|x| *x = adc.apply(*x));
    }
    let mut out = match device.observable {
        Observable::Voltage => v,
        _ => v * circuit.maxwell().matrix(),
    };
    out *= device.gain;
    Ok(out)
}

pub(crate) fn run_chains<F>(plan: &SamplingPlan, d: usize, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, u64) -> Result<DMatrix<f64>> + Sync,
{
    let counts = plan.chain_counts();
    let parts: Vec<Result<DMatrix<f64>>> = if counts.len() == 1 {
        vec![f(counts[0], chain_seed(plan.seed, 0))]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = counts
                .iter()
                .enumerate()
                .map(|(c, &n)| {
                    let f = &f;
                    s.spawn(move || f(n, chain_seed(plan.seed, c)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(SpuError::Numerical("chain panicked".into()))))
                .collect()
        })
    };
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let total: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(total, d);
    let mut r0 = 0;
    for p in parts {
        out.view_mut((r0, 0), (p.nrows(), d)).copy_from(&p);
        r0 += p.nrows();
    }
    Ok(out)
}

/// Exact zero-mean draws from the target covariance.
pub fn digital_samples(covariance: &DMatrix<f64>, n: usize, seed: u64) -> DMatrix<f64> {
    let l = psd_factor(covariance);
    let d = covariance.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::<f64>::from_fn(d, n, |_, _| rand::Rng::sample(&mut rng, StandardNormal));
    (l * z).transpose()
}

/// Zero-mean samples whose population law is the target Gaussian.
pub fn sample_gaussian(target: &TargetSpec, plan: &SamplingPlan, backend: Backend) -> Result<SampleBatch> {
    plan.validate()?;
    ensure_symmetric(&target.matrix, 1e-12)?;
    ensure_positive_definite(&target.matrix)?;
    let d = target.dim();
    match backend {
        Backend::DigitalReference => {
            let cov = target.covariance_matrix()?;
            let values = run_chains(plan, d, |n, seed| Ok(digital_samples(&cov, n, seed)))?;
            let times = (0..values.nrows()).map(|k| k as f64).collect();
            let mut b = SampleBatch::new(times, values, 1.0, Observable::Target)?;
            b.meta = BatchMeta { seed: plan.seed, dt: 0.0, params: None };
            Ok(b)
        }
        Backend::EmulatedSpu => {
            let dev = prepare_device(target, plan)?;
            let values = run_chains(plan, d, |n, seed| run_chain(&dev, plan, n, seed))?;
            let (interval, k) = sample_spacing(&dev.circuit, plan);
            let spacing = interval * k as f64;
            let times = (0..values.nrows()).map(|r| (r + 1) as f64 * spacing).collect();
            let mut b = SampleBatch::new(times, values, 1.0 / spacing, Observable::Target)?;
            b.meta = BatchMeta { seed: plan.seed, dt: interval, params: Some(dev.circuit.clone()) };
            Ok(b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub n_samples: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    /// Sample covariance of the equilibrium voltages (exactly symmetric).
    pub estimate: DMatrix<f64>,
    pub exact: DMatrix<f64>,
    /// Relative Frobenius error against `exact` at log-spaced sample counts.
    pub error_series: Vec<ErrorPoint>,
}

impl InversionResult {
    pub fn final_error(&self) -> f64 {
        self.error_series.last().map(|p| p.error).unwrap_or(f64::NAN)
    }
}

/// Error of the running sample covariance at each count in `counts` (ascending).
pub fn covariance_error_series(
    values: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    counts: &[usize],
) -> Result<(DMatrix<f64>, Vec<ErrorPoint>)> {
    let d = values.ncols();
    let mut acc = CovarianceAccumulator::new(d);
    let mut row = vec![0.0; d];
    let mut series = Vec::with_capacity(counts.len());
    let mut next = counts.iter().copied().filter(|&c| c >= 2 && c <= values.nrows()).peekable();
    for r in 0..values.nrows() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = values[(r, j)];
        }
        acc.push(&row);
        while next.peek() == Some(&(r + 1)) {
            next.next();
            series.push(ErrorPoint { n_samples: r + 1, error: rel_frobenius(&acc.covariance()?, reference) });
        }
    }
    Ok((acc.covariance()?, series))
}

/// Estimates `A⁻¹` from equilibrium voltages of the device compiled with `𝐂 = kT·A`.
pub fn invert_matrix(a: &DMatrix<f64>, plan: &SamplingPlan) -> Result<InversionResult> {
    ensure_symmetric(a, 1e-12)?;
    ensure_positive_definite(a)?;
    if plan.n_samples < 2 {
        return Err(invalid("inversion needs at least two samples"));
    }
    let target = TargetSpec::precision(a.clone())?;
    let batch = sample_gaussian(&target, plan, Backend::EmulatedSpu)?;
    let exact = spd_inverse(a)?;
    let n = batch.len();
    let counts = log_spaced_counts(10.min(n).max(2), n, 16);
    let (estimate, error_series) = covariance_error_series(&batch.values, &exact, &counts)?;
    Ok(InversionResult { estimate, exact, error_series })
}
