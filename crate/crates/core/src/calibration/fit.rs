use std::sync::atomic::{AtomicUsize, Ordering};

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::circuit::{CellParams, CircuitParams, COUPLING_UNIT_NF};
use crate::error::{invalid, Result, SpuError};
use crate::langevin::stationary_voltage_covariance;

use super::model::cell_spectrum;
use super::spectrum::{welch, PowerSpectrum};

/// Spectrum and variance of one cell's voltage record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeasurement {
    pub spectrum: PowerSpectrum,
    pub variance: f64,
    pub sample_rate: f64,
}

impl CellMeasurement {
    pub fn from_samples(x: &[f64], sample_rate: f64, segment_length: usize, overlap: f64) -> Result<Self> {
        let spectrum = welch(x, sample_rate, segment_length, overlap)?;
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let variance = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self { spectrum, variance, sample_rate })
    }

    pub fn from_batch(batch: &SampleBatch, column: usize, segment_length: usize, overlap: f64) -> Result<Self> {
        if column >= batch.dim() {
            return Err(SpuError::Dimension(format!("column {column} out of range for {} columns", batch.dim())));
        }
        let x: Vec<f64> = batch.values.column(column).iter().copied().collect();
        Self::from_samples(&x, batch.sample_rate, segment_length, overlap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Random starts drawn inside the bounds, in addition to the initial guess.
    pub restarts: usize,
    pub lower_factor: f64,
    pub upper_factor: f64,
    pub max_iterations: u64,
    pub seed: u64,
    /// Hold C at this value and fit only L, R and κ₀.
    pub fixed_capacitance: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            lower_factor: 0.1,
            upper_factor: 10.0,
            max_iterations: 3000,
            seed: 0,
            fixed_capacitance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: CellParams,
    pub cost: f64,
    pub spectrum_cost: f64,
    pub variance_cost: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Weighted log-spectrum and relative-variance misfit of a single-cell model.
#[derive(Debug, Clone)]
pub struct CellFitCost {
    frequencies: Vec<f64>,
    log_density: Vec<f64>,
    variance: f64,
    sample_rate: f64,
    spectrum_weight: f64,
    variance_weight: f64,
}

impl CellFitCost {
    /// Both weights are chosen so that each term equals one at `reference`.
    pub fn new(measurement: &CellMeasurement, reference: &CellParams) -> Result<Self> {
        let (frequencies, log_density): (Vec<f64>, Vec<f64>) = measurement
            .spectrum
            .frequencies
            .iter()
            .zip(&measurement.spectrum.density)
            .filter(|(f, s)| **f > 0.0 && **s > 0.0)
            .map(|(f, s)| (*f, s.ln()))
            .unzip();
        if frequencies.is_empty() {
            return Err(invalid("measured spectrum has no positive bins"));
        }
        if !(measurement.variance > 0.0) {
            return Err(invalid("measured variance must be positive"));
        }
        let mut cost = Self {
            frequencies,
            log_density,
            variance: measurement.variance,
            sample_rate: measurement.sample_rate,
            spectrum_weight: 1.0,
            variance_weight: 1.0,
        };
        let (s, v) = cost.terms(reference)?;
        cost.spectrum_weight = 1.0 / s.max(1e-6);
        cost.variance_weight = 1.0 / v.max(1e-4);
        Ok(cost)
    }

    /// Unweighted spectrum and variance terms.
    pub fn terms(&self, cell: &CellParams) -> Result<(f64, f64)> {
        let model = cell_spectrum(cell, self.sample_rate, &self.frequencies)?;
        let mut s = 0.0;
        for (m, l) in model.iter().zip(&self.log_density) {
            s += (m.max(f64::MIN_POSITIVE).ln() - l).powi(2);
        }
        s /= model.len() as f64;
        let v = ((cell.voltage_variance() - self.variance) / self.variance).powi(2);
        Ok((s, v))
    }

    /// Total cost and its weighted spectrum and variance parts.
    pub fn evaluate(&self, cell: &CellParams) -> Result<(f64, f64, f64)> {
        let (s, v) = self.terms(cell)?;
        let (s, v) = (s * self.spectrum_weight, v * self.variance_weight);
        Ok((s + v, s, v))
    }
}

struct LogProblem<'a> {
    cost: &'a CellFitCost,
    init: CellParams,
    fixed_c: Option<f64>,
    lo: f64,
    hi: f64,
    calls: &'a AtomicUsize,
}

impl LogProblem<'_> {
    fn cell(&self, theta: &[f64]) -> CellParams {
        let t = |k: usize| theta[k].clamp(self.lo, self.hi).exp();
        CellParams {
            inductance: self.init.inductance * t(0),
            resistance: self.init.resistance * t(1),
            noise_psd: self.init.noise_psd * t(2),
            capacitance: self.fixed_c.unwrap_or_else(|| self.init.capacitance * t(3)),
        }
    }
}

impl CostFunction for LogProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let excess: f64 = theta.iter().map(|t| (t - t.clamp(self.lo, self.hi)).powi(2)).sum();
        let c = self.cost.evaluate(&self.cell(theta)).map(|c| c.0).unwrap_or(f64::INFINITY);
        Ok(c + 1e3 * excess)
    }
}

/// Fits L, R, κ₀ and C of one cell by Nelder–Mead in log space, from the
/// initial guess and from random starts inside `[lower, upper] × init`.
pub fn fit_cell_params(measurement: &CellMeasurement, init: &CellParams, options: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    if !(options.lower_factor > 0.0 && options.lower_factor <= 1.0 && options.upper_factor >= 1.0) {
        return Err(invalid("bounds must bracket the initial guess"));
    }
    if let Some(c) = options.fixed_capacitance {
        if !(c > 0.0) {
            return Err(invalid("fixed capacitance must be positive"));
        }
    }
    let mut reference = *init;
    if let Some(c) = options.fixed_capacitance {
        reference.capacitance = c;
    }
    let cost = CellFitCost::new(measurement, &reference)?;
    let (lo, hi) = (options.lower_factor.ln(), options.upper_factor.ln());
    let dim = if options.fixed_capacitance.is_some() { 3 } else { 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![vec![0.0; dim]];
    for _ in 0..options.restarts {
        starts.push((0..dim).map(|_| rng.random_range(lo..=hi)).collect());
    }
    let calls = AtomicUsize::new(0);
    let runs: Vec<Result<(Vec<f64>, f64, bool)>> = std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .iter()
            .map(|x0| {
                let problem =
                    LogProblem { cost: &cost, init: *init, fixed_c: options.fixed_capacitance, lo, hi, calls: &calls };
                s.spawn(move || run_simplex(problem, x0, options.max_iterations))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SpuError::Numerical("fit panicked".into()))))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let (theta, _, converged) = runs.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one start");
    let problem = LogProblem { cost: &cost, init: *init, fixed_c: options.fixed_capacitance, lo, hi, calls: &calls };
    let params = problem.cell(&theta);
    let (total, s, v) = cost.evaluate(&params)?;
    if !converged {
        log::warn!("spectroscopy fit stopped before converging");
    }
    Ok(FitResult {
        params,
        cost: total,
        spectrum_cost: s,
        variance_cost: v,
        converged,
        evaluations: calls.load(Ordering::Relaxed),
    })
}

fn run_simplex(problem: LogProblem<'_>, x0: &[f64], max_iterations: u64) -> Result<(Vec<f64>, f64, bool)> {
    let mut simplex = vec![x0.to_vec()];
    for k in 0..x0.len() {
        let mut v = x0.to_vec();
        v[k] += if v[k] > 0.0 { -0.3 } else { 0.3 };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-10).map_err(|e| SpuError::Numerical(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|st| st.max_iters(max_iterations))
        .run()
        .map_err(|e| SpuError::Numerical(e.to_string()))?;
    let converged =
        matches!(res.state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    let best = res.state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
    Ok((best, res.state.get_best_cost(), converged))
}

/// Misfit between a modeled and a measured covariance for the coupling fit.
pub trait CouplingPenalty: Sync {
    fn penalty(&self, model: &DMatrix<f64>, measured: &DMatrix<f64>) -> f64;
}

/// Squared off-diagonal covariance residual, relative to the measured
/// diagonal. An interpretation; supply another penalty to change the fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct CovarianceResidualPenalty;

impl CouplingPenalty for CovarianceResidualPenalty {
    fn penalty(&self, model: &DMatrix<f64>, measured: &DMatrix<f64>) -> f64 {
        let d = measured.nrows();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            den += measured[(i, i)].powi(2);
            for j in 0..d {
                if i != j {
                    num += (model[(i, j)] - measured[(i, j)]).powi(2);
                }
            }
        }
        num / den.max(f64::MIN_POSITIVE)
    }
}

/// Scalar multiplier on the nominal coupling capacitors that best explains
/// `measured`, given fitted cells and the switch levels used for the run.
pub fn fit_coupling_multiplier(
    cells: &[CellParams],
    levels: &DMatrix<i8>,
    measured: &DMatrix<f64>,
    penalty: &dyn CouplingPenalty,
) -> Result<f64> {
    let d = cells.len();
    if levels.shape() != (d, d) || measured.shape() != (d, d) {
        return Err(SpuError::Dimension("coupling fit inputs disagree in size".into()));
    }
    struct Problem<'a> {
        cells: &'a [CellParams],
        levels: &'a DMatrix<i8>,
        measured: &'a DMatrix<f64>,
        penalty: &'a dyn CouplingPenalty,
    }
    impl CostFunction for Problem<'_> {
        type Param = f64;
        type Output = f64;
        fn cost(&self, m: &f64) -> std::result::Result<f64, ArgminError> {
            let coupling = self.levels.map(|l| l as f64 * COUPLING_UNIT_NF * 1e-9 * m);
            let model = CircuitParams::continuous(self.cells.to_vec(), coupling)
                .and_then(|p| stationary_voltage_covariance(&p));
            Ok(model.map(|c| self.penalty.penalty(&c, self.measured)).unwrap_or(f64::INFINITY))
        }
    }
    let res = Executor::new(Problem { cells, levels, measured, penalty }, BrentOpt::new(0.0, 2.0))
        .configure(|st| st.max_iters(200))
        .run()
        .map_err(|e| SpuError::Numerical(e.to_string()))?;
    res.state.get_best_param().copied().ok_or_else(|| SpuError::Numerical("coupling fit produced no estimate".into()))
}
