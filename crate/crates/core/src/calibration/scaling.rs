use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::circuit::loading_variance;
use crate::error::{invalid, Result, SpuError};
use crate::stats::sample_covariance;

/// Per-cell multipliers that equalize the baseline variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalingVector {
    values: Vec<f64>,
}

impl ScalingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(invalid("scaling entries must be positive and finite"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `sᵢ = 1/√Σ̂ᵢᵢ` from a run of the identity configuration.
pub fn compute_scaling_vector(identity_batch: &SampleBatch) -> Result<ScalingVector> {
    let cov = sample_covariance(&identity_batch.values)?;
    let mut s = Vec::with_capacity(cov.nrows());
    for i in 0..cov.nrows() {
        let v = cov[(i, i)];
        if !(v > 0.0) {
            return Err(SpuError::InvalidParameter(format!("cell {i} shows no variance; it may be dead")));
        }
        s.push(1.0 / v.sqrt());
    }
    ScalingVector::new(s)
}

/// Multiplies column `i` by `sᵢ`.
pub fn apply_scaling(batch: &SampleBatch, s: &ScalingVector) -> Result<SampleBatch> {
    if s.len() != batch.dim() {
        return Err(SpuError::Dimension(format!("{} scaling entries for {} columns", s.len(), batch.dim())));
    }
    let mut out = batch.clone();
    for (j, mut col) in out.values.column_iter_mut().enumerate() {
        col *= s.values[j];
    }
    Ok(out)
}

/// Least-squares fit of the parallel-loading variance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingFit {
    pub a: f64,
    pub b: f64,
    /// RMS relative deviation of the data from the fitted curve.
    pub residual: f64,
    /// `b` ran off to the flat-variance limit.
    pub degenerate: bool,
    /// The residual exceeds [`LOADING_RESIDUAL_LIMIT`].
    pub poor_fit: bool,
}

pub const LOADING_RESIDUAL_LIMIT: f64 = 0.05;
const FLAT_RATIO: f64 = 1e6;

impl LoadingFit {
    pub fn predict(&self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|i| loading_variance(i, self.a, self.b, n)).collect()
    }
}

struct LoadingProblem<'a> {
    v: &'a [f64],
}

impl LoadingProblem<'_> {
    fn residual(&self, a: f64, b: f64) -> f64 {
        let n = self.v.len();
        let ss: f64 =
            self.v.iter().enumerate().map(|(i, &v)| (a * b / (b + (n - 1 - i) as f64 * a) / v - 1.0).powi(2)).sum();
        (ss / n as f64).sqrt()
    }
}

impl CostFunction for LoadingProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        Ok(self.residual(p[0].exp(), p[1].exp()).powi(2))
    }
}

/// Fits `Σᵢᵢ = ab/(b + (n−1−i)a)` to per-cell variances. The linear form
/// `1/Σᵢᵢ = 1/a + (n−1−i)/b` seeds a relative least-squares refinement.
pub fn fit_loading_model(variances: &[f64]) -> Result<LoadingFit> {
    let n = variances.len();
    if n < 2 {
        return Err(invalid("loading fit needs at least two cells"));
    }
    if !variances.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(invalid("variances must be positive"));
    }
    let xs: Vec<f64> = (0..n).map(|i| (n - 1 - i) as f64).collect();
    let ys: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let mut alpha = my - slope * mx;
    if !(alpha > 0.0) {
        alpha = ys.iter().copied().fold(f64::INFINITY, f64::min);
    }
    let a0 = 1.0 / alpha;
    let b0 = if slope > a0.recip() / FLAT_RATIO { 1.0 / slope } else { a0 * FLAT_RATIO };
    let problem = LoadingProblem { v: variances };
    let x0 = vec![a0.ln(), b0.ln()];
    let simplex = vec![x0.clone(), vec![x0[0] + 0.05, x0[1]], vec![x0[0], x0[1] + 0.05]];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-16).map_err(|e| SpuError::Numerical(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|st| st.max_iters(2000))
        .run()
        .map_err(|e| SpuError::Numerical(e.to_string()))?;
    let best = res.state.get_best_param().cloned().unwrap_or(x0);
    let (mut a, mut b) = (best[0].exp(), best[1].exp());
    let problem = LoadingProblem { v: variances };
    if problem.residual(a, b) > problem.residual(a0, b0) {
        (a, b) = (a0, b0);
    }
    let degenerate = b / a >= FLAT_RATIO * 0.999;
    let residual = problem.residual(a, b);
    Ok(LoadingFit { a, b, residual, degenerate, poor_fit: residual > LOADING_RESIDUAL_LIMIT })
}
