use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::metrics::{average_relative_error_per_element, moment_errors_at};
use super::plan::{SamplingPlan, SamplingRate};
use super::sampling::{prepare_device, run_chain, run_chains, sample_gaussian, sample_spacing, Backend};
use crate::compiler::TargetSpec;
use crate::error::{invalid, Result};
use crate::stats::sample_covariance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    NoiseLevel,
    /// Grid values are in the units of `plan.sampling_rate`.
    SamplingRate,
}

/// How much data each grid point gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyBudget {
    /// Fixed sample counts.
    Samples(Vec<usize>),
    /// Fixed acquisition windows, in correlation times when the plan's rate is
    /// given per correlation time, else in device time units.
    Window(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub axis_value: f64,
    pub n_samples: usize,
    /// Acquisition time covered by the samples, in the units of the budget.
    pub window: f64,
    pub covariance_error: f64,
    pub per_element_error: f64,
    pub skewness_error: f64,
    pub kurtosis_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub axis: StudyAxis,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn rows_for(&self, axis_value: f64) -> impl Iterator<Item = &StudyRow> {
        self.rows.iter().filter(move |r| r.axis_value == axis_value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let name = match self.axis {
            StudyAxis::NoiseLevel => "noise_level",
            StudyAxis::SamplingRate => "sampling_rate",
        };
        writeln!(w, "{name},n_samples,window,cov_err,cov_err_per_element,skew_err,kurt_err")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{:e},{:e}",
                r.axis_value,
                r.n_samples,
                r.window,
                r.covariance_error,
                r.per_element_error,
                r.skewness_error,
                r.kurtosis_error
            )?;
        }
        Ok(())
    }
}

fn rows_from(
    values: &DMatrix<f64>,
    cov: &DMatrix<f64>,
    axis_value: f64,
    spacing: f64,
    counts: &[usize],
) -> Result<Vec<StudyRow>> {
    let report = moment_errors_at(values, cov, counts)?;
    let mut rows = Vec::with_capacity(counts.len());
    for (k, &n) in report.counts.iter().enumerate() {
        let est = sample_covariance(&values.rows(0, n).into_owned())?;
        rows.push(StudyRow {
            axis_value,
            n_samples: n,
            window: n as f64 * spacing,
            covariance_error: report.covariance_error[k],
            per_element_error: average_relative_error_per_element(&est, cov)?,
            skewness_error: report.skewness_error[k],
            kurtosis_error: report.kurtosis_error[k],
        });
    }
    Ok(rows)
}

/// Upper bound on raw samples a single study may request.
pub const MAX_STUDY_SAMPLES: usize = 200_000_000;

fn time_unit(plan: &SamplingPlan, tau: f64) -> f64 {
    match plan.sampling_rate {
        SamplingRate::Hz(_) => 1.0,
        SamplingRate::PerCorrelationTime(_) => tau,
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_STUDY_SAMPLES {
        return Err(invalid(format!("study budget needs {n} samples, above the limit of {MAX_STUDY_SAMPLES}")));
    }
    Ok(())
}

fn counts_for(budget: &StudyBudget, spacing: f64) -> Vec<usize> {
    match budget {
        StudyBudget::Samples(c) => c.clone(),
        StudyBudget::Window(w) => w.iter().map(|&t| (t / spacing + 1e-9).floor() as usize).collect(),
    }
}

fn validate_budget(budget: &StudyBudget) -> Result<()> {
    match budget {
        StudyBudget::Samples(c) if c.is_empty() || c.iter().any(|&n| n < 4) => {
            Err(invalid("sample budgets must be non-empty and at least 4"))
        }
        StudyBudget::Window(w) if w.is_empty() || w.iter().any(|&t| !(t > 0.0)) => {
            Err(invalid("window budgets must be non-empty and positive"))
        }
        _ => Ok(()),
    }
}

/// Error table over a noise-level or sampling-rate grid.
///
/// Noise levels each get an independent run of `plan`. Sampling rates share
/// one correlated trajectory recorded at the fastest rate in the grid and
/// subsampled to each slower rate, so `plan.decorrelate` is ignored there.
pub fn parameter_study(
    axis: StudyAxis,
    grid: &[f64],
    target: &TargetSpec,
    plan: &SamplingPlan,
    budget: &StudyBudget,
) -> Result<StudyTable> {
    if grid.is_empty() {
        return Err(invalid("parameter grid is empty"));
    }
    validate_budget(budget)?;
    let cov = target.covariance_matrix()?;
    let mut rows = Vec::new();
    match axis {
        StudyAxis::NoiseLevel => {
            for &level in grid {
                let p = SamplingPlan { noise_level: level, ..plan.clone() };
                let dev = prepare_device(target, &p)?;
                let (interval, k) = sample_spacing(&dev.circuit, &p);
                let spacing = interval * k as f64 / time_unit(&p, dev.circuit.correlation_time());
                let counts = counts_for(budget, spacing);
                let n = counts.iter().copied().max().unwrap_or(0).max(4);
                check_size(n.saturating_mul(k))?;
                let values = sample_gaussian(target, &SamplingPlan { n_samples: n, ..p }, Backend::EmulatedSpu)?.values;
                rows.extend(rows_from(&values, &cov, level, spacing, &counts)?);
            }
        }
        StudyAxis::SamplingRate => {
            if grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return Err(invalid("sampling rates must be positive"));
            }
            let fastest = grid.iter().copied().fold(0.0, f64::max);
            let with_rate = |r: f64| match plan.sampling_rate {
                SamplingRate::Hz(_) => SamplingRate::Hz(r),
                SamplingRate::PerCorrelationTime(_) => SamplingRate::PerCorrelationTime(r),
            };
            let base = SamplingPlan { sampling_rate: with_rate(fastest), decorrelate: false, ..plan.clone() };
            let dev = prepare_device(target, &base)?;
            let (base_interval, _) = sample_spacing(&dev.circuit, &base);
            let base_interval = base_interval / time_unit(&base, dev.circuit.correlation_time());
            let factors: Vec<usize> = grid.iter().map(|&r| (fastest / r).round().max(1.0) as usize).collect();
            let needed = grid
                .iter()
                .zip(&factors)
                .map(|(_, &f)| counts_for(budget, base_interval * f as f64).into_iter().max().unwrap_or(0) * f)
                .max()
                .unwrap_or(0)
                .max(4);
            check_size(needed)?;
            let raw = run_chains(&SamplingPlan { n_samples: needed, ..base.clone() }, target.dim(), |n, seed| {
                run_chain(&dev, &base, n, seed)
            })?;
            for (&r, &f) in grid.iter().zip(&factors) {
                let m = raw.nrows().div_ceil(f);
                let sub = DMatrix::from_fn(m, raw.ncols(), |i, j| raw[(i * f, j)]);
                let spacing = base_interval * f as f64;
                rows.extend(rows_from(&sub, &cov, r, spacing, &counts_for(budget, spacing))?);
            }
        }
    }
    Ok(StudyTable { axis, rows })
}
