use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::compiler::TargetSpec;
use crate::error::{invalid, Result, SpuError};
use crate::linalg::{log_spaced_counts, rel_frobenius};
use crate::stats::{marginal_moments, sample_covariance};

/// Covariance, skewness and kurtosis errors as series over sample count.
///
/// Skewness and kurtosis errors are the Euclidean norms of the per-cell
/// marginal standardized skewness and excess kurtosis, whose Gaussian values
/// are zero. The full third and fourth moment tensors are not formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub counts: Vec<usize>,
    pub covariance_error: Vec<f64>,
    pub skewness_error: Vec<f64>,
    pub kurtosis_error: Vec<f64>,
}

impl MomentReport {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(covariance, skewness, kurtosis)` errors at the largest count.
    pub fn last(&self) -> Option<(f64, f64, f64)> {
        let k = self.len().checked_sub(1)?;
        Some((self.covariance_error[k], self.skewness_error[k], self.kurtosis_error[k]))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n_samples,cov_err,skew_err,kurt_err")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{:e},{:e},{:e}",
                self.counts[k], self.covariance_error[k], self.skewness_error[k], self.kurtosis_error[k]
            )?;
        }
        Ok(())
    }
}

/// Moment errors of the first `n` rows, for every `n` in `counts`.
pub fn moment_errors_at(values: &DMatrix<f64>, covariance: &DMatrix<f64>, counts: &[usize]) -> Result<MomentReport> {
    if values.ncols() != covariance.nrows() {
        return Err(SpuError::Dimension(format!(
            "samples have {} columns, target is {}x{}",
            values.ncols(),
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let mut r =
        MomentReport { counts: vec![], covariance_error: vec![], skewness_error: vec![], kurtosis_error: vec![] };
    for &n in counts {
        if n < 4 {
            return Err(invalid("kurtosis is undefined for fewer than four samples"));
        }
        if n > values.nrows() {
            return Err(invalid(format!("count {n} exceeds the {} available samples", values.nrows())));
        }
        let head = values.rows(0, n).into_owned();
        let (skew, kurt) = marginal_moments(&head)?;
        r.counts.push(n);
        r.covariance_error.push(rel_frobenius(&sample_covariance(&head)?, covariance));
        r.skewness_error.push(skew.iter().map(|s| s * s).sum::<f64>().sqrt());
        r.kurtosis_error.push(kurt.iter().map(|k| k * k).sum::<f64>().sqrt());
    }
    Ok(r)
}

/// Moment errors of a batch against its target at twelve log-spaced counts.
pub fn moment_errors(batch: &SampleBatch, target: &TargetSpec) -> Result<MomentReport> {
    let n = batch.len();
    if n < 4 {
        return Err(invalid("kurtosis is undefined for fewer than four samples"));
    }
    let cov = target.covariance_matrix()?;
    moment_errors_at(&batch.values, &cov, &log_spaced_counts(16.min(n), n, 12))
}

/// Relative Frobenius error divided by the dimension.
pub fn average_relative_error_per_element(estimate: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != reference.shape() {
        return Err(SpuError::Dimension("matrices differ in shape".into()));
    }
    Ok(rel_frobenius(estimate, reference) / reference.nrows() as f64)
}
