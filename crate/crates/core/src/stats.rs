//! Sample statistics used by the samplers and the test harnesses.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SpuError};
use crate::linalg::symmetrize;

/// One-pass (Welford) mean and covariance accumulator.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    delta: DVector<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: DVector::zeros(dim), m2: DMatrix::zeros(dim, dim), delta: DVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        self.n += 1;
        let inv_n = 1.0 / self.n as f64;
        for i in 0..d {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv_n;
        }
        for j in 0..d {
            let post_j = x[j] - self.mean[j];
            for i in j..d {
                self.m2[(i, j)] += self.delta[i] * post_j;
            }
        }
    }

    /// Folds in another accumulator (pairwise update of mean and scatter).
    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        debug_assert_eq!(self.dim(), other.dim());
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        let d = self.dim();
        for j in 0..d {
            for i in j..d {
                self.m2[(i, j)] += other.m2[(i, j)] + delta[i] * delta[j] * na * nb / n;
            }
        }
        self.mean += &delta * (nb / n);
        self.n += other.n;
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased covariance (N − 1 denominator), mean subtracted.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.n < 2 {
            return Err(SpuError::InvalidParameter("covariance needs at least two samples".into()));
        }
        let d = self.dim();
        let mut c = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let v = self.m2[(i, j)] / (self.n - 1) as f64;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        Ok(c)
    }
}

/// Unbiased sample covariance of the rows of `samples` (N × d).
pub fn sample_covariance(samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut acc = CovarianceAccumulator::new(samples.ncols());
    let mut row = vec![0.0; samples.ncols()];
    for r in 0..samples.nrows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = samples[(r, c)];
        }
        acc.push(&row);
    }
    acc.covariance().map(|c| symmetrize(&c))
}

/// Per-column sample skewness and excess kurtosis.
///
/// A column with zero variance reports skewness 0 and excess kurtosis −3.
pub fn marginal_moments(samples: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = samples.nrows();
    if n < 4 {
        return Err(SpuError::InvalidParameter("higher moments need at least four samples".into()));
    }
    let mut skew = Vec::with_capacity(samples.ncols());
    let mut kurt = Vec::with_capacity(samples.ncols());
    for col in samples.column_iter() {
        let mean = col.mean();
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in col.iter() {
            let dx = x - mean;
            let d2 = dx * dx;
            m2 += d2;
            m3 += d2 * dx;
            m4 += d2 * d2;
        }
        let nf = n as f64;
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        // rounding noise of a constant column
        let scale = col.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if m2 <= (1e-12 * scale).powi(2).max(f64::MIN_POSITIVE) {
            skew.push(0.0);
            kurt.push(-3.0);
        } else {
            skew.push(m3 / m2.powf(1.5));
            kurt.push(m4 / (m2 * m2) - 3.0);
        }
    }
    Ok((skew, kurt))
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&ranks(a), &ranks(b))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Normalized autocorrelation of a scalar series for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    (0..=max_lag.min(n - 1))
        .map(|lag| {
            let s: f64 = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
            s / n as f64 / c0
        })
        .collect()
}

/// One-sample Kolmogorov–Smirnov test against `N(mean, sd²)`.
/// Returns `(statistic, asymptotic p-value)`.
pub fn ks_normal(samples: &[f64], mean: f64, sd: f64) -> (f64, f64) {
    let normal = Normal::new(mean, sd).expect("valid normal");
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = normal.cdf(*v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    (d, kolmogorov_sf(d * (n.sqrt() + 0.12 + 0.11 / n.sqrt())))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("valid normal").cdf(x)
}
