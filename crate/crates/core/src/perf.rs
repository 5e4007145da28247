//! Time and energy cost model of the device against a cubic digital baseline.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SpuError};

/// Device cost constants. The stage weights are modeling assumptions and
/// every field can be overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpuCostParams {
    /// Physical relaxation time of a cell, seconds.
    pub time_constant: f64,
    /// Conversions per second per ADC channel.
    pub adc_rate: f64,
    /// Watts per cell, dominated by the ADC.
    pub power_per_cell: f64,
    pub precision_bits: u32,
    /// Seconds to compute one capacitor-array element.
    pub compile_time_per_element: f64,
    /// Seconds to load one element into the array.
    pub load_time_per_element: f64,
    /// Spacing between recorded samples, in time constants.
    pub sample_spacing: f64,
    /// Fixed per-run overhead, seconds.
    pub fixed_overhead: f64,
}

impl Default for SpuCostParams {
    fn default() -> Self {
        Self {
            time_constant: 1e-6,
            adc_rate: 1e7,
            power_per_cell: 5e-6,
            precision_bits: 16,
            compile_time_per_element: 1e-8,
            load_time_per_element: 3.2e-7,
            sample_spacing: 5.0,
            fixed_overhead: 0.0,
        }
    }
}

impl SpuCostParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.time_constant, self.adc_rate, self.power_per_cell, self.sample_spacing];
        let nonneg = [self.compile_time_per_element, self.load_time_per_element, self.fixed_overhead];
        if !pos.iter().all(|v| *v > 0.0 && v.is_finite()) || !nonneg.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return Err(invalid("device cost constants must be positive"));
        }
        if self.precision_bits == 0 {
            return Err(invalid("precision must be at least one bit"));
        }
        Ok(())
    }
}

/// Stage breakdown of [`spu_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuTimeBreakdown {
    pub overhead: f64,
    pub compile: f64,
    pub load: f64,
    pub readout: f64,
    pub dynamics: f64,
}

impl SpuTimeBreakdown {
    pub fn total(&self) -> f64 {
        self.overhead + self.compile + self.load + self.readout + self.dynamics
    }
}

pub fn spu_time_breakdown(d: usize, n_samples: usize, p: &SpuCostParams) -> SpuTimeBreakdown {
    let (d, n) = (d as f64, n_samples as f64);
    // one ADC channel per cell
    SpuTimeBreakdown {
        overhead: p.fixed_overhead,
        compile: p.compile_time_per_element * d * d,
        load: p.load_time_per_element * d * d,
        readout: n * d / (d * p.adc_rate),
        dynamics: n * p.sample_spacing * p.time_constant,
    }
}

pub fn spu_time(d: usize, n_samples: usize, p: &SpuCostParams) -> f64 {
    spu_time_breakdown(d, n_samples, p).total()
}

pub fn spu_energy(d: usize, n_samples: usize, p: &SpuCostParams) -> f64 {
    d as f64 * p.power_per_cell * spu_time(d, n_samples, p)
}

/// Digital Cholesky-sampling cost: `t = t₀ + c₃ d³ + c₂ n d²`, at `power` watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalCostParams {
    pub overhead: f64,
    pub cubic: f64,
    /// Seconds per sample per d².
    pub quadratic_per_sample: f64,
    pub power: f64,
}

/// One measured row of a digital baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub d: usize,
    pub n_samples: usize,
    pub time: f64,
    pub energy: f64,
}

/// Reads `d,n_samples,time_s,energy_j` rows; a leading header line is skipped.
pub fn read_baseline<R: BufRead>(r: R) -> Result<Vec<BaselineRow>> {
    let mut rows = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if k == 0 && f.first().is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        if f.len() != 4 {
            return Err(SpuError::Malformed(format!("baseline line {}: expected 4 fields", k + 1)));
        }
        let bad = |what: &str| SpuError::Malformed(format!("baseline line {}: bad {what}", k + 1));
        let row = BaselineRow {
            d: f[0].parse().map_err(|_| bad("d"))?,
            n_samples: f[1].parse().map_err(|_| bad("n_samples"))?,
            time: f[2].parse().map_err(|_| bad("time"))?,
            energy: f[3].parse().map_err(|_| bad("energy"))?,
        };
        if row.d == 0 || !(row.time > 0.0) || !(row.energy >= 0.0) {
            return Err(bad("value"));
        }
        rows.push(row);
    }
    Ok(rows)
}

impl DigitalCostParams {
    pub fn time(&self, d: usize, n_samples: usize) -> f64 {
        let d = d as f64;
        self.overhead + self.cubic * d * d * d + self.quadratic_per_sample * n_samples as f64 * d * d
    }

    pub fn energy(&self, d: usize, n_samples: usize) -> f64 {
        self.power * self.time(d, n_samples)
    }

    /// Non-negative least squares on relative time residuals; power is the
    /// mean of energy over time.
    pub fn fit(rows: &[BaselineRow]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(invalid("a digital baseline needs at least three rows"));
        }
        let basis = |r: &BaselineRow| {
            let d = r.d as f64;
            [1.0, d * d * d, r.n_samples as f64 * d * d]
        };
        let mut best: Option<(f64, [f64; 3])> = None;
        for mask in 1u8..8 {
            let cols: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
            let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| basis(&rows[i])[cols[j]] / rows[i].time);
            let b = DVector::from_element(rows.len(), 1.0);
            let Ok(sol) = a.clone().svd(true, true).solve(&b, 1e-300) else { continue };
            if sol.iter().any(|v| *v < 0.0) {
                continue;
            }
            let res = (&a * &sol - &b).norm_squared();
            if best.is_none_or(|(r, _)| res < r) {
                let mut c = [0.0; 3];
                for (j, &k) in cols.iter().enumerate() {
                    c[k] = sol[j];
                }
                best = Some((res, c));
            }
        }
        let (_, c) = best.ok_or_else(|| SpuError::Numerical("no non-negative baseline fit".into()))?;
        let power = rows.iter().map(|r| r.energy / r.time).sum::<f64>() / rows.len() as f64;
        Ok(Self { overhead: c[0], cubic: c[1], quadratic_per_sample: c[2], power })
    }
}

/// Smallest `d` in `[1, max_d]` from which the device is faster, assuming the
/// time difference changes sign at most once.
pub fn crossover(spu: &SpuCostParams, digital: &DigitalCostParams, n_samples: usize, max_d: usize) -> Option<usize> {
    first_win(|d| spu_time(d, n_samples, spu) < digital.time(d, n_samples), max_d)
}

pub fn energy_crossover(
    spu: &SpuCostParams,
    digital: &DigitalCostParams,
    n_samples: usize,
    max_d: usize,
) -> Option<usize> {
    first_win(|d| spu_energy(d, n_samples, spu) < digital.energy(d, n_samples), max_d)
}

fn first_win(wins: impl Fn(usize) -> bool, max_d: usize) -> Option<usize> {
    if max_d == 0 || !wins(max_d) {
        return None;
    }
    if wins(1) {
        return Some(1);
    }
    let (mut lo, mut hi) = (1, max_d);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if wins(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

pub const DEFAULT_MAX_CROSSOVER_D: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfRow {
    pub d: usize,
    pub spu_time: f64,
    pub digital_time: f64,
    pub spu_energy: f64,
    pub digital_energy: f64,
}

pub fn perf_curve(ds: &[usize], n_samples: usize, spu: &SpuCostParams, digital: &DigitalCostParams) -> Vec<PerfRow> {
    ds.iter()
        .map(|&d| PerfRow {
            d,
            spu_time: spu_time(d, n_samples, spu),
            digital_time: digital.time(d, n_samples),
            spu_energy: spu_energy(d, n_samples, spu),
            digital_energy: digital.energy(d, n_samples),
        })
        .collect()
}

pub fn write_perf_csv<W: Write>(rows: &[PerfRow], mut w: W) -> Result<()> {
    writeln!(w, "d,spu_time,digital_time,spu_energy,digital_energy")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{:e},{:e}", r.d, r.spu_time, r.digital_time, r.spu_energy, r.digital_energy)?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln d`.
pub fn loglog_fit_slope(ds: &[usize], ys: &[f64]) -> f64 {
    let x: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
    crate::stats::loglog_slope(&x, ys)
}

/// Integer dimensions spaced evenly in log between `lo` and `hi`.
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    crate::linalg::log_spaced_counts(lo, hi, points)
}
