use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{CellParams, CircuitParams, COUPLING_LEVELS, COUPLING_UNIT_NF};
use crate::error::{invalid, Result, SpuError};
use crate::noise::splitmix64;

use super::model::{record_voltages, sampled_voltage_spectrum, READOUT_RATE};
use super::spectrum::{welch, PowerSpectrum};

/// Physical defect injected into the emulated board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    /// The coupling switch between two cells has no effect.
    DeadCoupling {
        a: usize,
        b: usize,
    },
    /// The cell's noise source is silent.
    DeadCell {
        cell: usize,
    },
    CapacitanceShift {
        cell: usize,
        factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultScanConfig {
    pub n_samples: usize,
    pub sample_rate: f64,
    pub segment_length: usize,
    pub overlap: f64,
    /// Minimum peak height over the median density for a peak to count.
    pub prominence_db: f64,
    /// A present peak this far below the expected height is weak.
    pub weak_db: f64,
    /// Relative peak-frequency deviation that counts as shifted.
    pub frequency_tolerance: f64,
    /// White readout noise added to every probe sample, volts rms.
    pub readout_noise_rms: f64,
    /// Multiplier on the drive cell's noise level.
    pub drive_level: f64,
    pub seed: u64,
}

impl Default for FaultScanConfig {
    fn default() -> Self {
        Self {
            n_samples: 65_536,
            sample_rate: READOUT_RATE,
            segment_length: 4096,
            overlap: 0.5,
            prominence_db: 6.0,
            weak_db: 6.0,
            frequency_tolerance: 0.15,
            readout_noise_rms: 1e-4,
            drive_level: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultFlag {
    Absent,
    Weak,
    Shifted,
    Unexpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub frequency: f64,
    /// Smoothed density at the peak, V²/Hz.
    pub density: f64,
    pub prominence_db: f64,
}

/// One drive/probe/coupling configuration of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub drive: usize,
    pub probe: usize,
    pub level: i8,
    pub expected: Option<PeakSummary>,
    pub measured: Option<PeakSummary>,
    pub flag: Option<FaultFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub entries: Vec<ScanEntry>,
}

impl FaultReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ScanEntry> {
        self.entries.iter().filter(|e| e.flag.is_some())
    }

    /// Unordered cell pairs with at least one flagged entry; self-drive
    /// entries appear as `(k, k)`.
    pub fn flagged_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.flagged().map(|e| (e.drive.min(e.probe), e.drive.max(e.probe))).collect()
    }

    pub fn is_healthy(&self) -> bool {
        self.flagged().next().is_none()
    }
}

fn check_cell(k: usize, n: usize) -> Result<()> {
    if k >= n {
        return Err(invalid(format!("fault names cell {k} of a {n}-cell device")));
    }
    Ok(())
}

/// The one- or two-cell subsystem exercised by a scan entry. Cells outside
/// the pair are uncoupled and undriven, so they do not affect the probe.
fn subsystem(
    cells: &[CellParams],
    faults: &[Fault],
    drive: usize,
    probe: usize,
    level: i8,
    gain: f64,
) -> Result<CircuitParams> {
    let idx: Vec<usize> = if drive == probe { vec![drive] } else { vec![drive, probe] };
    let mut sub: Vec<CellParams> = idx.iter().map(|&k| cells[k]).collect();
    let mut coupling_on = true;
    for f in faults {
        match *f {
            Fault::DeadCoupling { a, b } => {
                if (a == drive && b == probe) || (a == probe && b == drive) {
                    coupling_on = false;
                }
            }
            Fault::DeadCell { cell } => {
                if let Some(p) = idx.iter().position(|&k| k == cell) {
                    sub[p].noise_psd = 0.0;
                }
            }
            Fault::CapacitanceShift { cell, factor } => {
                if let Some(p) = idx.iter().position(|&k| k == cell) {
                    sub[p].capacitance *= factor;
                }
            }
        }
    }
    for (p, c) in sub.iter_mut().enumerate() {
        c.noise_psd *= if p == 0 { gain } else { 0.0 };
    }
    let n = sub.len();
    let mut coupling = DMatrix::zeros(n, n);
    if n == 2 && coupling_on {
        let v = level as f64 * COUPLING_UNIT_NF * 1e-9;
        coupling[(0, 1)] = v;
        coupling[(1, 0)] = v;
    }
    CircuitParams::continuous(sub, coupling)
}

fn summarize(spectrum: &[f64], freqs: &[f64], smooth_bins: usize) -> Option<PeakSummary> {
    let lo = 2;
    if spectrum.len() <= lo + smooth_bins {
        return None;
    }
    let band = &spectrum[lo..];
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let half = smooth_bins / 2;
    let mut best: Option<(usize, f64)> = None;
    for k in half..band.len() - half {
        let s = band[k - half..=k + half].iter().sum::<f64>() / (2 * half + 1) as f64;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    let (k, peak) = best?;
    if !(median > 0.0) {
        return if peak > 0.0 {
            Some(PeakSummary { frequency: freqs[lo + k], density: peak, prominence_db: f64::INFINITY })
        } else {
            None
        };
    }
    Some(PeakSummary { frequency: freqs[lo + k], density: peak, prominence_db: 10.0 * (peak / median).log10() })
}

fn classify(expected: Option<PeakSummary>, measured: Option<PeakSummary>, cfg: &FaultScanConfig) -> Option<FaultFlag> {
    let present = |p: &Option<PeakSummary>| p.filter(|s| s.prominence_db >= cfg.prominence_db);
    match (present(&expected), present(&measured)) {
        (None, None) => None,
        (None, Some(_)) => Some(FaultFlag::Unexpected),
        (Some(_), None) => Some(FaultFlag::Absent),
        (Some(e), Some(m)) => {
            if (m.frequency - e.frequency).abs() > cfg.frequency_tolerance * e.frequency {
                Some(FaultFlag::Shifted)
            } else if 10.0 * (e.density / m.density).log10() > cfg.weak_db {
                Some(FaultFlag::Weak)
            } else {
                None
            }
        }
    }
}

fn scan_entry(
    cells: &[CellParams],
    faults: &[Fault],
    cfg: &FaultScanConfig,
    drive: usize,
    probe: usize,
    level: i8,
    seed: u64,
) -> Result<ScanEntry> {
    let probe_sub = usize::from(drive != probe);
    let healthy = subsystem(cells, &[], drive, probe, level, cfg.drive_level)?;
    let actual = subsystem(cells, faults, drive, probe, level, cfg.drive_level)?;

    let batch = record_voltages(&actual, cfg.sample_rate, cfg.n_samples, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let x: Vec<f64> = batch
        .values
        .column(probe_sub)
        .iter()
        .map(|v| v + cfg.readout_noise_rms * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let measured: PowerSpectrum = welch(&x, cfg.sample_rate, cfg.segment_length, cfg.overlap)?;

    let floor = 2.0 * cfg.readout_noise_rms.powi(2) / cfg.sample_rate;
    let mut model = sampled_voltage_spectrum(&healthy, probe_sub, cfg.sample_rate, &measured.frequencies)?;
    for m in model.iter_mut() {
        *m += floor;
    }
    let smooth = (cfg.segment_length / 128).max(1) | 1;
    let expected = summarize(&model, &measured.frequencies, smooth);
    let measured = summarize(&measured.density, &measured.frequencies, smooth);
    Ok(ScanEntry { drive, probe, level, expected, measured, flag: classify(expected, measured, cfg) })
}

/// Drives one cell at a time and probes every cell, with the pair's coupling
/// switch at each of its settings. `cells` is the healthy description the
/// probe spectra are checked against; `faults` perturb the emulated board.
pub fn two_cell_fault_scan(cells: &[CellParams], faults: &[Fault], config: &FaultScanConfig) -> Result<FaultReport> {
    let n = cells.len();
    if n < 2 {
        return Err(invalid("fault scan needs at least two cells"));
    }
    for c in cells {
        c.validate()?;
    }
    for f in faults {
        match *f {
            Fault::DeadCoupling { a, b } => {
                check_cell(a, n)?;
                check_cell(b, n)?;
                if a == b {
                    return Err(invalid("a coupling joins two distinct cells"));
                }
            }
            Fault::DeadCell { cell } => check_cell(cell, n)?,
            Fault::CapacitanceShift { cell, factor } => {
                check_cell(cell, n)?;
                if !(factor > 0.0) {
                    return Err(invalid("capacitance factor must be positive"));
                }
            }
        }
    }
    if !(config.readout_noise_rms > 0.0 && config.drive_level > 0.0) {
        return Err(invalid("readout noise and drive level must be positive"));
    }
    let mut jobs = Vec::new();
    for drive in 0..n {
        for probe in 0..n {
            if drive == probe {
                jobs.push((drive, probe, 0i8));
            } else {
                jobs.extend(COUPLING_LEVELS.iter().map(|&l| (drive, probe, l)));
            }
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(jobs.len());
    let chunk = jobs.len().div_ceil(workers);
    let results: Vec<Result<Vec<ScanEntry>>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(k, &(d, p, l))| {
                            let id = (c * chunk + k) as u64;
                            scan_entry(cells, faults, config, d, p, l, splitmix64(config.seed ^ splitmix64(id)))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SpuError::Numerical("scan worker panicked".into()))))
            .collect()
    });
    let mut entries = Vec::with_capacity(jobs.len());
    for r in results {
        entries.extend(r?);
    }
    Ok(FaultReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::characterized_cells;

    fn cells(n: usize) -> Vec<CellParams> {
        characterized_cells()[..n].to_vec()
    }

    #[test]
    fn healthy_device_has_no_flags() {
        let r = two_cell_fault_scan(&cells(3), &[], &FaultScanConfig::default()).unwrap();
        assert_eq!(r.entries.len(), 3 + 6 * 3);
        assert!(r.is_healthy(), "{:?}", r.flagged().collect::<Vec<_>>());
    }

    #[test]
    fn dead_coupling_flags_only_its_pair() {
        let r =
            two_cell_fault_scan(&cells(3), &[Fault::DeadCoupling { a: 0, b: 2 }], &FaultScanConfig::default()).unwrap();
        assert_eq!(r.flagged_pairs(), BTreeSet::from([(0, 2)]));
        assert!(r.flagged().all(|e| e.level != 0 && e.flag == Some(FaultFlag::Absent)));
    }

    #[test]
    fn shifted_capacitance_moves_the_self_peak() {
        let f = Fault::CapacitanceShift { cell: 1, factor: 1.5 };
        let r = two_cell_fault_scan(&cells(3), &[f], &FaultScanConfig::default()).unwrap();
        let own = r.entries.iter().find(|e| e.drive == 1 && e.probe == 1).unwrap();
        assert_eq!(own.flag, Some(FaultFlag::Shifted));
    }

    #[test]
    fn dead_cell_is_silent() {
        let r = two_cell_fault_scan(&cells(3), &[Fault::DeadCell { cell: 2 }], &FaultScanConfig::default()).unwrap();
        let own = r.entries.iter().find(|e| e.drive == 2 && e.probe == 2).unwrap();
        assert_eq!(own.flag, Some(FaultFlag::Absent));
        assert!(r.flagged().all(|e| e.drive == 2));
    }

    #[test]
    fn bad_fault_is_rejected() {
        let err = two_cell_fault_scan(&cells(2), &[Fault::DeadCell { cell: 5 }], &FaultScanConfig::default());
        assert!(err.is_err());
        assert!(two_cell_fault_scan(&cells(1), &[], &FaultScanConfig::default()).is_err());
    }

    #[test]
    fn fault_json_round_trip() {
        let f = Fault::CapacitanceShift { cell: 3, factor: 0.5 };
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"kind":"capacitance_shift","cell":3,"factor":0.5}"#);
        assert_eq!(serde_json::from_str::<Fault>(&text).unwrap(), f);
    }
}
