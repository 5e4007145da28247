use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{invalid, Result, SpuError};

pub const DEFAULT_SEGMENT: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Hz, strictly increasing from 0 to the Nyquist frequency.
    pub frequencies: Vec<f64>,
    /// V²/Hz.
    pub density: Vec<f64>,
    /// Bin spacing, Hz.
    pub resolution_bandwidth: f64,
}

impl PowerSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Rectangle-rule integral of the density.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution_bandwidth
    }

    /// Bin index and frequency of the largest density above `min_freq`.
    pub fn peak(&self, min_freq: f64) -> Option<(usize, f64)> {
        self.frequencies
            .iter()
            .zip(&self.density)
            .enumerate()
            .filter(|(_, (f, _))| **f >= min_freq)
            .max_by(|a, b| a.1 .1.total_cmp(b.1 .1))
            .map(|(k, (f, _))| (k, *f))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "f,psd")?;
        for (f, p) in self.frequencies.iter().zip(&self.density) {
            writeln!(w, "{f:e},{p:e}")?;
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect()
}

/// Welch estimate with a periodic Hann window; each segment has its mean removed.
pub fn welch(x: &[f64], sample_rate: f64, segment_length: usize, overlap: f64) -> Result<PowerSpectrum> {
    if segment_length < 8 {
        return Err(invalid("segment length must be at least 8"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(invalid("overlap must lie in [0, 1)"));
    }
    if !(sample_rate > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    if x.len() < segment_length {
        return Err(SpuError::InvalidParameter(format!(
            "{} samples are fewer than one segment of {segment_length}",
            x.len()
        )));
    }
    let step = ((segment_length as f64 * (1.0 - overlap)).round() as usize).max(1);
    let w = hann(segment_length);
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_length);
    let bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_length <= x.len() {
        let seg = &x[start..start + segment_length];
        let mean = seg.iter().sum::<f64>() / segment_length as f64;
        for (b, (&v, &wk)) in buf.iter_mut().zip(seg.iter().zip(&w)) {
            *b = Complex64::new((v - mean) * wk, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf[..bins]) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (sample_rate * wss * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || (segment_length % 2 == 0 && k == bins - 1) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let df = sample_rate / segment_length as f64;
    Ok(PowerSpectrum { frequencies: (0..bins).map(|k| k as f64 * df).collect(), density, resolution_bandwidth: df })
}

/// Welch estimate of one column of a batch at the batch's sample rate.
pub fn estimate_spectrum(
    batch: &SampleBatch,
    column: usize,
    segment_length: usize,
    overlap: f64,
) -> Result<PowerSpectrum> {
    if column >= batch.dim() {
        return Err(SpuError::Dimension(format!("column {column} out of range for {} columns", batch.dim())));
    }
    let x: Vec<f64> = batch.values.column(column).iter().copied().collect();
    welch(&x, batch.sample_rate, segment_length, overlap)
}
