//! Recorded sample matrices and their on-disk form.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Result, SpuError};

/// Physical quantity stored in a [`SampleBatch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Voltage,
    Current,
    Charge,
    Flux,
    /// Samples already mapped into the units of a user target.
    Target,
}

/// Run metadata carried alongside a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BatchMeta {
    pub seed: u64,
    /// Integrator step in seconds.
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CircuitParams>,
}

/// Rows are time points, columns are cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    /// Rate at which rows were recorded, in Hz.
    pub sample_rate: f64,
    pub observable: Observable,
    pub meta: BatchMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    observable: Observable,
    sample_rate: f64,
    n_samples: usize,
    dim: usize,
    #[serde(flatten)]
    meta: BatchMeta,
}

impl SampleBatch {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>, sample_rate: f64, observable: Observable) -> Result<Self> {
        if times.len() != values.nrows() {
            return Err(SpuError::Dimension(format!("{} timestamps for {} rows", times.len(), values.nrows())));
        }
        Ok(Self { times, values, sample_rate, observable, meta: BatchMeta::default() })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps every `k`-th row starting from the first.
    pub fn thinned(&self, k: usize) -> Self {
        let k = k.max(1);
        let rows: Vec<usize> = (0..self.len()).step_by(k).collect();
        Self {
            times: rows.iter().map(|&r| self.times[r]).collect(),
            values: self.values.select_rows(rows.iter()),
            sample_rate: self.sample_rate / k as f64,
            observable: self.observable,
            meta: self.meta.clone(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            times: self.times[..n].to_vec(),
            values: self.values.rows(0, n).into_owned(),
            sample_rate: self.sample_rate,
            observable: self.observable,
            meta: self.meta.clone(),
        }
    }

    /// Concatenates batches in order. All must share dimension and observable.
    pub fn concat(parts: &[SampleBatch]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| SpuError::InvalidParameter("nothing to concatenate".into()))?;
        let d = first.dim();
        if parts.iter().any(|p| p.dim() != d || p.observable != first.observable) {
            return Err(SpuError::Dimension("batches differ in shape or observable".into()));
        }
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut values = DMatrix::zeros(n, d);
        let mut times = Vec::with_capacity(n);
        let mut r = 0;
        for p in parts {
            values.rows_mut(r, p.len()).copy_from(&p.values);
            times.extend_from_slice(&p.times);
            r += p.len();
        }
        Ok(Self {
            times,
            values,
            sample_rate: first.sample_rate,
            observable: first.observable,
            meta: first.meta.clone(),
        })
    }

    /// CSV with header `t,v0,...,v{d−1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let prefix = match self.observable {
            Observable::Voltage => "v",
            Observable::Current => "i",
            Observable::Charge => "q",
            Observable::Flux => "phi",
            Observable::Target => "x",
        };
        let mut line = String::from("t");
        for j in 0..self.dim() {
            line.push_str(&format!(",{prefix}{j}"));
        }
        writeln!(w, "{line}")?;
        for r in 0..self.len() {
            line.clear();
            line.push_str(&format!("{:e}", self.times[r]));
            for j in 0..self.dim() {
                line.push_str(&format!(",{:e}", self.values[(r, j)]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_sidecar<W: Write>(&self, w: W) -> Result<()> {
        let s = Sidecar {
            observable: self.observable,
            sample_rate: self.sample_rate,
            n_samples: self.len(),
            dim: self.dim(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer_pretty(w, &s)?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` next to each other.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(csv))?;
        let json = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        self.write_sidecar(std::io::BufWriter::new(json))
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv) plus its sidecar.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let side: Sidecar = serde_json::from_reader(std::fs::File::open(dir.join(format!("{stem}.json")))?)?;
        let f = std::io::BufReader::new(std::fs::File::open(dir.join(format!("{stem}.csv")))?);
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (k, line) in f.lines().enumerate() {
            let line = line?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| SpuError::Malformed(format!("line {}: {e}", k + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != side.dim + 1 {
                return Err(SpuError::Malformed(format!("line {} has {} fields", k + 1, vals.len())));
            }
            times.push(vals[0]);
            data.extend_from_slice(&vals[1..]);
        }
        let values = DMatrix::from_row_slice(times.len(), side.dim, &data);
        let mut b = Self::new(times, values, side.sample_rate, side.observable)?;
        b.meta = side.meta;
        Ok(b)
    }
}
