//! Plain-text matrix and dataset files.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::apps::Dataset1D;
use crate::error::{Result, SpuError};
use crate::linalg::{ensure_symmetric, symmetrize};

fn parse_fields(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SpuError::Malformed(format!("line {lineno}: `{}` is not a finite number", t.trim())))
        })
        .collect()
}

/// Row-major comma-separated matrix without a header. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_matrix<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v = parse_fields(t, k + 1)?;
        if let Some(first) = rows.first() {
            if v.len() != first.len() {
                return Err(SpuError::Malformed(format!(
                    "line {}: {} fields, expected {}",
                    k + 1,
                    v.len(),
                    first.len()
                )));
            }
        }
        rows.push(v);
    }
    if rows.is_empty() {
        return Err(SpuError::Malformed("matrix file is empty".into()));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    let f = std::fs::File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_matrix(std::io::BufReader::new(f))
}

/// Square matrix symmetric to within `rel_tol`, returned exactly symmetrized.
pub fn read_symmetric_matrix_file(path: &Path, rel_tol: f64) -> Result<DMatrix<f64>> {
    let m = read_matrix_file(path)?;
    ensure_symmetric(&m, rel_tol)?;
    Ok(symmetrize(&m))
}

pub fn write_matrix<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_matrix_file(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_matrix(m, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Two-column `x,y` file; an optional non-numeric header line is skipped.
pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset1D> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if x.is_empty() && t.split(',').next().is_some_and(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        let v = parse_fields(t, k + 1)?;
        if v.len() != 2 {
            return Err(SpuError::Malformed(format!("line {}: expected x,y", k + 1)));
        }
        x.push(v[0]);
        y.push(v[1]);
    }
    if x.is_empty() {
        return Err(SpuError::Malformed("dataset is empty".into()));
    }
    Dataset1D::new(x, y)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset1D> {
    let f = std::fs::File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(f))
}

pub fn write_dataset<W: Write>(d: &Dataset1D, mut w: W) -> Result<()> {
    writeln!(w, "x,y")?;
    for (x, y) in d.x.iter().zip(&d.y) {
        writeln!(w, "{x:e},{y:e}")?;
    }
    Ok(())
}
