//! Electrical description of the coupled RLC cell array.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SpuError};
use crate::linalg::{ensure_positive_definite, ensure_symmetric, spd_inverse, sym_eigenvalues};

/// Number of cells on the reference board.
pub const CELL_COUNT: usize = 8;
/// Selectable in-cell capacitor banks, in nanofarads.
pub const CAPACITOR_BANKS_NF: [f64; 4] = [1.0, 3.2, 4.3, 6.5];
/// Magnitude of a switched coupling capacitor, in nanofarads.
pub const COUPLING_UNIT_NF: f64 = 0.47;
/// Coupling switch settings: the capacitor enters with this sign.
pub const COUPLING_LEVELS: [i8; 3] = [-1, 0, 1];

const NANO: f64 = 1e-9;

/// One RLC cell. SI units throughout (henry, ohm, A²/Hz, farad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub inductance: f64,
    pub resistance: f64,
    /// One-sided current-noise level κ₀ injected in parallel with the cell.
    pub noise_psd: f64,
    pub capacitance: f64,
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.inductance) && ok(self.resistance) && ok(self.capacitance)) {
            return Err(invalid(format!("cell parameters must be positive: {self:?}")));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd >= 0.0) {
            return Err(invalid("noise level must be non-negative"));
        }
        Ok(())
    }

    /// Like `validate`, but the in-cell capacitance may take any finite value.
    pub fn validate_dynamics(&self) -> Result<()> {
        CellParams { capacitance: 1.0, ..*self }.validate()?;
        if !self.capacitance.is_finite() {
            return Err(invalid("capacitance must be finite"));
        }
        Ok(())
    }

    /// Effective temperature `R κ₀` (units of energy per capacitance·volt² scale).
    pub fn effective_kt(&self) -> f64 {
        self.resistance * self.noise_psd
    }

    /// Stationary variance of the isolated cell voltage, `R κ₀ / C`.
    pub fn voltage_variance(&self) -> f64 {
        self.effective_kt() / self.capacitance
    }

    /// `R C`, the energy relaxation time of the isolated cell.
    pub fn correlation_time(&self) -> f64 {
        self.resistance * self.capacitance
    }

    pub fn resonance_frequency(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * (self.inductance * self.capacitance).sqrt())
    }

    pub fn quality_factor(&self) -> f64 {
        self.resistance * (self.capacitance / self.inductance).sqrt()
    }
}

/// Inductor, resistor and noise source of a cell, without its capacitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTemplate {
    pub inductance: f64,
    pub resistance: f64,
    pub noise_psd: f64,
}

impl CellTemplate {
    pub fn with_capacitance(&self, capacitance: f64) -> CellParams {
        CellParams { inductance: self.inductance, resistance: self.resistance, noise_psd: self.noise_psd, capacitance }
    }
}

/// Measured per-cell parameters of the reference board, indexed by cell.
pub fn characterized_cells() -> Vec<CellParams> {
    // (L µH, R Ω, κ₀ µA²/Hz, C nF), cell 0 first
    const ROWS: [(f64, f64, f64, f64); CELL_COUNT] = [
        (0.918, 26.9, 0.0697, 6.40),
        (0.989, 30.7, 0.0660, 6.44),
        (1.19, 34.8, 0.0448, 6.71),
        (1.29, 43.7, 0.0631, 6.21),
        (1.32, 30.5, 0.114, 6.44),
        (1.48, 63.3, 0.0738, 6.22),
        (2.22, 94.6, 0.0632, 6.14),
        (1.77, 76.7, 0.206, 6.77),
    ];
    ROWS.iter()
        .map(|&(l, r, k, c)| CellParams {
            inductance: l * 1e-6,
            resistance: r,
            noise_psd: k * 1e-12,
            capacitance: c * NANO,
        })
        .collect()
}

/// Per-cell templates used when compiling onto hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTemplate {
    pub cells: Vec<CellTemplate>,
}

impl DeviceTemplate {
    /// Every cell identical, with the board-average L, R and κ₀.
    pub fn nominal() -> Self {
        let rows = characterized_cells();
        let n = rows.len() as f64;
        let t = CellTemplate {
            inductance: rows.iter().map(|c| c.inductance).sum::<f64>() / n,
            resistance: rows.iter().map(|c| c.resistance).sum::<f64>() / n,
            noise_psd: rows.iter().map(|c| c.noise_psd).sum::<f64>() / n,
        };
        Self { cells: vec![t; CELL_COUNT] }
    }

    /// The characterized board.
    pub fn characterized() -> Self {
        Self {
            cells: characterized_cells()
                .iter()
                .map(|c| CellTemplate { inductance: c.inductance, resistance: c.resistance, noise_psd: c.noise_psd })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Symmetric positive-definite Maxwell capacitance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellCapacitance {
    matrix: DMatrix<f64>,
}

impl MaxwellCapacitance {
    /// Wraps a matrix after checking symmetry and positive definiteness.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        ensure_symmetric(&matrix, 1e-12)?;
        ensure_positive_definite(&matrix)?;
        let matrix = crate::linalg::symmetrize(&matrix);
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        spd_inverse(&self.matrix).expect("validated positive definite")
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        sym_eigenvalues(&self.matrix)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[ev.len() - 1]
    }

    /// Row sums, i.e. the in-cell capacitances.
    pub fn cell_capacitances(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// Coupling capacitances `C_ij = −𝐂_ij` with a zero diagonal.
    pub fn coupling(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -self.matrix[(i, j)] })
    }
}

/// Builds the Maxwell matrix from in-cell capacitances and a symmetric,
/// zero-diagonal coupling matrix.
pub fn assemble_maxwell(cell_caps: &[f64], coupling: &DMatrix<f64>) -> Result<MaxwellCapacitance> {
    let n = cell_caps.len();
    if coupling.nrows() != n || coupling.ncols() != n {
        return Err(SpuError::Dimension(format!(
            "{n} cells but a {}x{} coupling matrix",
            coupling.nrows(),
            coupling.ncols()
        )));
    }
    if (0..n).any(|i| coupling[(i, i)] != 0.0) {
        return Err(invalid("coupling matrix must have a zero diagonal"));
    }
    ensure_symmetric(coupling, 1e-12)?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = cell_caps[i];
        for j in 0..n {
            if i != j {
                diag += coupling[(i, j)];
                m[(i, j)] = -coupling[(i, j)];
            }
        }
        m[(i, i)] = diag;
    }
    MaxwellCapacitance::new(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Bank capacitors and ±/0 coupling switches only.
    Quantized,
    /// Arbitrary positive values.
    Continuous,
    /// Simulation-unit device of the ideal compile stage. In-cell
    /// capacitances (Maxwell row sums) may be non-positive; only the Maxwell
    /// matrix has to be positive definite.
    Ideal,
}

/// Full description of a configured cell array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitFile", into = "CircuitFile")]
pub struct CircuitParams {
    cells: Vec<CellParams>,
    coupling: DMatrix<f64>,
    banks: Option<Vec<usize>>,
    coupling_levels: Option<DMatrix<i8>>,
    regime: Regime,
    maxwell: MaxwellCapacitance,
}

impl CircuitParams {
    /// Arbitrary capacitances; the regime is recorded as continuous.
    pub fn continuous(cells: Vec<CellParams>, coupling: DMatrix<f64>) -> Result<Self> {
        Self::build(cells, coupling, Regime::Continuous)
    }

    /// Mathematical device whose in-cell capacitances may be non-positive.
    pub fn ideal(cells: Vec<CellParams>, coupling: DMatrix<f64>) -> Result<Self> {
        Self::build(cells, coupling, Regime::Ideal)
    }

    fn build(cells: Vec<CellParams>, coupling: DMatrix<f64>, regime: Regime) -> Result<Self> {
        for c in &cells {
            match regime {
                Regime::Ideal => c.validate_dynamics()?,
                _ => c.validate()?,
            }
        }
        let caps: Vec<f64> = cells.iter().map(|c| c.capacitance).collect();
        let maxwell = assemble_maxwell(&caps, &coupling)?;
        Ok(Self { cells, coupling, banks: None, coupling_levels: None, regime, maxwell })
    }

    /// Bank indices per cell and a symmetric matrix of coupling switch levels.
    pub fn quantized(template: &DeviceTemplate, banks: &[usize], levels: &DMatrix<i8>) -> Result<Self> {
        let n = banks.len();
        if template.len() < n {
            return Err(SpuError::Dimension(format!("{n} cells requested but the device has {}", template.len())));
        }
        if levels.nrows() != n || levels.ncols() != n {
            return Err(SpuError::Dimension("coupling level matrix has wrong shape".into()));
        }
        let mut cells = Vec::with_capacity(n);
        for (i, &b) in banks.iter().enumerate() {
            let nf = *CAPACITOR_BANKS_NF.get(b).ok_or_else(|| invalid(format!("bank index {b} out of range")))?;
            cells.push(template.cells[i].with_capacitance(nf * NANO));
        }
        let mut coupling = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let l = levels[(i, j)];
                if !COUPLING_LEVELS.contains(&l) || l != levels[(j, i)] || (i == j && l != 0) {
                    return Err(invalid("coupling levels must be symmetric values in {-1,0,1} with zero diagonal"));
                }
                coupling[(i, j)] = f64::from(l) * COUPLING_UNIT_NF * NANO;
            }
        }
        let mut p = Self::continuous(cells, coupling)?;
        p.banks = Some(banks.to_vec());
        p.coupling_levels = Some(levels.clone());
        p.regime = Regime::Quantized;
        Ok(p)
    }

    /// The characterized board, all cells on their measured capacitors, uncoupled.
    pub fn characterized() -> Self {
        let n = CELL_COUNT;
        Self::continuous(characterized_cells(), DMatrix::zeros(n, n)).expect("valid reference board")
    }

    /// Every cell on bank `bank` and every pair coupled at `level` (−1, 0 or 1).
    pub fn uniform_configuration(template: &DeviceTemplate, n: usize, bank: usize, level: i8) -> Result<Self> {
        let mut levels = DMatrix::<i8>::from_element(n, n, level);
        levels.fill_diagonal(0);
        Self::quantized(template, &vec![bank; n], &levels)
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn maxwell(&self) -> &MaxwellCapacitance {
        &self.maxwell
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn banks(&self) -> Option<&[usize]> {
        self.banks.as_deref()
    }

    pub fn coupling_levels(&self) -> Option<&DMatrix<i8>> {
        self.coupling_levels.as_ref()
    }

    pub fn inductances(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.cells.iter().map(|c| c.inductance))
    }

    pub fn resistances(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.cells.iter().map(|c| c.resistance))
    }

    pub fn noise_psds(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.cells.iter().map(|c| c.noise_psd))
    }

    /// True when every cell has the same `R κ₀`, so the array has a single
    /// temperature and a Gibbs stationary law.
    pub fn is_isothermal(&self) -> bool {
        let t0 = self.cells[0].effective_kt();
        self.cells.iter().all(|c| (c.effective_kt() - t0).abs() <= 1e-9 * t0.abs())
    }

    /// `R λ_max(𝐂)`, the slowest energy relaxation time (maximum over cells
    /// for heterogeneous resistances).
    pub fn correlation_time(&self) -> f64 {
        let r_max = self.cells.iter().map(|c| c.resistance).fold(0.0, f64::max);
        r_max * self.maxwell.max_eigenvalue()
    }

    /// Replaces the cells, keeping the coupling network.
    pub fn with_cells(&self, cells: Vec<CellParams>) -> Result<Self> {
        let mut p = Self::build(cells, self.coupling.clone(), self.regime)?;
        p.banks = self.banks.clone();
        p.coupling_levels = self.coupling_levels.clone();
        Ok(p)
    }

    /// Multiplies every coupling capacitance by `factor` (effective-coupling
    /// correction; 1.0 is nominal).
    pub fn with_coupling_scale(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(invalid("coupling scale must be non-negative"));
        }
        let mut p = Self::continuous(self.cells.clone(), &self.coupling * factor)?;
        p.banks = self.banks.clone();
        p.coupling_levels = self.coupling_levels.clone();
        p.regime = self.regime;
        Ok(p)
    }

    /// Multiplies every κ₀ by `factor` (the drive level of the noise sources).
    pub fn with_noise_scale(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(invalid("noise scale must be non-negative"));
        }
        self.with_cells(self.cells.iter().map(|c| CellParams { noise_psd: c.noise_psd * factor, ..*c }).collect())
    }

    /// The first `n` cells and their mutual couplings.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim() {
            return Err(SpuError::Dimension(format!("cannot take {n} of {} cells", self.dim())));
        }
        let coupling = self.coupling.view((0, 0), (n, n)).into_owned();
        let mut p = Self::build(self.cells[..n].to_vec(), coupling, self.regime)?;
        p.regime = self.regime;
        p.banks = self.banks.as_ref().map(|b| b[..n].to_vec());
        p.coupling_levels = self.coupling_levels.as_ref().map(|l| l.view((0, 0), (n, n)).into_owned());
        Ok(p)
    }

    /// Cell resistances as seen through a resistive path of `coupling_resistance`
    /// to each higher-indexed cell.
    pub fn with_parallel_loading(&self, coupling_resistance: f64) -> Result<Self> {
        if !(coupling_resistance > 0.0) {
            return Err(invalid("coupling resistance must be positive"));
        }
        let n = self.dim();
        self.with_cells(
            self.cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    Ok(CellParams { resistance: effective_loading(i, c.resistance, coupling_resistance, n)?, ..*c })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// Multiplicative Gaussian component tolerances on L, R, C and the
    /// coupling capacitors. The regime flag becomes continuous.
    pub fn with_tolerance(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.3).contains(&sigma) {
            return Err(invalid("tolerance sigma must lie in [0, 0.3)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(1.0, sigma).map_err(|e| invalid(e.to_string()))?;
        let mut f = || dist.sample(&mut rng).max(0.1);
        let cells: Vec<CellParams> = self
            .cells
            .iter()
            .map(|c| CellParams {
                inductance: c.inductance * f(),
                resistance: c.resistance * f(),
                noise_psd: c.noise_psd,
                capacitance: c.capacitance * f(),
            })
            .collect();
        let n = self.dim();
        let mut coupling = self.coupling.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = coupling[(i, j)] * f();
                coupling[(i, j)] = v;
                coupling[(j, i)] = v;
            }
        }
        let regime = if self.regime == Regime::Ideal { Regime::Ideal } else { Regime::Continuous };
        Self::build(cells, coupling, regime)
    }
}

/// Resistance of cell `i` (0-based, `n` cells) in parallel with one coupling
/// resistor per higher-indexed cell.
pub fn effective_loading(i: usize, r: f64, coupling_resistance: f64, n: usize) -> Result<f64> {
    if i >= n {
        return Err(invalid(format!("cell index {i} out of range for {n} cells")));
    }
    if !(r > 0.0 && coupling_resistance > 0.0) {
        return Err(invalid("resistances must be positive"));
    }
    let extra = (n - 1 - i) as f64;
    Ok(1.0 / (1.0 / r + extra / coupling_resistance))
}

/// Diagonal variance predicted by the loading model for cell `i` of `n`, with
/// base variances `a = R κ₀ / C` and `b = R_c κ₀ / C`.
pub fn loading_variance(i: usize, a: f64, b: f64, n: usize) -> Result<f64> {
    if i >= n {
        return Err(invalid(format!("cell index {i} out of range for {n} cells")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid("loading model needs a, b > 0"));
    }
    let extra = (n - 1 - i) as f64;
    Ok(a * b / (b + extra * a))
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    regime: Regime,
    cells: Vec<CellParams>,
    coupling_capacitance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    banks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupling_levels: Option<Vec<Vec<i8>>>,
}

impl TryFrom<CircuitFile> for CircuitParams {
    type Error = SpuError;

    fn try_from(f: CircuitFile) -> Result<Self> {
        let n = f.cells.len();
        if n == 0 || f.coupling_capacitance.len() != n || f.coupling_capacitance.iter().any(|r| r.len() != n) {
            return Err(SpuError::Malformed("coupling matrix does not match the cell count".into()));
        }
        let coupling = DMatrix::from_fn(n, n, |i, j| f.coupling_capacitance[i][j]);
        let mut p = CircuitParams::build(f.cells, coupling, f.regime)?;
        p.banks = f.banks;
        if let Some(l) = f.coupling_levels {
            if l.len() != n || l.iter().any(|r| r.len() != n) {
                return Err(SpuError::Malformed("coupling levels do not match the cell count".into()));
            }
            p.coupling_levels = Some(DMatrix::from_fn(n, n, |i, j| l[i][j]));
        }
        Ok(p)
    }
}

impl From<CircuitParams> for CircuitFile {
    fn from(p: CircuitParams) -> Self {
        let n = p.dim();
        CircuitFile {
            regime: p.regime,
            coupling_capacitance: (0..n).map(|i| (0..n).map(|j| p.coupling[(i, j)]).collect()).collect(),
            cells: p.cells,
            banks: p.banks,
            coupling_levels: p.coupling_levels.map(|l| (0..n).map(|i| (0..n).map(|j| l[(i, j)]).collect()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_cell_maxwell_layout() {
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, 0.47, 0.47, 0.0]);
        let m = assemble_maxwell(&[1.0, 1.0], &coupling).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.47, -0.47, -0.47, 1.47]);
        assert!((m.matrix() - expected).norm() < 1e-12);
        let m = assemble_maxwell(&[1.0, 3.2], &coupling).unwrap();
        assert!((m.matrix()[(1, 1)] - 3.67).abs() < 1e-12);
        assert!(assemble_maxwell(&[1.0, 1.0, 1.0], &coupling).is_err());
    }

    #[test]
    fn uncoupled_maxwell_is_diagonal() {
        let caps = [1.0, 3.2, 4.3, 6.5];
        let m = assemble_maxwell(&caps, &DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(m.matrix(), &DMatrix::from_diagonal(&DVector::from_row_slice(&caps)));
    }

    #[test]
    fn strong_negative_coupling_is_rejected() {
        // Row sums stay positive, but the Maxwell matrix is indefinite.
        let coupling = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, -2.0, 0.0]);
        let err = assemble_maxwell(&[1.0, 1.0], &coupling).unwrap_err();
        assert!(matches!(err, SpuError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn loading_examples() {
        assert_eq!(effective_loading(7, 50.0, 1000.0, 8).unwrap(), 50.0);
        let r0 = effective_loading(0, 100.0, 1000.0, 8).unwrap();
        assert!((r0 - 58.8235294).abs() < 1e-6);
        assert!((effective_loading(3, 100.0, 1e300, 8).unwrap() - 100.0).abs() < 1e-9);
        assert!(effective_loading(8, 100.0, 1000.0, 8).is_err());
        assert_eq!(loading_variance(7, 2.0, 9.0, 8).unwrap(), 2.0);
        assert!((loading_variance(0, 3.0, 3.0, 8).unwrap() - 3.0 / 8.0).abs() < 1e-15);
        assert!((loading_variance(3, 1.0, 10.0, 8).unwrap() - 10.0 / 14.0).abs() < 1e-15);
        // 1/Σ is affine in (1/a, 1/b)
        let s = loading_variance(2, 2.0, 9.0, 8).unwrap();
        assert!((1.0 / s - (0.5 + 5.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn fully_coupled_bank_three() {
        let t = DeviceTemplate::nominal();
        let mut levels = DMatrix::<i8>::from_element(8, 8, 1);
        levels.fill_diagonal(0);
        let p = CircuitParams::quantized(&t, &[3; 8], &levels).unwrap();
        let m = p.maxwell().matrix();
        for i in 0..8 {
            assert!((m[(i, i)] - 9.79e-9).abs() < 1e-20);
            for j in 0..8 {
                if i != j {
                    assert!((m[(i, j)] + 0.47e-9).abs() < 1e-20);
                }
            }
        }
    }

    #[test]
    fn tolerance_is_seeded_and_small() {
        let p = CircuitParams::characterized();
        let a = p.with_tolerance(0.05, 4).unwrap();
        let b = p.with_tolerance(0.05, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.with_tolerance(0.0, 4).unwrap().cells(), p.cells());
        for (x, y) in a.cells().iter().zip(p.cells()) {
            assert!((x.inductance / y.inductance - 1.0).abs() < 0.3);
            assert_eq!(x.noise_psd, y.noise_psd);
        }
    }

    proptest! {
        #[test]
        fn loading_is_monotone(r in 1.0f64..500.0, rc in 1.0f64..1e5, a in 0.01f64..10.0, b in 0.01f64..10.0) {
            for i in 1..8 {
                prop_assert!(effective_loading(i, r, rc, 8).unwrap() >= effective_loading(i - 1, r, rc, 8).unwrap());
                prop_assert!(loading_variance(i, a, b, 8).unwrap() >= loading_variance(i - 1, a, b, 8).unwrap());
            }
        }
    }

    #[test]
    fn characterized_cell_seven() {
        let c = characterized_cells()[7];
        assert!((c.voltage_variance() - 2.334e-3).abs() < 0.002e-3);
        assert!((c.correlation_time() - 5.19e-7).abs() < 0.01e-7);
        assert!((c.resonance_frequency() - 1.454e6).abs() < 2e3);
        assert!((c.quality_factor() - 4.74).abs() < 0.01);
    }

    #[test]
    fn json_round_trip() {
        let t = DeviceTemplate::nominal();
        let mut levels = DMatrix::<i8>::zeros(3, 3);
        levels[(0, 2)] = -1;
        levels[(2, 0)] = -1;
        let p = CircuitParams::quantized(&t, &[3, 2, 3], &levels).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: CircuitParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.regime(), Regime::Quantized);
    }

    #[test]
    fn malformed_json_is_rejected() {
        let bad = r#"{"regime":"continuous","cells":[{"inductance":1,"resistance":1,"noise_psd":1,"capacitance":1}],"coupling_capacitance":[[0,0]]}"#;
        assert!(serde_json::from_str::<CircuitParams>(bad).is_err());
    }

    proptest! {
        #[test]
        fn maxwell_row_sums_are_cell_caps(
            caps in prop::collection::vec(0.5f64..10.0, 2..8),
            raw in prop::collection::vec(-0.3f64..0.3, 64),
        ) {
            let n = caps.len();
            let mut coupling = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    coupling[(i, j)] = raw[i * 8 + j];
                    coupling[(j, i)] = raw[i * 8 + j];
                }
            }
            if let Ok(m) = assemble_maxwell(&caps, &coupling) {
                for (got, want) in m.cell_capacitances().iter().zip(&caps) {
                    prop_assert!((got - want).abs() < 1e-12);
                }
                prop_assert!(crate::linalg::asymmetry(m.matrix()) == 0.0);
            }
        }
    }
}
