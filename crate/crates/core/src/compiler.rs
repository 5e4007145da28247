//! Maps precision or covariance targets onto capacitance configurations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::Observable;
use crate::circuit::{
    CellParams, CircuitParams, DeviceTemplate, MaxwellCapacitance, CAPACITOR_BANKS_NF, COUPLING_UNIT_NF,
};
use crate::error::{invalid, Result, SpuError};
use crate::linalg::{ensure_positive_definite, ensure_symmetric, min_eigenvalue, spd_inverse, symmetrize};

const NANO: f64 = 1e-9;
/// Candidate global scales for quantization.
pub const SCALE_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Precision,
    Covariance,
}

/// A Gaussian target given by its precision or covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub matrix: DMatrix<f64>,
    pub kind: TargetKind,
    /// Temperature scale (precision targets) or its inverse β (covariance targets).
    pub kt: f64,
}

impl TargetSpec {
    pub fn new(matrix: DMatrix<f64>, kind: TargetKind, kt: f64) -> Result<Self> {
        ensure_symmetric(&matrix, 1e-12)?;
        if !(kt > 0.0 && kt.is_finite()) {
            return Err(invalid("temperature scale must be positive"));
        }
        Ok(Self { matrix: symmetrize(&matrix), kind, kt })
    }

    pub fn precision(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix, TargetKind::Precision, 1.0)
    }

    pub fn covariance(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix, TargetKind::Covariance, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Covariance of the target distribution.
    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        match self.kind {
            TargetKind::Covariance => Ok(self.matrix.clone()),
            TargetKind::Precision => spd_inverse(&self.matrix),
        }
    }
}

/// Ideal and realized capacitance configuration for a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompilationResult {
    pub target: TargetSpec,
    /// `kT·P` or `β·Σ`, in simulation units.
    #[serde(with = "maxwell_serde")]
    pub ideal_maxwell: MaxwellCapacitance,
    /// The configured device: the ideal regime in simulation units, or
    /// bank-quantized (or continuous) SI values for hardware results.
    pub quantized: CircuitParams,
    /// `‖Ĉ − s·C_ideal‖_F / ‖s·C_ideal‖_F`.
    pub residual: f64,
    /// Uniform factor applied to the ideal matrix before realization (nF per
    /// simulation unit for hardware results).
    pub scale_factor: f64,
    /// Quantity whose covariance encodes the target.
    pub observable: Observable,
    /// Multiplying the observable by this gain yields samples in target units.
    pub readout_gain: f64,
}

mod maxwell_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &MaxwellCapacitance, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = m.dim();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.matrix()[(i, j)]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<MaxwellCapacitance, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("Maxwell matrix must be square"));
        }
        MaxwellCapacitance::new(DMatrix::from_fn(n, n, |i, j| rows[i][j])).map_err(serde::de::Error::custom)
    }
}

fn validate_target(m: &DMatrix<f64>) -> Result<()> {
    ensure_symmetric(m, 1e-12)?;
    ensure_positive_definite(m)
}

/// Simulation-unit device: `R = 1`, `κ₀ = kT`, `L = λ_max(𝐂)` so that the
/// slowest mode is critically tuned (quality factor 1).
fn simulation_device(maxwell: &MaxwellCapacitance, kt: f64) -> Result<CircuitParams> {
    let l = maxwell.max_eigenvalue();
    let cells = maxwell
        .cell_capacitances()
        .into_iter()
        .map(|c| CellParams { inductance: l, resistance: 1.0, noise_psd: kt, capacitance: c })
        .collect::<Vec<_>>();
    CircuitParams::ideal(cells, maxwell.coupling())
}

/// `𝐂 = kT·P`; the compiled voltages are distributed as `N(0, P⁻¹)`.
pub fn compile_precision(p: &DMatrix<f64>, kt: f64) -> Result<CompilationResult> {
    validate_target(p)?;
    let target = TargetSpec::new(p.clone(), TargetKind::Precision, kt)?;
    let ideal = MaxwellCapacitance::new(p * kt)?;
    let circuit = simulation_device(&ideal, kt)?;
    Ok(CompilationResult {
        target,
        ideal_maxwell: ideal,
        quantized: circuit,
        residual: 0.0,
        scale_factor: 1.0,
        observable: Observable::Voltage,
        readout_gain: 1.0,
    })
}

/// `𝐂 = β·Σ`; the compiled charges `𝒬 = 𝐂V` (the time integral of the cell
/// currents) are distributed as `N(0, Σ)`.
pub fn compile_covariance(sigma: &DMatrix<f64>, beta: f64) -> Result<CompilationResult> {
    validate_target(sigma)?;
    let target = TargetSpec::new(sigma.clone(), TargetKind::Covariance, beta)?;
    let ideal = MaxwellCapacitance::new(sigma * beta)?;
    let circuit = simulation_device(&ideal, 1.0 / beta)?;
    Ok(CompilationResult {
        target,
        ideal_maxwell: ideal,
        quantized: circuit,
        residual: 0.0,
        scale_factor: 1.0,
        observable: Observable::Charge,
        readout_gain: 1.0,
    })
}

impl CompilationResult {
    /// Realizes the ideal matrix on the capacitor banks of `template`.
    pub fn quantize(&self, template: &DeviceTemplate) -> Result<CompilationResult> {
        let q = quantize_to_banks(&self.ideal_maxwell, template)?;
        self.with_hardware(q)
    }

    /// Realizes the ideal matrix at a fixed scale.
    pub fn quantize_at(&self, template: &DeviceTemplate, scale: f64) -> Result<CompilationResult> {
        let q = quantize_at_scale(&self.ideal_maxwell, template, scale)?;
        self.with_hardware(q)
    }

    /// Maps the ideal matrix to SI capacitances without snapping to banks.
    /// The scale puts the largest diagonal entry at the largest bank value.
    pub fn continuous_hardware(&self, template: &DeviceTemplate) -> Result<CompilationResult> {
        let ideal = self.ideal_maxwell.matrix();
        let d = ideal.nrows();
        if template.len() < d {
            return Err(SpuError::Dimension(format!("target has {d} dimensions, device has {} cells", template.len())));
        }
        let max_diag = (0..d).map(|i| ideal[(i, i)]).fold(0.0, f64::max);
        let s = CAPACITOR_BANKS_NF[CAPACITOR_BANKS_NF.len() - 1] / max_diag;
        let m = MaxwellCapacitance::new(ideal * (s * NANO))?;
        let cells =
            m.cell_capacitances().iter().enumerate().map(|(i, &c)| template.cells[i].with_capacitance(c)).collect();
        let circuit = CircuitParams::continuous(cells, m.coupling())?;
        self.with_hardware(Quantization { circuit, residual: 0.0, scale_factor: s })
    }

    fn with_hardware(&self, q: Quantization) -> Result<CompilationResult> {
        let cells = q.circuit.cells();
        let kt_eff = cells.iter().map(|c| c.effective_kt()).sum::<f64>() / cells.len() as f64;
        let farads_per_unit = q.scale_factor * NANO;
        let gain = match self.observable {
            Observable::Voltage => (farads_per_unit * self.target.kt / kt_eff).sqrt(),
            _ => 1.0 / (kt_eff * farads_per_unit * self.target.kt).sqrt(),
        };
        Ok(CompilationResult {
            target: self.target.clone(),
            ideal_maxwell: self.ideal_maxwell.clone(),
            quantized: q.circuit,
            residual: q.residual,
            scale_factor: q.scale_factor,
            observable: self.observable,
            readout_gain: gain,
        })
    }

    /// Target-unit covariance the configured device actually produces.
    pub fn realized_covariance(&self) -> Result<DMatrix<f64>> {
        let v = crate::langevin::stationary_voltage_covariance(&self.quantized)?;
        let g2 = self.readout_gain * self.readout_gain;
        Ok(match self.observable {
            Observable::Voltage => v * g2,
            _ => {
                let c = self.quantized.maxwell().matrix();
                symmetrize(&(c * v * c)) * g2
            }
        })
    }
}

/// Bank/coupling realization of an ideal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub circuit: CircuitParams,
    pub residual: f64,
    pub scale_factor: f64,
}

/// The 64-point log grid over `[10⁻², 10²]`, plus the unit scale.
pub fn scale_candidates() -> Vec<f64> {
    let mut v: Vec<f64> =
        (0..SCALE_GRID_POINTS).map(|k| 10f64.powf(-2.0 + 4.0 * k as f64 / (SCALE_GRID_POINTS - 1) as f64)).collect();
    v.push(1.0);
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn nearest_bank(value_nf: f64) -> usize {
    let mut best = 0;
    for (k, b) in CAPACITOR_BANKS_NF.iter().enumerate() {
        let (db, dbest) = ((value_nf - b).abs(), (value_nf - CAPACITOR_BANKS_NF[best]).abs());
        // ties go to the larger magnitude
        if db < dbest || (db == dbest && b.abs() > CAPACITOR_BANKS_NF[best].abs()) {
            best = k;
        }
    }
    best
}

fn nearest_level(coupling_nf: f64) -> i8 {
    (coupling_nf / COUPLING_UNIT_NF).round().clamp(-1.0, 1.0) as i8
}

/// Snaps `scale·ideal`, read in nanofarads, to the nearest realizable values.
pub fn quantize_at_scale(ideal: &MaxwellCapacitance, template: &DeviceTemplate, scale: f64) -> Result<Quantization> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale must be positive"));
    }
    let target = ideal.matrix() * scale;
    let d = target.nrows();
    if template.len() < d {
        return Err(SpuError::Dimension(format!("target has {d} dimensions, device has {} cells", template.len())));
    }
    let mut levels = DMatrix::<i8>::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let l = nearest_level(-target[(i, j)]);
            levels[(i, j)] = l;
            levels[(j, i)] = l;
        }
    }
    let banks: Vec<usize> = (0..d).map(|i| nearest_bank(target.row(i).sum())).collect();
    let circuit = CircuitParams::quantized(template, &banks, &levels).map_err(|e| match e {
        SpuError::NotPositiveDefinite { min_eigenvalue } => SpuError::Unrealizable(format!(
            "quantized matrix is indefinite (minimum eigenvalue {min_eigenvalue:.3e} F); rescale the target"
        )),
        other => other,
    })?;
    let realized = circuit.maxwell().matrix() / NANO;
    let residual = (&realized - &target).norm() / target.norm();
    Ok(Quantization { circuit, residual, scale_factor: scale })
}

/// Global scale search followed by nearest-value snapping.
pub fn quantize_to_banks(ideal: &MaxwellCapacitance, template: &DeviceTemplate) -> Result<Quantization> {
    let mut best: Option<Quantization> = None;
    let mut last_err = None;
    for s in scale_candidates() {
        match quantize_at_scale(ideal, template, s) {
            Ok(q) => {
                if best.as_ref().is_none_or(|b| q.residual < b.residual) {
                    best = Some(q);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| SpuError::Unrealizable("no realizable scale found; rescale the target".into()))
    })
}

/// Record of a diagonal shift applied to make a matrix positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdShift {
    /// Amount added to the diagonal. Downstream inversion yields `(A + λI)⁻¹`.
    pub lambda: f64,
    pub original_min_eigenvalue: f64,
}

/// `A + λI` with `λ` chosen so the smallest eigenvalue is at least `margin`.
pub fn preprocess_non_psd(a: &DMatrix<f64>, margin: f64) -> Result<(DMatrix<f64>, PsdShift)> {
    ensure_symmetric(a, 1e-12)?;
    if !(margin >= 0.0) {
        return Err(invalid("margin must be non-negative"));
    }
    let lo = min_eigenvalue(a);
    let lambda = (margin - lo).max(0.0);
    let shifted = a + DMatrix::identity(a.nrows(), a.ncols()) * lambda;
    Ok((shifted, PsdShift { lambda, original_min_eigenvalue: lo }))
}
