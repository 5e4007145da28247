use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::{BatchMeta, Observable, SampleBatch};
use crate::circuit::CircuitParams;
use crate::error::{invalid, Result, SpuError};
use crate::linalg::symmetrize;
use crate::noise::NoiseSource;

use super::exact::CircuitSystem;
use super::generic::{integrate_udl_with, GenericLangevinSpec, Mass, QuadraticPotential, TrajectoryConfig};

/// Flux and charge of every cell at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeState {
    pub flux: DVector<f64>,
    pub charge: DVector<f64>,
    pub time: f64,
}

impl SdeState {
    /// Powered-down device.
    pub fn zeros(d: usize) -> Self {
        Self { flux: DVector::zeros(d), charge: DVector::zeros(d), time: 0.0 }
    }

    pub fn from_current_voltage(current: &DVector<f64>, voltage: &DVector<f64>, params: &CircuitParams) -> Self {
        let (flux, charge) = transform_coords(current, voltage, params);
        Self { flux, charge, time: 0.0 }
    }

    pub fn current(&self, params: &CircuitParams) -> DVector<f64> {
        self.flux.component_div(&params.inductances())
    }

    pub fn voltage(&self, params: &CircuitParams) -> DVector<f64> {
        params.maxwell().inverse() * &self.charge
    }
}

/// `(I, V) ↦ (Φ, 𝒬) = (L I, 𝐂 V)`.
pub fn transform_coords(
    current: &DVector<f64>,
    voltage: &DVector<f64>,
    params: &CircuitParams,
) -> (DVector<f64>, DVector<f64>) {
    (current.component_mul(&params.inductances()), params.maxwell().matrix() * voltage)
}

/// `(Φ, 𝒬) ↦ (I, V)`.
pub fn inverse_transform_coords(
    flux: &DVector<f64>,
    charge: &DVector<f64>,
    params: &CircuitParams,
) -> (DVector<f64>, DVector<f64>) {
    let c = params.maxwell().matrix().clone().cholesky().expect("validated positive definite");
    (flux.component_div(&params.inductances()), c.solve(charge))
}

/// `½ Φᵀ L⁻¹ Φ + ½ 𝒬ᵀ 𝐂⁻¹ 𝒬`.
pub fn hamiltonian(flux: &DVector<f64>, charge: &DVector<f64>, params: &CircuitParams) -> f64 {
    let l = params.inductances();
    let magnetic: f64 = flux.iter().zip(l.iter()).map(|(f, l)| f * f / l).sum();
    let c = params.maxwell().matrix().clone().cholesky().expect("validated positive definite");
    0.5 * magnetic + 0.5 * charge.dot(&c.solve(charge))
}

/// `½ Vᵀ 𝐂 V + ½ Iᵀ L I`.
pub fn hamiltonian_iv(current: &DVector<f64>, voltage: &DVector<f64>, params: &CircuitParams) -> f64 {
    let l = params.inductances();
    let magnetic: f64 = current.iter().zip(l.iter()).map(|(i, l)| l * i * i).sum();
    0.5 * voltage.dot(&(params.maxwell().matrix() * voltage)) + 0.5 * magnetic
}

/// `R λ_max(𝐂)`.
pub fn correlation_time(params: &CircuitParams) -> f64 {
    params.correlation_time()
}

/// Analytic Gibbs covariances at inverse temperature β.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryReference {
    pub flux: DMatrix<f64>,
    pub charge: DMatrix<f64>,
    pub voltage: DMatrix<f64>,
}

pub fn stationary_reference(params: &CircuitParams, beta: f64) -> Result<StationaryReference> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let kt = 1.0 / beta;
    Ok(StationaryReference {
        flux: DMatrix::from_diagonal(&params.inductances()) * kt,
        charge: params.maxwell().matrix() * kt,
        voltage: symmetrize(&(params.maxwell().inverse() * kt)),
    })
}

/// Exact stationary voltage covariance. Equals `R κ₀ 𝐂⁻¹` for an isothermal
/// array; otherwise obtained from the Lyapunov equation of the full system.
pub fn stationary_voltage_covariance(params: &CircuitParams) -> Result<DMatrix<f64>> {
    if params.is_isothermal() {
        let kt = params.cells()[0].effective_kt();
        return Ok(symmetrize(&(params.maxwell().inverse() * kt)));
    }
    let sys = CircuitSystem::new(params);
    let s = sys.stationary_covariance()?;
    let d = params.dim();
    let scale = sys.scale();
    let q = DMatrix::from_fn(d, d, |i, j| s[(d + i, d + j)] * scale[d + i] * scale[d + j]);
    let cinv = params.maxwell().inverse();
    Ok(symmetrize(&(&cinv * q * &cinv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact Gaussian transition (or exact zero-order hold for held sources).
    #[default]
    Exact,
    /// Semi-implicit Euler–Maruyama in `(Φ, 𝒬)`.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CircuitRun {
    pub scheme: Scheme,
    pub record_current: bool,
    /// Also keep the flux and charge at every record.
    pub record_state: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitRecord {
    pub voltages: SampleBatch,
    pub currents: Option<SampleBatch>,
    pub flux: Option<DMatrix<f64>>,
    pub charge: Option<DMatrix<f64>>,
    pub final_state: SdeState,
}

impl GenericLangevinSpec {
    /// `x = Φ`, `p = 𝒬`, `M = 𝐂`, `γᵢ = 1/Rᵢ`, `βᵢ = 1/(Rᵢ κ₀ᵢ)`, `U = ½ Φᵀ L⁻¹ Φ`.
    pub fn from_circuit(params: &CircuitParams) -> Result<Self> {
        let d = params.dim();
        let cells = params.cells();
        let k = DMatrix::from_diagonal(&DVector::from_iterator(d, cells.iter().map(|c| 1.0 / c.inductance)));
        let gamma = DVector::from_iterator(d, cells.iter().map(|c| 1.0 / c.resistance));
        let beta = DVector::from_iterator(d, cells.iter().map(|c| 1.0 / (c.resistance * c.noise_psd)));
        GenericLangevinSpec::per_coordinate(
            d,
            Mass::Matrix(params.maxwell().matrix().clone()),
            gamma,
            beta,
            Arc::new(QuadraticPotential::new(k)),
        )
    }
}

/// Integrates the circuit SDE and records voltages every `record_stride` steps.
pub fn integrate_circuit(
    params: &CircuitParams,
    state0: &SdeState,
    cfg: &TrajectoryConfig,
    run: CircuitRun,
    noise: &mut dyn NoiseSource,
) -> Result<CircuitRecord> {
    cfg.validate()?;
    let d = params.dim();
    if state0.flux.len() != d || state0.charge.len() != d {
        return Err(SpuError::Dimension("initial state has the wrong size".into()));
    }
    if let Some(ch) = noise.channels() {
        if ch < d {
            return Err(invalid(format!("noise source has {ch} channels for {d} cells")));
        }
    }
    let tau = params.correlation_time();
    if cfg.dt > tau / 50.0 && run.scheme == Scheme::EulerMaruyama {
        log::warn!("dt = {:.3e} exceeds tau_corr/50 = {:.3e}", cfg.dt, tau / 50.0);
    }
    let n_rec = cfg.n_records();
    let mut v = DMatrix::zeros(n_rec, d);
    let mut cur = if run.record_current { Some(DMatrix::zeros(n_rec, d)) } else { None };
    let mut flux = if run.record_state { Some(DMatrix::zeros(n_rec, d)) } else { None };
    let mut charge = if run.record_state { Some(DMatrix::zeros(n_rec, d)) } else { None };
    let times: Vec<f64> = (0..n_rec).map(|k| cfg.record_time(k)).collect();
    let end_time = state0.time + cfg.burn_in_steps() as f64 * cfg.dt + (n_rec * cfg.record_stride) as f64 * cfg.dt;

    let final_state = match run.scheme {
        Scheme::EulerMaruyama => {
            let spec = GenericLangevinSpec::from_circuit(params)?;
            let t = integrate_udl_with(&spec, &state0.flux, &state0.charge, cfg, noise)?;
            let p = t.p.as_ref().expect("underdamped run records momenta");
            let cinv = params.maxwell().inverse();
            v = p * cinv.transpose();
            if let Some(c) = cur.as_mut() {
                let l = params.inductances();
                for r in 0..n_rec {
                    for i in 0..d {
                        c[(r, i)] = t.x[(r, i)] / l[i];
                    }
                }
            }
            if run.record_state {
                flux = Some(t.x.clone());
                charge = Some(p.clone());
            }
            SdeState { flux: t.final_x, charge: t.final_p.expect("momenta"), time: end_time }
        }
        Scheme::Exact => {
            let sys = CircuitSystem::new(params);
            let mut y = vec![0.0; 2 * d];
            sys.to_balanced(state0.flux.as_slice(), state0.charge.as_slice(), &mut y);
            let mut tmp = vec![0.0; 2 * d];
            let mut buf = vec![0.0; d];
            let mut record = |k: usize, y: &[f64], buf: &mut [f64]| {
                sys.voltage(y, buf);
                for i in 0..d {
                    v[(k, i)] = buf[i];
                }
                if let Some(c) = cur.as_mut() {
                    sys.current(y, buf);
                    for i in 0..d {
                        c[(k, i)] = buf[i];
                    }
                }
                if let (Some(f), Some(q)) = (flux.as_mut(), charge.as_mut()) {
                    sys.flux(y, buf);
                    for i in 0..d {
                        f[(k, i)] = buf[i];
                    }
                    sys.charge(y, buf);
                    for i in 0..d {
                        q[(k, i)] = buf[i];
                    }
                }
            };
            match noise.hold_time() {
                None => {
                    let mut xi = vec![0.0; 2 * d];
                    let burn = cfg.burn_in_steps();
                    if burn > 0 {
                        let jump = sys.white_step(burn as f64 * cfg.dt)?;
                        noise.fill(&mut xi)?;
                        jump.apply(&mut y, &xi, &mut tmp);
                    }
                    let step = sys.white_step(cfg.record_stride as f64 * cfg.dt)?;
                    for k in 0..n_rec {
                        noise.fill(&mut xi)?;
                        step.apply(&mut y, &xi, &mut tmp);
                        record(k, &y, &mut buf);
                    }
                }
                Some(hold) => {
                    if ((hold - cfg.dt) / cfg.dt).abs() > 1e-9 {
                        return Err(invalid("a held noise source requires dt equal to its hold time"));
                    }
                    let step = sys.held_step(cfg.dt)?;
                    let gain: Vec<f64> = sys.kappa().iter().map(|k| (2.0 * k / cfg.dt).sqrt()).collect();
                    let mut u = vec![0.0; d];
                    let burn = cfg.burn_in_steps();
                    let mut advance = |y: &mut [f64], tmp: &mut [f64], u: &mut [f64]| -> Result<()> {
                        noise.fill(u)?;
                        for (ui, g) in u.iter_mut().zip(&gain) {
                            *ui *= g;
                        }
                        step.apply(y, u, tmp);
                        Ok(())
                    };
                    for _ in 0..burn {
                        advance(&mut y, &mut tmp, &mut u)?;
                    }
                    for k in 0..n_rec {
                        for _ in 0..cfg.record_stride {
                            advance(&mut y, &mut tmp, &mut u)?;
                        }
                        record(k, &y, &mut buf);
                    }
                }
            }
            if !y.iter().all(|z| z.is_finite()) {
                return Err(SpuError::Numerical("state became non-finite".into()));
            }
            let mut f = vec![0.0; d];
            let mut q = vec![0.0; d];
            sys.flux(&y, &mut f);
            sys.charge(&y, &mut q);
            SdeState { flux: DVector::from_vec(f), charge: DVector::from_vec(q), time: end_time }
        }
    };

    let rate = 1.0 / (cfg.record_stride as f64 * cfg.dt);
    let meta = BatchMeta { seed: cfg.seed, dt: cfg.dt, params: Some(params.clone()) };
    let mut voltages = SampleBatch::new(times.clone(), v, rate, Observable::Voltage)?;
    voltages.meta = meta.clone();
    let currents = match cur {
        Some(c) => {
            let mut b = SampleBatch::new(times, c, rate, Observable::Current)?;
            b.meta = meta;
            Some(b)
        }
        None => None,
    };
    Ok(CircuitRecord { voltages, currents, flux, charge, final_state })
}

/// Total stored energy at every record. Requires recorded currents.
pub fn energy_series(record: &CircuitRecord, params: &CircuitParams) -> Result<Vec<f64>> {
    let cur = record.currents.as_ref().ok_or_else(|| invalid("energy needs recorded currents"))?;
    let d = params.dim();
    Ok((0..record.voltages.len())
        .map(|r| {
            let v = DVector::from_iterator(d, (0..d).map(|i| record.voltages.values[(r, i)]));
            let i = DVector::from_iterator(d, (0..d).map(|k| cur.values[(r, k)]));
            hamiltonian_iv(&i, &v, params)
        })
        .collect())
}

/// Normalized stationary autocorrelation of the total energy at each lag.
pub fn analytic_energy_autocorrelation(params: &CircuitParams, lags: &[f64]) -> Result<Vec<f64>> {
    let sys = CircuitSystem::new(params);
    let d = params.dim();
    let sigma = sys.stationary_covariance()?;
    let s = sys.scale();
    let cinv = params.maxwell().inverse();
    let mut h = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        h[(i, i)] = s[i] * s[i] / params.cells()[i].inductance;
        for j in 0..d {
            h[(d + i, d + j)] = s[d + i] * cinv[(i, j)] * s[d + j];
        }
    }
    let cov = |k: &DMatrix<f64>| (&h * k * &h * k.transpose()).trace();
    let c0 = cov(&sigma);
    lags.iter()
        .map(|&t| {
            let k = (sys.drift() * t).exp() * &sigma;
            Ok(cov(&k) / c0)
        })
        .collect()
}

/// First lag at which the autocorrelation of `series` falls below e⁻¹,
/// linearly interpolated, in units of `spacing`.
pub fn empirical_correlation_time(series: &[f64], spacing: f64, max_lag: usize) -> Option<f64> {
    let ac = crate::stats::autocorrelation(series, max_lag);
    let thr = (-1f64).exp();
    for k in 1..ac.len() {
        if ac[k] < thr {
            let frac = (ac[k - 1] - thr) / (ac[k - 1] - ac[k]);
            return Some((k as f64 - 1.0 + frac) * spacing);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{characterized_cells, CellParams};
    use crate::linalg::rel_frobenius;
    use crate::noise::IdealGaussianSource;
    use crate::stats::sample_covariance;

    fn cell7() -> CircuitParams {
        CircuitParams::continuous(vec![characterized_cells()[7]], DMatrix::zeros(1, 1)).unwrap()
    }

    fn two_cell(sign: f64) -> CircuitParams {
        let cell = CellParams { inductance: 1.4e-6, resistance: 50.0, noise_psd: 1e-13, capacitance: 1.0e-9 };
        let c = DMatrix::from_row_slice(2, 2, &[0.0, sign * 0.47e-9, sign * 0.47e-9, 0.0]);
        CircuitParams::continuous(vec![cell, cell], c).unwrap()
    }

    fn sim_units(p: &DMatrix<f64>) -> CircuitParams {
        let d = p.nrows();
        let m = crate::circuit::MaxwellCapacitance::new(p.clone()).unwrap();
        let l = m.max_eigenvalue();
        let caps = m.cell_capacitances();
        let cells = caps
            .iter()
            .map(|&c| CellParams { inductance: l, resistance: 1.0, noise_psd: 1.0, capacitance: c })
            .collect();
        CircuitParams::continuous(cells, m.coupling()).inspect(|c| assert_eq!(c.dim(), d)).unwrap()
    }

    #[test]
    fn coordinate_views_round_trip() {
        let p = two_cell(1.0);
        let i = DVector::from_row_slice(&[1e-3, -2e-3]);
        let v = DVector::from_row_slice(&[0.3, 0.1]);
        let (f, q) = transform_coords(&i, &v, &p);
        let (i2, v2) = inverse_transform_coords(&f, &q, &p);
        assert!((i2 - &i).norm() < 1e-18 && (v2 - &v).norm() < 1e-14);
        let (f0, _) = transform_coords(&DVector::zeros(2), &v, &p);
        assert_eq!(f0.norm(), 0.0);
        let (_, q1) = transform_coords(&DVector::zeros(2), &DVector::from_row_slice(&[1.0, 0.0]), &p);
        assert!((q1[0] - 1.47e-9).abs() < 1e-21 && (q1[1] + 0.47e-9).abs() < 1e-21);
        assert!((hamiltonian(&f, &q, &p) - hamiltonian_iv(&i, &v, &p)).abs() < 1e-12 * hamiltonian(&f, &q, &p));
    }

    #[test]
    fn single_cell_energy() {
        let c = CellParams { inductance: 1e-6, resistance: 1.0, noise_psd: 0.0, capacitance: 1e-9 };
        let p = CircuitParams::continuous(vec![c], DMatrix::zeros(1, 1)).unwrap();
        let e = hamiltonian_iv(&DVector::zeros(1), &DVector::from_element(1, 1.0), &p);
        assert!((e - 0.5e-9).abs() < 1e-24);
        assert_eq!(hamiltonian(&DVector::zeros(1), &DVector::zeros(1), &p), 0.0);
    }

    #[test]
    fn correlation_time_reference_cell() {
        assert!((correlation_time(&cell7()) - 5.19e-7).abs() < 0.005e-7);
        let p = CircuitParams::characterized();
        let r_max = p.cells().iter().map(|c| c.resistance).fold(0.0, f64::max);
        let c_max = p.cells().iter().map(|c| c.capacitance).fold(0.0, f64::max);
        assert!((correlation_time(&p) - r_max * c_max).abs() < 1e-18);
    }

    #[test]
    fn stationary_reference_examples() {
        let c = CellParams { inductance: 1.0, resistance: 1.0, noise_psd: 1.0, capacitance: 1.0 };
        let p = CircuitParams::continuous(vec![c, c], DMatrix::zeros(2, 2)).unwrap();
        let r = stationary_reference(&p, 1.0).unwrap();
        assert_eq!(r.flux, DMatrix::identity(2, 2));
        let v = stationary_voltage_covariance(&cell7()).unwrap();
        assert!((v[(0, 0)] - 2.334e-3).abs() < 0.002e-3);
    }

    #[test]
    fn lyapunov_agrees_with_gibbs_when_isothermal() {
        let p = two_cell(-1.0);
        let sys = CircuitSystem::new(&p);
        let s = sys.stationary_covariance().unwrap();
        let sc = sys.scale();
        let d = 2;
        let q = DMatrix::from_fn(d, d, |i, j| s[(d + i, d + j)] * sc[d + i] * sc[d + j]);
        let cinv = p.maxwell().inverse();
        let v = &cinv * q * &cinv;
        assert!(rel_frobenius(&v, &stationary_voltage_covariance(&p).unwrap()) < 1e-9);
        // Φ and 𝒬 are uncorrelated in equilibrium
        for i in 0..d {
            for j in 0..d {
                assert!(s[(i, d + j)].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cell_seven_voltage_variance_exact() {
        let p = cell7();
        let tau = p.correlation_time();
        let cfg = TrajectoryConfig {
            dt: tau / 200.0,
            n_steps: 100_000 * 1000,
            burn_in: 5.0 * tau,
            record_stride: 1000,
            seed: 4,
        };
        let rec =
            integrate_circuit(&p, &SdeState::zeros(1), &cfg, CircuitRun::default(), &mut IdealGaussianSource::new(4))
                .unwrap();
        let var = sample_covariance(&rec.voltages.values).unwrap()[(0, 0)];
        assert!((var / 2.334e-3 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn cell_seven_em_with_step_halving() {
        // The EM bias halves with the step; the recursion's own stationary
        // covariance is exact, so no Monte Carlo noise enters.
        let p = cell7();
        let spec = GenericLangevinSpec::from_circuit(&p).unwrap();
        let want = 2.334e-3 * p.cells()[0].capacitance.powi(2);
        let tau = p.correlation_time();
        let bias = |dt: f64| {
            let s = super::super::exact::em_stationary_covariance(&spec, dt).unwrap();
            (s[(1, 1)] - want) / want
        };
        let (b1, b2) = (bias(tau / 200.0), bias(tau / 400.0));
        assert!(b1.abs() < 0.05, "{b1}");
        assert!((b1 / b2 - 2.0).abs() < 0.2, "{b1} {b2}");
    }

    #[test]
    fn undriven_cell_decays() {
        let mut c = characterized_cells()[7];
        c.noise_psd = 0.0;
        let p = CircuitParams::continuous(vec![c], DMatrix::zeros(1, 1)).unwrap();
        let s0 = SdeState::from_current_voltage(&DVector::zeros(1), &DVector::from_element(1, 1.0), &p);
        let tau = p.correlation_time();
        let cfg = TrajectoryConfig { dt: tau / 200.0, n_steps: 8000, burn_in: 0.0, record_stride: 1, seed: 0 };
        for scheme in [Scheme::Exact, Scheme::EulerMaruyama] {
            let run = CircuitRun { scheme, record_current: true, record_state: false };
            let rec = integrate_circuit(&p, &s0, &cfg, run, &mut IdealGaussianSource::new(0)).unwrap();
            let e = energy_series(&rec, &p).unwrap();
            let e0 = hamiltonian_iv(&DVector::zeros(1), &DVector::from_element(1, 1.0), &p);
            assert!(e[0] <= e0);
            assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            assert!(rec.voltages.values[(7999, 0)].abs() < 1e-6);
        }
    }

    #[test]
    fn coupling_sign_sets_correlation_sign() {
        for sign in [1.0, -1.0] {
            let p = two_cell(sign);
            let tau = p.correlation_time();
            let cfg = TrajectoryConfig { dt: tau, n_steps: 20_000 * 5, burn_in: 5.0 * tau, record_stride: 5, seed: 1 };
            let rec = integrate_circuit(
                &p,
                &SdeState::zeros(2),
                &cfg,
                CircuitRun::default(),
                &mut IdealGaussianSource::new(1),
            )
            .unwrap();
            let c = sample_covariance(&rec.voltages.values).unwrap();
            let analytic = p.maxwell().inverse()[(0, 1)];
            assert!(c[(0, 1)] * analytic > 0.0);
            assert!(analytic * sign > 0.0);
        }
    }

    #[test]
    fn circuit_em_is_bit_identical_to_udl() {
        let p = sim_units(&DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.5, -0.3, 0.0, -0.3, 1.0]));
        let tau = p.correlation_time();
        let cfg = TrajectoryConfig { dt: tau / 200.0, n_steps: 5000, burn_in: tau, record_stride: 7, seed: 12 };
        let run = CircuitRun { scheme: Scheme::EulerMaruyama, record_current: false, record_state: true };
        let rec = integrate_circuit(&p, &SdeState::zeros(3), &cfg, run, &mut IdealGaussianSource::new(12)).unwrap();
        let spec = GenericLangevinSpec::from_circuit(&p).unwrap();
        let t = super::super::integrate_udl(&spec, &DVector::zeros(3), &DVector::zeros(3), &cfg).unwrap();
        assert_eq!(rec.flux.as_ref().unwrap(), &t.x);
        assert_eq!(rec.charge.as_ref().unwrap(), t.p.as_ref().unwrap());
    }

    #[test]
    fn energy_autocorrelation_decays_on_tau() {
        let p = cell7();
        let tau = p.correlation_time();
        let ac = analytic_energy_autocorrelation(&p, &[0.0, tau, 5.0 * tau]).unwrap();
        assert!((ac[0] - 1.0).abs() < 1e-12);
        assert!(ac[2] < 0.01, "{}", ac[2]);
        // empirical crossing from a simulated trajectory
        let cfg = TrajectoryConfig { dt: tau / 20.0, n_steps: 400_000, burn_in: 5.0 * tau, record_stride: 1, seed: 8 };
        let run = CircuitRun { record_current: true, ..CircuitRun::default() };
        let rec = integrate_circuit(&p, &SdeState::zeros(1), &cfg, run, &mut IdealGaussianSource::new(8)).unwrap();
        let e = energy_series(&rec, &p).unwrap();
        let t = empirical_correlation_time(&e, cfg.dt, 200).unwrap();
        assert!((t / tau - 1.0).abs() < 0.3, "{}", t / tau);
    }

    #[test]
    fn same_seed_same_batch() {
        let p = two_cell(1.0);
        let tau = p.correlation_time();
        let cfg = TrajectoryConfig { dt: tau / 10.0, n_steps: 1000, burn_in: tau, record_stride: 3, seed: 5 };
        let a =
            integrate_circuit(&p, &SdeState::zeros(2), &cfg, CircuitRun::default(), &mut IdealGaussianSource::new(5))
                .unwrap();
        let b =
            integrate_circuit(&p, &SdeState::zeros(2), &cfg, CircuitRun::default(), &mut IdealGaussianSource::new(5))
                .unwrap();
        assert_eq!(a, b);
    }
}
