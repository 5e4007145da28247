use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, SpuError};
use crate::linalg::{ensure_positive_definite, max_eigenvalue, spd_inverse};
use crate::noise::{IdealGaussianSource, NoiseSource};

/// Potential energy `U(x)` with its gradient.
pub trait Potential: Send + Sync {
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn energy(&self, x: &[f64]) -> f64;
    /// Constant Hessian for quadratic potentials.
    fn hessian(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

/// `U(x) = ½ xᵀ A x`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    a: DMatrix<f64>,
}

impl QuadraticPotential {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl Potential for QuadraticPotential {
    #[inline]
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate().take(n) {
                s += self.a[(i, j)] * xj;
            }
            *o = s;
        }
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let v = DVector::from_row_slice(x);
        0.5 * v.dot(&(&self.a * &v))
    }

    fn hessian(&self) -> Option<&DMatrix<f64>> {
        Some(&self.a)
    }
}

/// `U = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreePotential;

impl Potential for FreePotential {
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn energy(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub enum Mass {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

/// Langevin system `dx = M⁻¹p dt`, `dp = −∇U dt − γ M⁻¹p dt + √(2γ/β) dW`.
///
/// Damping and inverse temperature are stored per coordinate; the scalar
/// constructor broadcasts them.
#[derive(Clone)]
pub struct GenericLangevinSpec {
    dim: usize,
    mass_inv: DMatrix<f64>,
    mass: DMatrix<f64>,
    damping: DVector<f64>,
    beta: DVector<f64>,
    potential: Arc<dyn Potential>,
    zero_noise: bool,
}

impl std::fmt::Debug for GenericLangevinSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericLangevinSpec")
            .field("dim", &self.dim)
            .field("damping", &self.damping)
            .field("beta", &self.beta)
            .field("zero_noise", &self.zero_noise)
            .finish()
    }
}

impl GenericLangevinSpec {
    pub fn new(dim: usize, mass: Mass, damping: f64, beta: f64, potential: Arc<dyn Potential>) -> Result<Self> {
        Self::per_coordinate(
            dim,
            mass,
            DVector::from_element(dim, damping),
            DVector::from_element(dim, beta),
            potential,
        )
    }

    pub fn per_coordinate(
        dim: usize,
        mass: Mass,
        damping: DVector<f64>,
        beta: DVector<f64>,
        potential: Arc<dyn Potential>,
    ) -> Result<Self> {
        if dim == 0 || damping.len() != dim || beta.len() != dim {
            return Err(SpuError::Dimension("damping/beta length must match the dimension".into()));
        }
        if damping.iter().any(|g| !(*g > 0.0)) || beta.iter().any(|b| !(*b > 0.0)) {
            return Err(invalid("damping and inverse temperature must be positive"));
        }
        let mass = match mass {
            Mass::Scalar(m) if m > 0.0 && m.is_finite() => DMatrix::from_diagonal_element(dim, dim, m),
            Mass::Scalar(_) => return Err(invalid("mass must be positive")),
            Mass::Matrix(m) => {
                if m.nrows() != dim {
                    return Err(SpuError::Dimension("mass matrix has the wrong size".into()));
                }
                ensure_positive_definite(&m)?;
                m
            }
        };
        let mass_inv = spd_inverse(&mass)?;
        Ok(Self { dim, mass_inv, mass, damping, beta, potential, zero_noise: false })
    }

    /// Disables the stochastic forcing (the β → ∞ limit).
    pub fn with_zero_noise(mut self) -> Self {
        self.zero_noise = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.mass_inv
    }

    pub fn damping(&self) -> &DVector<f64> {
        &self.damping
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    /// `U(x) + ½ pᵀ M⁻¹ p`.
    pub fn energy(&self, x: &[f64], p: &[f64]) -> f64 {
        let pv = DVector::from_row_slice(p);
        self.potential.energy(x) + 0.5 * pv.dot(&(&self.mass_inv * &pv))
    }

    fn noise_amplitudes(&self) -> Vec<f64> {
        if self.zero_noise {
            return vec![0.0; self.dim];
        }
        self.damping.iter().zip(self.beta.iter()).map(|(g, b)| (2.0 * g / b).sqrt()).collect()
    }

    /// Fastest deterministic timescale, when it can be bounded.
    fn fastest_time(&self) -> Option<f64> {
        let h = self.potential.hessian()?;
        let m_max = max_eigenvalue(&self.mass);
        let m_min = crate::linalg::min_eigenvalue(&self.mass);
        let omega = (max_eigenvalue(h).max(0.0) / m_min).sqrt();
        let g = self.damping.max();
        Some((1.0 / omega.max(1e-300)).min(m_max / g))
    }
}

/// Step size, record cadence and seeding of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryConfig {
    /// Integrator step, seconds (or simulation time units).
    pub dt: f64,
    /// Steps integrated after burn-in.
    pub n_steps: usize,
    /// Discarded initial time, same units as `dt`.
    pub burn_in: f64,
    pub record_stride: usize,
    pub seed: u64,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(invalid("burn-in must be non-negative"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record stride must be at least 1"));
        }
        Ok(())
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in / self.dt).ceil() as usize
    }

    pub fn n_records(&self) -> usize {
        self.n_steps / self.record_stride
    }

    /// Time stamp of record `k` (0-based).
    pub fn record_time(&self, k: usize) -> f64 {
        self.burn_in_steps() as f64 * self.dt + ((k + 1) * self.record_stride) as f64 * self.dt
    }
}

/// Recorded states; rows are records.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: DMatrix<f64>,
    /// Momenta (absent for overdamped runs).
    pub p: Option<DMatrix<f64>>,
    pub final_x: DVector<f64>,
    pub final_p: Option<DVector<f64>>,
}

fn non_finite(step: usize) -> SpuError {
    SpuError::Numerical(format!("state became non-finite at step {step}; reduce dt"))
}

fn warn_step(spec: &GenericLangevinSpec, dt: f64) {
    if let Some(t) = spec.fastest_time() {
        if dt > t / 50.0 {
            log::warn!("dt = {dt:.3e} exceeds 1/50 of the fastest timescale {t:.3e}");
        }
    }
}

/// Underdamped integration with the ideal Gaussian source seeded by `cfg.seed`.
pub fn integrate_udl(
    spec: &GenericLangevinSpec,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    cfg: &TrajectoryConfig,
) -> Result<Trajectory> {
    let mut noise = IdealGaussianSource::new(cfg.seed);
    integrate_udl_with(spec, x0, p0, cfg, &mut noise)
}

/// Semi-implicit Euler–Maruyama: the momentum is advanced with the force at
/// the current position, then the position with the updated momentum.
pub fn integrate_udl_with(
    spec: &GenericLangevinSpec,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    cfg: &TrajectoryConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Trajectory> {
    cfg.validate()?;
    let d = spec.dim;
    if x0.len() != d || p0.len() != d {
        return Err(SpuError::Dimension("initial state has the wrong size".into()));
    }
    if let Some(h) = noise.hold_time() {
        if ((h - cfg.dt) / cfg.dt).abs() > 1e-9 {
            return Err(invalid("a held noise source requires dt equal to its hold time"));
        }
    }
    warn_step(spec, cfg.dt);
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let amp: Vec<f64> = spec.noise_amplitudes().iter().map(|a| a * sqrt_dt).collect();
    let minv = spec.mass_inv.as_slice().to_vec(); // column-major
    let gamma = spec.damping.as_slice().to_vec();

    let mut x = x0.as_slice().to_vec();
    let mut p = p0.as_slice().to_vec();
    let mut v = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let matvec = |p: &[f64], v: &mut [f64]| {
        v.fill(0.0);
        for (j, pj) in p.iter().enumerate() {
            let col = &minv[j * d..(j + 1) * d];
            for i in 0..d {
                v[i] += col[i] * pj;
            }
        }
    };
    matvec(&p, &mut v);

    let burn = cfg.burn_in_steps();
    let n_rec = cfg.n_records();
    let total = burn + n_rec * cfg.record_stride;
    let mut xs = DMatrix::zeros(n_rec, d);
    let mut ps = DMatrix::zeros(n_rec, d);
    let mut rec = 0;
    for step in 0..total {
        spec.potential.gradient(&x, &mut grad);
        noise.fill(&mut xi)?;
        for i in 0..d {
            p[i] += (-grad[i] - gamma[i] * v[i]) * dt + amp[i] * xi[i];
        }
        matvec(&p, &mut v);
        for i in 0..d {
            x[i] += v[i] * dt;
        }
        let done = step + 1;
        if done > burn && (done - burn) % cfg.record_stride == 0 {
            if !x.iter().chain(p.iter()).all(|z| z.is_finite()) {
                return Err(non_finite(done));
            }
            for i in 0..d {
                xs[(rec, i)] = x[i];
                ps[(rec, i)] = p[i];
            }
            rec += 1;
        }
    }
    if !x.iter().chain(p.iter()).all(|z| z.is_finite()) {
        return Err(non_finite(total));
    }
    Ok(Trajectory {
        times: (0..n_rec).map(|k| cfg.record_time(k)).collect(),
        x: xs,
        p: Some(ps),
        final_x: DVector::from_vec(x),
        final_p: Some(DVector::from_vec(p)),
    })
}

/// Overdamped integration with the ideal Gaussian source seeded by `cfg.seed`.
pub fn integrate_odl(spec: &GenericLangevinSpec, x0: &DVector<f64>, cfg: &TrajectoryConfig) -> Result<Trajectory> {
    let mut noise = IdealGaussianSource::new(cfg.seed);
    integrate_odl_with(spec, x0, cfg, &mut noise)
}

/// Euler–Maruyama for `dx = −γ⁻¹∇U dt + √(2/(γβ)) dW`.
pub fn integrate_odl_with(
    spec: &GenericLangevinSpec,
    x0: &DVector<f64>,
    cfg: &TrajectoryConfig,
    noise: &mut dyn NoiseSource,
) -> Result<Trajectory> {
    cfg.validate()?;
    let d = spec.dim;
    if x0.len() != d {
        return Err(SpuError::Dimension("initial state has the wrong size".into()));
    }
    let dt = cfg.dt;
    let drift: Vec<f64> = spec.damping.iter().map(|g| dt / g).collect();
    let amp: Vec<f64> = if spec.zero_noise {
        vec![0.0; d]
    } else {
        spec.damping.iter().zip(spec.beta.iter()).map(|(g, b)| (2.0 * dt / (g * b)).sqrt()).collect()
    };
    let mut x = x0.as_slice().to_vec();
    let mut grad = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let burn = cfg.burn_in_steps();
    let n_rec = cfg.n_records();
    let total = burn + n_rec * cfg.record_stride;
    let mut xs = DMatrix::zeros(n_rec, d);
    let mut rec = 0;
    for step in 0..total {
        spec.potential.gradient(&x, &mut grad);
        noise.fill(&mut xi)?;
        for i in 0..d {
            x[i] += -drift[i] * grad[i] + amp[i] * xi[i];
        }
        let done = step + 1;
        if done > burn && (done - burn) % cfg.record_stride == 0 {
            if !x.iter().all(|z| z.is_finite()) {
                return Err(non_finite(done));
            }
            for i in 0..d {
                xs[(rec, i)] = x[i];
            }
            rec += 1;
        }
    }
    Ok(Trajectory {
        times: (0..n_rec).map(|k| cfg.record_time(k)).collect(),
        x: xs,
        p: None,
        final_x: DVector::from_vec(x),
        final_p: None,
    })
}
