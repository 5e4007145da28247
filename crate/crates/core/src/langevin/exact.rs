//! Exact discrete-time transitions of the linear circuit SDE.

use nalgebra::DMatrix;

use crate::circuit::CircuitParams;
use crate::error::{Result, SpuError};
use crate::linalg::{continuous_lyapunov, discrete_lyapunov, psd_factor, symmetrize};

use super::generic::GenericLangevinSpec;

/// `y ← F y + G ξ` with `ξ ~ N(0, I)`, the exact transition of
/// `dy = A y dt + dW_W` over a fixed interval.
#[derive(Debug, Clone)]
pub struct LinearGaussianStep {
    n: usize,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl LinearGaussianStep {
    /// Propagator and noise covariance over `h` for drift `a` and diffusion
    /// rate `w`. Uses a short-interval block exponential followed by exact
    /// interval doubling, which stays finite for stiff, strongly damped `a`.
    pub fn new(a: &DMatrix<f64>, w: &DMatrix<f64>, h: f64) -> Result<Self> {
        let (f, q) = transition(a, w, h)?;
        Ok(Self::from_parts(&f, &q))
    }

    pub fn from_parts(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let n = f.nrows();
        let g = psd_factor(q);
        Self { n, f: f.transpose().as_slice().to_vec(), g: g.transpose().as_slice().to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn propagator(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.f)
    }

    pub fn noise_covariance(&self) -> DMatrix<f64> {
        let g = DMatrix::from_row_slice(self.n, self.n, &self.g);
        &g * g.transpose()
    }

    #[inline]
    pub fn apply(&self, y: &mut [f64], xi: &[f64], tmp: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let fr = &self.f[i * n..(i + 1) * n];
            let gr = &self.g[i * n..(i + 1) * n];
            let mut s = 0.0;
            for k in 0..n {
                s += fr[k] * y[k] + gr[k] * xi[k];
            }
            tmp[i] = s;
        }
        y.copy_from_slice(&tmp[..n]);
    }
}

fn transition(a: &DMatrix<f64>, w: &DMatrix<f64>, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let norm = a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut k = 0u32;
    while norm * h / 2f64.powi(k as i32) > 0.5 && k < 80 {
        k += 1;
    }
    let h0 = h / 2f64.powi(k as i32);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a * h0));
    m.view_mut((0, n), (n, n)).copy_from(&(w * h0));
    m.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * h0));
    let e = m.exp();
    let mut f = e.view((n, n), (n, n)).transpose();
    let mut q = symmetrize(&(&f * e.view((0, n), (n, n))));
    for _ in 0..k {
        q = symmetrize(&(&f * &q * f.transpose() + &q));
        f = &f * &f;
    }
    if !f.iter().chain(q.iter()).all(|v| v.is_finite()) {
        return Err(SpuError::Numerical("transition matrix overflowed".into()));
    }
    Ok((f, q))
}

/// `y ← F y + Γ u` for an input `u` held constant over each interval.
#[derive(Debug, Clone)]
pub struct HeldInputStep {
    n: usize,
    m: usize,
    f: Vec<f64>,
    gamma: Vec<f64>,
}

impl HeldInputStep {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> Result<Self> {
        let (n, m) = (a.nrows(), b.ncols());
        let mut big = DMatrix::zeros(n + m, n + m);
        big.view_mut((0, 0), (n, n)).copy_from(&(a * h));
        big.view_mut((0, n), (n, m)).copy_from(&(b * h));
        let e = big.exp();
        let f = e.view((0, 0), (n, n)).into_owned();
        let gamma = e.view((0, n), (n, m)).into_owned();
        if !e.iter().all(|v| v.is_finite()) {
            return Err(SpuError::Numerical("held-input transition overflowed".into()));
        }
        Ok(Self { n, m, f: f.transpose().as_slice().to_vec(), gamma: gamma.transpose().as_slice().to_vec() })
    }

    #[inline]
    pub fn apply(&self, y: &mut [f64], u: &[f64], tmp: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            let fr = &self.f[i * n..(i + 1) * n];
            let gr = &self.gamma[i * m..(i + 1) * m];
            let mut s = 0.0;
            for k in 0..n {
                s += fr[k] * y[k];
            }
            for k in 0..m {
                s += gr[k] * u[k];
            }
            tmp[i] = s;
        }
        y.copy_from_slice(&tmp[..n]);
    }
}

/// The circuit as a linear system in balanced coordinates `y = D⁻¹ (Φ, 𝒬)`.
#[derive(Debug, Clone)]
pub struct CircuitSystem {
    d: usize,
    scale: Vec<f64>,
    a: DMatrix<f64>,
    w: DMatrix<f64>,
    input: DMatrix<f64>,
    c_inv: DMatrix<f64>,
    inductance: Vec<f64>,
    kappa: Vec<f64>,
}

impl CircuitSystem {
    pub fn new(params: &CircuitParams) -> Self {
        let d = params.dim();
        let cells = params.cells();
        let c = params.maxwell().matrix();
        let c_inv = params.maxwell().inverse();
        let temps: Vec<f64> = cells.iter().map(|c| c.effective_kt()).filter(|t| *t > 0.0).collect();
        let kt = if temps.is_empty() { 1.0 } else { temps.iter().sum::<f64>() / temps.len() as f64 };
        let mut scale = vec![0.0; 2 * d];
        for i in 0..d {
            scale[i] = (kt * cells[i].inductance).sqrt();
            scale[d + i] = (kt * c[(i, i)]).sqrt();
        }
        // x-coordinates: dΦ = C⁻¹ 𝒬 dt; d𝒬 = (−L⁻¹Φ − R⁻¹C⁻¹𝒬) dt + √(2κ₀) dW
        let mut a = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                a[(i, d + j)] = c_inv[(i, j)];
                a[(d + i, d + j)] = -c_inv[(i, j)] / cells[i].resistance;
            }
            a[(d + i, i)] = -1.0 / cells[i].inductance;
        }
        let mut w = DMatrix::zeros(2 * d, 2 * d);
        let mut input = DMatrix::zeros(2 * d, d);
        for i in 0..d {
            w[(d + i, d + i)] = 2.0 * cells[i].noise_psd / (scale[d + i] * scale[d + i]);
            input[(d + i, i)] = 1.0 / scale[d + i];
        }
        for i in 0..2 * d {
            for j in 0..2 * d {
                a[(i, j)] *= scale[j] / scale[i];
            }
        }
        Self {
            d,
            scale,
            a,
            w,
            input,
            c_inv,
            inductance: cells.iter().map(|c| c.inductance).collect(),
            kappa: cells.iter().map(|c| c.noise_psd).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn white_step(&self, h: f64) -> Result<LinearGaussianStep> {
        LinearGaussianStep::new(&self.a, &self.w, h)
    }

    /// Transition for per-cell input currents held over `h`.
    pub fn held_step(&self, h: f64) -> Result<HeldInputStep> {
        HeldInputStep::new(&self.a, &self.input, h)
    }

    /// Stationary covariance of the balanced state.
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>> {
        continuous_lyapunov(&self.a, &self.w)
    }

    pub fn to_balanced(&self, flux: &[f64], charge: &[f64], y: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            y[i] = flux[i] / self.scale[i];
            y[d + i] = charge[i] / self.scale[d + i];
        }
    }

    pub fn voltage(&self, y: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..d {
                s += self.c_inv[(i, j)] * y[d + j] * self.scale[d + j];
            }
            *o = s;
        }
    }

    pub fn current(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[i] * self.scale[i] / self.inductance[i];
        }
    }

    pub fn flux(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[i] * self.scale[i];
        }
    }

    pub fn charge(&self, y: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[d + i] * self.scale[d + i];
        }
    }
}

/// Stationary covariance of `(x, p)` under the semi-implicit Euler–Maruyama
/// recursion with step `dt`, for a quadratic potential.
pub fn em_stationary_covariance(spec: &GenericLangevinSpec, dt: f64) -> Result<DMatrix<f64>> {
    let d = spec.dim();
    let k = spec
        .potential()
        .hessian()
        .ok_or_else(|| SpuError::InvalidParameter("requires a quadratic potential".into()))?;
    let minv = spec.mass_inverse();
    let gamma = DMatrix::from_diagonal(spec.damping());
    let eye = DMatrix::<f64>::identity(d, d);
    let damp = &eye - &gamma * minv * dt;
    let mut t = DMatrix::zeros(2 * d, 2 * d);
    t.view_mut((0, 0), (d, d)).copy_from(&(&eye - minv * k * (dt * dt)));
    t.view_mut((0, d), (d, d)).copy_from(&(minv * &damp * dt));
    t.view_mut((d, 0), (d, d)).copy_from(&(-k * dt));
    t.view_mut((d, d), (d, d)).copy_from(&damp);
    let amp2 = DMatrix::from_diagonal(&spec.damping().zip_map(spec.beta(), |g, b| 2.0 * g / b * dt));
    let mut lift = DMatrix::zeros(2 * d, d);
    lift.view_mut((0, 0), (d, d)).copy_from(&(minv * dt));
    lift.view_mut((d, 0), (d, d)).copy_from(&eye);
    let q = &lift * amp2 * lift.transpose();
    discrete_lyapunov(&t, &q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_ou_transition() {
        // dy = -a y dt + s dW
        let (a, s, h) = (2.0, 0.7, 0.3);
        let step =
            LinearGaussianStep::new(&DMatrix::from_element(1, 1, -a), &DMatrix::from_element(1, 1, s * s), h).unwrap();
        assert!((step.propagator()[(0, 0)] - (-a * h).exp()).abs() < 1e-14);
        let q = s * s / (2.0 * a) * (1.0 - (-2.0 * a * h).exp());
        assert!((step.noise_covariance()[(0, 0)] - q).abs() < 1e-14);
    }

    #[test]
    fn long_step_of_stiff_system_stays_finite() {
        let a = DMatrix::from_row_slice(2, 2, &[-1e4, 0.0, 0.0, -1.0]);
        let w = DMatrix::identity(2, 2);
        let step = LinearGaussianStep::new(&a, &w, 50.0).unwrap();
        let q = step.noise_covariance();
        assert!((q[(0, 0)] - 0.5e-4).abs() < 1e-12);
        assert!((q[(1, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn held_input_matches_integral() {
        // dy = -a y dt + u dt => Γ = (1 - e^{-ah}) / a
        let (a, h) = (3.0, 0.2);
        let st = HeldInputStep::new(&DMatrix::from_element(1, 1, -a), &DMatrix::from_element(1, 1, 1.0), h).unwrap();
        let mut y = [0.0];
        let mut tmp = [0.0];
        st.apply(&mut y, &[1.0], &mut tmp);
        assert!((y[0] - (1.0 - (-a * h).exp()) / a).abs() < 1e-14);
    }
}
