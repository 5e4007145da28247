use nalgebra::{Complex, DMatrix};

use crate::batch::SampleBatch;
use crate::circuit::CircuitParams;
use crate::error::{invalid, Result, SpuError};
use crate::langevin::{integrate_circuit, CircuitRun, CircuitSystem, SdeState, TrajectoryConfig};
use crate::noise::IdealGaussianSource;

/// ADC sample rate of the reference readout.
pub const READOUT_RATE: f64 = 12e6;

/// Voltages of every cell sampled at `sample_rate` after a burn-in of ten
/// correlation times, with ideal white current noise.
pub fn record_voltages(params: &CircuitParams, sample_rate: f64, n: usize, seed: u64) -> Result<SampleBatch> {
    if !(sample_rate > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    let cfg = TrajectoryConfig {
        dt: 1.0 / sample_rate,
        n_steps: n,
        burn_in: 10.0 * params.correlation_time(),
        record_stride: 1,
        seed,
    };
    let mut noise = IdealGaussianSource::new(seed);
    let rec = integrate_circuit(params, &SdeState::zeros(params.dim()), &cfg, CircuitRun::default(), &mut noise)?;
    Ok(rec.voltages)
}

/// One-sided density of the voltage of cell `probe` sampled at `sample_rate`,
/// including aliasing, evaluated at `frequencies`.
pub fn sampled_voltage_spectrum(
    params: &CircuitParams,
    probe: usize,
    sample_rate: f64,
    frequencies: &[f64],
) -> Result<Vec<f64>> {
    let d = params.dim();
    if probe >= d {
        return Err(SpuError::Dimension(format!("probe {probe} out of range for {d} cells")));
    }
    let sys = CircuitSystem::new(params);
    let step = sys.white_step(1.0 / sample_rate)?;
    let f = step.propagator().map(|v| Complex::new(v, 0.0));
    let q = step.noise_covariance();
    let n = 2 * d;
    let mut c = vec![0.0; n];
    let mut basis = vec![0.0; n];
    let mut out = vec![0.0; d];
    for (j, cj) in c.iter_mut().enumerate() {
        basis[j] = 1.0;
        sys.voltage(&basis, &mut out);
        *cj = out[probe];
        basis[j] = 0.0;
    }
    let rhs = DMatrix::from_fn(n, 1, |i, _| Complex::new(c[i], 0.0));
    let eye = DMatrix::<Complex<f64>>::identity(n, n);
    frequencies
        .iter()
        .map(|&freq| {
            let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
            let z = Complex::new(w.cos(), -w.sin());
            let m = (&eye - &f * z).transpose();
            let r = m.lu().solve(&rhs).ok_or_else(|| SpuError::Numerical("singular spectral resolvent".into()))?;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += (r[i] * q[(i, j)] * r[j].conj()).re;
                }
            }
            Ok(2.0 * s.max(0.0) / sample_rate)
        })
        .collect()
}

/// Like [`sampled_voltage_spectrum`] for a single isolated cell.
pub fn cell_spectrum(cell: &crate::circuit::CellParams, sample_rate: f64, frequencies: &[f64]) -> Result<Vec<f64>> {
    let p = CircuitParams::continuous(vec![*cell], DMatrix::zeros(1, 1))?;
    sampled_voltage_spectrum(&p, 0, sample_rate, frequencies)
}
