use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spu_core::circuit::DeviceTemplate;
use spu_core::langevin::Scheme;
use spu_core::noise::NoiseChainConfig;
use spu_core::thermo::{AdcModel, DeviceMode, HardwareOptions, NoiseMode, SamplingPlan, SamplingRate};

#[derive(Debug, Parser, Serialize)]
#[command(name = "spu", version, about = "Emulated switched-capacitor thermodynamic sampling unit")]
pub struct Cli {
    /// Directory for CSV, JSON and SVG outputs.
    #[arg(long, global = true, env = "SPU_OUT_DIR", default_value = "spu-out")]
    pub out: PathBuf,
    /// Master seed; every random stream of the run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Independent sampling chains, run in parallel and merged in chain order.
    #[arg(long, global = true, default_value_t = 1)]
    pub chains: usize,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw Gaussian samples from a precision or covariance matrix.
    Sample(SampleArgs),
    /// Estimate the inverse of a positive-definite matrix from device samples.
    Invert(InvertArgs),
    /// Gaussian process regression with a digital or device inverter.
    Gpr(GprArgs),
    /// Straight-line least squares through the normal equations.
    Lsq(LsqArgs),
    /// Patch-wise posterior draws over a grid.
    SngpSample(SngpArgs),
    /// Scaling-vector calibration of a board with parallel loading.
    Calibrate(CalibrateArgs),
    /// Noise-driven spectrum of one cell, optionally fitted.
    Spectroscopy(SpectroscopyArgs),
    /// Two-cell drive/probe scan for coupling and cell faults.
    Faultscan(FaultscanArgs),
    /// Time and energy cost model against a digital baseline.
    Perf(PerfArgs),
    /// Error against sample budget across noise levels or sampling rates.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceArg {
    /// Exactly compiled device in simulation units.
    Ideal,
    /// Capacitor banks, ADC and board cell values.
    Hardware,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Ideal,
    /// Gold-code LFSR pairs with PDM gating and RC filtering.
    Lfsr,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Exact,
    /// Semi-implicit Euler–Maruyama.
    Em,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EngineArg {
    Digital,
    Thermodynamic,
}

/// Device and sampling settings shared by the sampling subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DeviceArgs {
    #[arg(long, value_enum, default_value_t = DeviceArg::Ideal)]
    pub device: DeviceArg,
    /// Raw sampling rate in samples per correlation time.
    #[arg(long, default_value_t = 10.0)]
    pub rate_per_tau: f64,
    /// Raw sampling rate in Hz (device time units on the ideal device); overrides --rate-per-tau.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// Keep every raw sample instead of thinning to five correlation times.
    #[arg(long)]
    pub correlated: bool,
    /// Discarded equilibration time, in correlation times.
    #[arg(long, default_value_t = 5.0)]
    pub burn_in: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Ideal)]
    pub noise: NoiseArg,
    /// Noise scale for ideal noise, PDM duty cycle in [0, 1] for LFSR noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise_level: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Exact)]
    pub scheme: SchemeArg,
    /// Relative Gaussian spread applied to every L, R and C.
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// Hardware: use continuous capacitances instead of the banks.
    #[arg(long)]
    pub continuous: bool,
    /// Hardware: parallel loading resistance to each higher cell, ohms.
    #[arg(long)]
    pub loading_resistance: Option<f64>,
    /// Hardware: skip the 10-bit readout quantizer.
    #[arg(long)]
    pub no_adc: bool,
}

impl DeviceArgs {
    pub fn plan(&self, n_samples: usize, seed: u64, chains: usize) -> SamplingPlan {
        let device = match self.device {
            DeviceArg::Ideal => DeviceMode::Ideal,
            DeviceArg::Hardware => DeviceMode::Hardware(HardwareOptions {
                template: DeviceTemplate::nominal(),
                quantize: !self.continuous,
                loading_resistance: self.loading_resistance,
                adc: if self.no_adc { None } else { Some(AdcModel::default()) },
            }),
        };
        SamplingPlan {
            n_samples,
            sampling_rate: match self.rate_hz {
                Some(f) => SamplingRate::Hz(f),
                None => SamplingRate::PerCorrelationTime(self.rate_per_tau),
            },
            burn_in_multiple: self.burn_in,
            noise_level: self.noise_level,
            decorrelate: !self.correlated,
            seed,
            chains,
            scheme: match self.scheme {
                SchemeArg::Exact => Scheme::Exact,
                SchemeArg::Em => Scheme::EulerMaruyama,
            },
            noise: match self.noise {
                NoiseArg::Ideal => NoiseMode::Ideal,
                NoiseArg::Lfsr => NoiseMode::LfsrChain(NoiseChainConfig::default()),
            },
            device,
            component_tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Precision matrix P, CSV without header; samples follow N(0, P⁻¹).
    #[arg(long, conflicts_with = "covariance", required_unless_present = "covariance")]
    pub precision: Option<PathBuf>,
    /// Covariance matrix Σ, CSV without header.
    #[arg(long)]
    pub covariance: Option<PathBuf>,
    /// Number of samples.
    #[arg(long, short, default_value_t = 10_000)]
    pub n: usize,
    /// Draw exact samples digitally instead of running the device.
    #[arg(long)]
    pub digital: bool,
    /// Relative asymmetry accepted when loading matrices.
    #[arg(long, default_value_t = 1e-9)]
    pub symmetry_tol: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InvertArgs {
    /// Positive-definite matrix A, CSV without header.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub symmetry_tol: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GprArgs {
    /// Training data `x,y` CSV; default is a noisy sine on --points evenly spaced inputs.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Synthetic training points.
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    /// Synthetic input range start.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x_min: f64,
    /// Synthetic input range end.
    #[arg(long, default_value_t = std::f64::consts::TAU, allow_negative_numbers = true)]
    pub x_max: f64,
    /// Evenly spaced test inputs over the training range.
    #[arg(long, default_value_t = 50)]
    pub test_points: usize,
    /// RBF length scale.
    #[arg(long, default_value_t = 1.0)]
    pub length_scale: f64,
    /// RBF signal variance.
    #[arg(long, default_value_t = 1.0)]
    pub signal_variance: f64,
    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, value_enum, default_value_t = EngineArg::Thermodynamic)]
    pub inverter: EngineArg,
    /// Device samples per inversion.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LsqArgs {
    /// `x,y` CSV; the model is y = β₀ + β₁ x.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Thermodynamic)]
    pub inverter: EngineArg,
    /// Device samples per inversion.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SngpArgs {
    /// Posterior mean over the grid, one value per line.
    #[arg(long, requires = "covariance")]
    pub mean: Option<PathBuf>,
    /// Posterior covariance over the grid, CSV without header.
    #[arg(long, requires = "mean")]
    pub covariance: Option<PathBuf>,
    /// Side of the bundled two-moons grid, used when no mean/covariance is given.
    #[arg(long, default_value_t = 16)]
    pub fixture_side: usize,
    /// Grid points per patch; at most the 8 device cells.
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    /// Posterior draws.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, value_enum, default_value_t = EngineArg::Thermodynamic)]
    pub sampler: EngineArg,
    #[arg(long, default_value_t = 1e-9)]
    pub symmetry_tol: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Parallel loading resistance as a multiple of the cell resistance.
    #[arg(long, default_value_t = 5.0)]
    pub loading_ratio: f64,
    /// Samples in the baseline and in the corrected run.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Relative Gaussian spread applied to every L, R and C.
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectroscopyArgs {
    /// Board cell whose measured values are planted (0-7).
    #[arg(long, default_value_t = 0, conflicts_with = "params")]
    pub cell: usize,
    /// Cell parameters as JSON `{inductance, resistance, noise_psd, capacitance}` in SI units.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Samples recorded at the 12 MHz readout rate.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Welch segment length.
    #[arg(long, default_value_t = 4096)]
    pub segment: usize,
    /// Welch segment overlap fraction.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Fit L, R, κ₀ and C starting from the nominal cell on the 6.5 nF bank.
    #[arg(long)]
    pub fit: bool,
    /// Hold C at this value (farads) during the fit.
    #[arg(long)]
    pub fix_capacitance: Option<f64>,
    /// Random restarts of the simplex fit.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FaultscanArgs {
    /// JSON list of faults, e.g. `[{"kind":"dead_cell","cell":2}]`.
    #[arg(long)]
    pub faults: Option<PathBuf>,
    /// Disable the coupling between two cells, as `a,b`.
    #[arg(long, value_name = "A,B")]
    pub dead_coupling: Vec<String>,
    /// Silence a cell's noise source.
    #[arg(long, value_name = "CELL")]
    pub dead_cell: Vec<usize>,
    /// Scale a cell's capacitance, as `cell:factor`.
    #[arg(long, value_name = "CELL:FACTOR")]
    pub cap_shift: Vec<String>,
    /// Samples per drive/probe configuration.
    #[arg(long, default_value_t = 65_536)]
    pub samples: usize,
    /// White readout noise, volts rms.
    #[arg(long, default_value_t = 1e-4)]
    pub readout_noise: f64,
    /// Multiplier on the drive cell's noise level.
    #[arg(long, default_value_t = 1.0)]
    pub drive_level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PerfArgs {
    /// Measured digital baseline `d,n_samples,time_s,energy_j`; defaults to the bundled table.
    #[arg(long)]
    pub digital_baseline: Option<PathBuf>,
    /// Samples per problem.
    #[arg(long, default_value_t = 10_000)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 8)]
    pub d_min: usize,
    #[arg(long, default_value_t = 100_000)]
    pub d_max: usize,
    /// Log-spaced dimensions in the curve.
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// Cell relaxation time, seconds.
    #[arg(long, default_value_t = 1e-6)]
    pub time_constant: f64,
    /// ADC conversions per second per channel.
    #[arg(long, default_value_t = 1e7)]
    pub adc_rate: f64,
    /// Watts per cell.
    #[arg(long, default_value_t = 5e-6)]
    pub power_per_cell: f64,
    /// Seconds to compute one capacitor element.
    #[arg(long, default_value_t = 1e-8)]
    pub compile_time: f64,
    /// Seconds to load one capacitor element.
    #[arg(long, default_value_t = 3.2e-7)]
    pub load_time: f64,
    /// Sample spacing, in time constants.
    #[arg(long, default_value_t = 5.0)]
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AxisArg {
    NoiseLevel,
    SamplingRate,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Axis values: noise levels, or rates in the units of --rate-hz / --rate-per-tau.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    /// Fixed sample counts.
    #[arg(long, value_delimiter = ',', conflicts_with = "windows", required_unless_present = "windows")]
    pub counts: Vec<usize>,
    /// Fixed acquisition windows, in correlation times (device time with --rate-hz).
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<f64>,
    /// Precision matrix; defaults to the 8-cell bank-3 board with every coupling on.
    #[arg(long)]
    pub precision: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    pub symmetry_tol: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}
