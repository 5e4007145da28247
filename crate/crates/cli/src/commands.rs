use std::fs::File;
use std::io::BufReader;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;
use spu_core::apps::{
    gpr_posterior, line_design, linear_least_squares, linspace, sngp_patch_sample, two_moons_fixture, Dataset1D,
    DigitalInverter, DigitalSampler, GaussianSampler, Inverter, KernelSpec, ThermodynamicInverter,
    ThermodynamicSampler,
};
use spu_core::calibration::{
    apply_scaling, cell_spectrum, compute_scaling_vector, fit_cell_params, fit_loading_model, record_voltages,
    two_cell_fault_scan, CellMeasurement, Fault, FaultFlag, FaultScanConfig, FitOptions, READOUT_RATE,
};
use spu_core::circuit::{characterized_cells, CAPACITOR_BANKS_NF};
use spu_core::compiler::TargetSpec;
use spu_core::io::{read_dataset_file, read_matrix_file, read_symmetric_matrix_file, write_dataset, write_matrix};
use spu_core::perf::{
    crossover, energy_crossover, log_grid, loglog_fit_slope, perf_curve, read_baseline, write_perf_csv,
    DigitalCostParams, SpuCostParams, DEFAULT_MAX_CROSSOVER_D,
};
use spu_core::stats::sample_covariance;
use spu_core::thermo::{
    invert_matrix, moment_errors, parameter_study, sample_gaussian, Backend, DeviceMode, HardwareOptions, SamplingPlan,
    StudyAxis, StudyBudget,
};
use spu_core::{CellParams, CircuitParams, DeviceTemplate, Result, SpuError};

use crate::args::*;
use crate::output::Output;
use crate::svg::{Plot, Series};

const BUNDLED_BASELINE: &str = include_str!("../../../data/digital_baseline.csv");

pub struct Ctx {
    pub seed: u64,
    pub chains: usize,
}

fn invalid(msg: impl Into<String>) -> SpuError {
    SpuError::InvalidParameter(msg.into())
}

fn inverter(engine: EngineArg, plan: SamplingPlan) -> Box<dyn Inverter> {
    match engine {
        EngineArg::Digital => Box::new(DigitalInverter),
        EngineArg::Thermodynamic => Box::new(ThermodynamicInverter::new(plan)),
    }
}

pub fn sample(a: &SampleArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let target = match (&a.precision, &a.covariance) {
        (Some(p), _) => TargetSpec::precision(read_symmetric_matrix_file(p, a.symmetry_tol)?)?,
        (None, Some(c)) => TargetSpec::covariance(read_symmetric_matrix_file(c, a.symmetry_tol)?)?,
        (None, None) => return Err(invalid("give --precision or --covariance")),
    };
    let plan = a.device.plan(a.n, ctx.seed, ctx.chains);
    let backend = if a.digital { Backend::DigitalReference } else { Backend::EmulatedSpu };
    let batch = sample_gaussian(&target, &plan, backend)?;
    let est = sample_covariance(&batch.values)?;
    let report = moment_errors(&batch, &target)?;

    out.write("samples.csv", |w| batch.write_csv(w))?;
    out.write("samples.json", |w| batch.write_sidecar(w))?;
    out.write("covariance.csv", |w| write_matrix(&est, w))?;
    out.write("moments.csv", |w| report.write_csv(w))?;
    let pts = |v: &[f64]| report.counts.iter().zip(v).map(|(&n, &e)| (n as f64, e)).collect();
    let plot = Plot::new("Moment error", "samples", "relative error")
        .log_x()
        .log_y()
        .with(Series::line("covariance", pts(&report.covariance_error)))
        .with(Series::line("skewness", pts(&report.skewness_error)))
        .with(Series::line("kurtosis", pts(&report.kurtosis_error)));
    out.text("moments.svg", &plot.render())?;
    if let Some((c, s, k)) = report.last() {
        println!("samples: {}  dim: {}", batch.len(), batch.dim());
        println!("cov_err: {c:.4e}  skew_err: {s:.4e}  kurt_err: {k:.4e}");
    }
    Ok(())
}

pub fn invert(a: &InvertArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let m = read_symmetric_matrix_file(&a.matrix, a.symmetry_tol)?;
    let plan = a.device.plan(a.samples, ctx.seed, ctx.chains);
    let res = invert_matrix(&m, &plan)?;
    out.write("inverse.csv", |w| write_matrix(&res.estimate, w))?;
    out.write("exact_inverse.csv", |w| write_matrix(&res.exact, w))?;
    out.write("error_series.csv", |w| {
        writeln!(w, "n_samples,rel_frobenius_error")?;
        for p in &res.error_series {
            writeln!(w, "{},{:e}", p.n_samples, p.error)?;
        }
        Ok(())
    })?;
    let pts: Vec<(f64, f64)> = res.error_series.iter().map(|p| (p.n_samples as f64, p.error)).collect();
    let mut plot = Plot::new("Inversion error", "samples", "relative Frobenius error").log_x().log_y();
    if let Some(&(n0, e0)) = pts.first() {
        let guide = pts.iter().map(|&(n, _)| (n, e0 * (n0 / n).sqrt())).collect();
        plot = plot.with(Series::line("measured", pts.clone())).with(Series::line("N^-1/2", guide));
    }
    out.text("error.svg", &plot.render())?;
    println!("dim: {}  samples: {}  rel_error: {:.4e}", m.nrows(), a.samples, res.final_error());
    Ok(())
}

pub fn gpr(a: &GprArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let train = match &a.train {
        Some(p) => read_dataset_file(p)?,
        None => Dataset1D::noisy_sine(a.points, a.x_min, a.x_max, a.noise_sd, ctx.seed)?,
    };
    let spec =
        KernelSpec { length_scale: a.length_scale, signal_variance: a.signal_variance, observation_noise: a.noise_sd };
    let lo = train.x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = train.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let test_x = linspace(lo, hi, a.test_points);
    let plan = a.device.plan(a.samples, ctx.seed, ctx.chains);
    let post = gpr_posterior(&train, &test_x, &spec, inverter(a.inverter, plan).as_ref())?;
    let oracle = gpr_posterior(&train, &test_x, &spec, &DigitalInverter)?;

    out.write("train.csv", |w| write_dataset(&train, w))?;
    out.write("posterior.csv", |w| post.write_csv(w))?;
    out.write("posterior_digital.csv", |w| oracle.write_csv(w))?;
    let sd = post.stddev();
    let band = |sign: f64| {
        test_x.iter().zip(post.mean.iter()).zip(&sd).map(|((&x, &m), &s)| (x, m + sign * 2.0 * s)).collect()
    };
    let plot = Plot::new("GP posterior", "x", "y")
        .with(Series::line("mean", test_x.iter().copied().zip(post.mean.iter().copied()).collect()))
        .with(Series::line("+2 sd", band(1.0)))
        .with(Series::line("-2 sd", band(-1.0)))
        .with(Series::line("digital mean", test_x.iter().copied().zip(oracle.mean.iter().copied()).collect()))
        .with(Series::scatter("train", train.x.iter().copied().zip(train.y.iter().copied()).collect()));
    out.text("gpr.svg", &plot.render())?;
    let dev = (&post.mean - &oracle.mean).amax();
    println!("train: {}  test: {}  inverter: {:?}", train.len(), test_x.len(), a.inverter);
    println!("max |mean - digital mean|: {dev:.4e}");
    Ok(())
}

pub fn lsq(a: &LsqArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let data = read_dataset_file(&a.data)?;
    let x = line_design(&data.x);
    let y = DVector::from_vec(data.y.clone());
    let plan = a.device.plan(a.samples, ctx.seed, ctx.chains);
    let beta = linear_least_squares(&x, &y, inverter(a.inverter, plan).as_ref())?;
    let exact = linear_least_squares(&x, &y, &DigitalInverter)?;
    out.write("coefficients.csv", |w| {
        writeln!(w, "term,estimate,digital")?;
        for (k, name) in ["intercept", "slope"].iter().enumerate() {
            writeln!(w, "{name},{:e},{:e}", beta[k], exact[k])?;
        }
        Ok(())
    })?;
    println!("intercept: {:.6}  slope: {:.6}  (digital {:.6}, {:.6})", beta[0], beta[1], exact[0], exact[1]);
    Ok(())
}

pub fn sngp(a: &SngpArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let (grid, mean, cov) = match (&a.mean, &a.covariance) {
        (Some(m), Some(c)) => {
            let m = read_matrix_file(m)?;
            if m.ncols() != 1 {
                return Err(SpuError::Malformed("mean file must hold one value per line".into()));
            }
            (None, m.column(0).into_owned(), read_symmetric_matrix_file(c, a.symmetry_tol)?)
        }
        _ => {
            let f = two_moons_fixture(a.fixture_side, ctx.seed)?;
            (Some(f.grid), f.mean, f.covariance)
        }
    };
    let sampler: Box<dyn GaussianSampler> = match a.sampler {
        EngineArg::Digital => Box::new(DigitalSampler),
        EngineArg::Thermodynamic => {
            Box::new(ThermodynamicSampler { plan: a.device.plan(a.draws, ctx.seed, ctx.chains) })
        }
    };
    let draws = sngp_patch_sample(&mean, &cov, a.patch_size, sampler.as_ref(), a.draws, ctx.seed)?;
    out.write("draws.csv", |w| write_matrix(&draws, w))?;
    let n = draws.nrows() as f64;
    out.write("summary.csv", |w| {
        writeln!(w, "point,x,y,mean,stddev,sample_mean,sample_stddev")?;
        for j in 0..mean.len() {
            let col = draws.column(j);
            let m = col.mean();
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let (gx, gy) = grid
                .as_ref()
                .map_or((String::new(), String::new()), |g| (format!("{:e}", g[j][0]), format!("{:e}", g[j][1])));
            writeln!(w, "{j},{gx},{gy},{:e},{:e},{m:e},{:e}", mean[j], cov[(j, j)].max(0.0).sqrt(), v.sqrt())?;
        }
        Ok(())
    })?;
    println!("points: {}  patches: {}  draws: {}", mean.len(), mean.len().div_ceil(a.patch_size.max(1)), a.draws);
    Ok(())
}

fn loaded_identity(loading: f64, samples: usize, tolerance: f64, seed: u64, chains: usize) -> SamplingPlan {
    let hw = HardwareOptions { loading_resistance: Some(loading), ..Default::default() };
    SamplingPlan {
        n_samples: samples,
        seed,
        chains,
        component_tolerance: tolerance,
        device: DeviceMode::Hardware(hw),
        ..Default::default()
    }
}

pub fn calibrate(a: &CalibrateArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    if !(a.loading_ratio > 0.0) {
        return Err(invalid("loading ratio must be positive"));
    }
    let r = DeviceTemplate::nominal().cells[0].resistance;
    let target = TargetSpec::precision(DMatrix::identity(8, 8))?;
    let loading = a.loading_ratio * r;
    let baseline = sample_gaussian(
        &target,
        &loaded_identity(loading, a.samples, a.tolerance, ctx.seed, ctx.chains),
        Backend::EmulatedSpu,
    )?;
    let raw: Vec<f64> = sample_covariance(&baseline.values)?.diagonal().iter().copied().collect();
    let fit = fit_loading_model(&raw)?;
    let s = compute_scaling_vector(&baseline)?;
    let run_seed = ctx.seed.wrapping_add(1);
    let experiment = sample_gaussian(
        &target,
        &loaded_identity(loading, a.samples, a.tolerance, run_seed, ctx.chains),
        Backend::EmulatedSpu,
    )?;
    let before: Vec<f64> = sample_covariance(&experiment.values)?.diagonal().iter().copied().collect();
    let after: Vec<f64> =
        sample_covariance(&apply_scaling(&experiment, &s)?.values)?.diagonal().iter().copied().collect();
    let model = fit.predict(raw.len())?;

    out.json("scaling.json", &s)?;
    out.write("scaling.csv", |w| {
        writeln!(w, "cell,scale")?;
        for (k, v) in s.values().iter().enumerate() {
            writeln!(w, "{k},{v:e}")?;
        }
        Ok(())
    })?;
    out.write("calibration.csv", |w| {
        writeln!(w, "cell,baseline_var,model_var,uncorrected_var,corrected_var")?;
        for k in 0..raw.len() {
            writeln!(w, "{k},{:e},{:e},{:e},{:e}", raw[k], model[k], before[k], after[k])?;
        }
        Ok(())
    })?;
    out.json("loading_fit.json", &json!({ "fit": fit, "loading_resistance_ohm": loading }))?;
    let idx = |v: &[f64]| v.iter().enumerate().map(|(k, &x)| (k as f64, x)).collect();
    let plot = Plot::new("Diagonal variance", "cell", "variance")
        .with(Series::line("uncorrected", idx(&before)))
        .with(Series::line("corrected", idx(&after)))
        .with(Series::line("loading model", idx(&model)));
    out.text("calibration.svg", &plot.render())?;
    let mean = after.iter().sum::<f64>() / after.len() as f64;
    let spread = after.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max);
    println!("loading fit: a = {:.4}  b = {:.4}  residual = {:.3e}", fit.a, fit.b, fit.residual);
    if fit.degenerate {
        println!("warning: loading is negligible, b is unidentified");
    }
    if fit.poor_fit {
        println!("warning: variances do not follow the loading model");
    }
    println!("corrected diagonal max deviation: {:.2}%", 100.0 * spread);
    Ok(())
}

#[derive(Serialize)]
struct Combos {
    lc: f64,
    rc: f64,
    kappa_over_c2: f64,
}

impl Combos {
    fn of(c: &CellParams) -> Self {
        Self {
            lc: c.inductance * c.capacitance,
            rc: c.resistance * c.capacitance,
            kappa_over_c2: c.noise_psd / (c.capacitance * c.capacitance),
        }
    }
}

pub fn spectroscopy(a: &SpectroscopyArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let cell = match &a.params {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => {
            *characterized_cells().get(a.cell).ok_or_else(|| invalid(format!("cell {} is not on the board", a.cell)))?
        }
    };
    let cell: CellParams = cell;
    cell.validate()?;
    let params = CircuitParams::continuous(vec![cell], DMatrix::zeros(1, 1))?;
    let batch = record_voltages(&params, READOUT_RATE, a.samples, ctx.seed)?;
    let m = CellMeasurement::from_batch(&batch, 0, a.segment, a.overlap)?;
    let truth = cell_spectrum(&cell, READOUT_RATE, &m.spectrum.frequencies)?;
    out.write("spectrum.csv", |w| m.spectrum.write_csv(w))?;

    let fit = if a.fit {
        let init = DeviceTemplate::nominal().cells[0].with_capacitance(CAPACITOR_BANKS_NF[3] * 1e-9);
        let opts = FitOptions {
            restarts: a.restarts,
            seed: ctx.seed,
            fixed_capacitance: a.fix_capacitance,
            ..Default::default()
        };
        Some((init, fit_cell_params(&m, &init, &opts)?))
    } else {
        None
    };
    let fitted = fit.map(|(_, f)| cell_spectrum(&f.params, READOUT_RATE, &m.spectrum.frequencies)).transpose()?;
    out.write("model_spectrum.csv", |w| {
        writeln!(w, "f,psd_measured,psd_true,psd_fit")?;
        for (k, f) in m.spectrum.frequencies.iter().enumerate() {
            let fit = fitted.as_ref().map_or(String::new(), |v| format!("{:e}", v[k]));
            writeln!(w, "{f:e},{:e},{:e},{fit}", m.spectrum.density[k], truth[k])?;
        }
        Ok(())
    })?;
    let mut report = json!({
        "cell": cell,
        "sample_rate_hz": READOUT_RATE,
        "samples": a.samples,
        "measured_variance": m.variance,
        "model_variance": cell.voltage_variance(),
        "resonance_hz": cell.resonance_frequency(),
        "peak_hz": m.spectrum.peak(0.0).map(|(_, f)| f),
    });
    if let Some((init, f)) = fit {
        let (t, g) = (Combos::of(&cell), Combos::of(&f.params));
        report["fit"] = json!({
            "init": init,
            "result": f,
            "relative_error": {
                "inductance": f.params.inductance / cell.inductance - 1.0,
                "resistance": f.params.resistance / cell.resistance - 1.0,
                "noise_psd": f.params.noise_psd / cell.noise_psd - 1.0,
                "capacitance": f.params.capacitance / cell.capacitance - 1.0,
                "lc": g.lc / t.lc - 1.0,
                "rc": g.rc / t.rc - 1.0,
                "kappa_over_c2": g.kappa_over_c2 / t.kappa_over_c2 - 1.0,
            },
        });
        println!(
            "fit: L = {:.4e} H  R = {:.4e} ohm  kappa = {:.4e} A^2/Hz  C = {:.4e} F  cost = {:.3e}",
            f.params.inductance, f.params.resistance, f.params.noise_psd, f.params.capacitance, f.cost
        );
    }
    out.json("fit.json", &report)?;
    let f = &m.spectrum.frequencies;
    let skip_dc = |v: &[f64]| f.iter().copied().zip(v.iter().copied()).skip(1).collect();
    let mut plot = Plot::new("Cell voltage spectrum", "frequency (Hz)", "PSD (V^2/Hz)")
        .log_y()
        .with(Series::line("measured", skip_dc(&m.spectrum.density)))
        .with(Series::line("model", skip_dc(&truth)));
    if let Some(v) = &fitted {
        plot = plot.with(Series::line("fit", skip_dc(v)));
    }
    out.text("spectrum.svg", &plot.render())?;
    println!("measured variance: {:.4e} V^2  model: {:.4e} V^2", m.variance, cell.voltage_variance());
    Ok(())
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || SpuError::Malformed(format!("expected `a,b`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_shift(s: &str) -> Result<(usize, f64)> {
    let bad = || SpuError::Malformed(format!("expected `cell:factor`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn flag_name(f: Option<FaultFlag>) -> &'static str {
    match f {
        None => "ok",
        Some(FaultFlag::Absent) => "absent",
        Some(FaultFlag::Weak) => "weak",
        Some(FaultFlag::Shifted) => "shifted",
        Some(FaultFlag::Unexpected) => "unexpected",
    }
}

pub fn faultscan(a: &FaultscanArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let mut faults: Vec<Fault> = match &a.faults {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => Vec::new(),
    };
    for s in &a.dead_coupling {
        let (a, b) = parse_pair(s)?;
        faults.push(Fault::DeadCoupling { a, b });
    }
    faults.extend(a.dead_cell.iter().map(|&cell| Fault::DeadCell { cell }));
    for s in &a.cap_shift {
        let (cell, factor) = parse_shift(s)?;
        faults.push(Fault::CapacitanceShift { cell, factor });
    }
    let cfg = FaultScanConfig {
        n_samples: a.samples,
        readout_noise_rms: a.readout_noise,
        drive_level: a.drive_level,
        seed: ctx.seed,
        ..Default::default()
    };
    let report = two_cell_fault_scan(&characterized_cells(), &faults, &cfg)?;
    out.json(
        "fault_report.json",
        &json!({ "faults": faults, "config": cfg, "flagged_pairs": report.flagged_pairs(), "report": report }),
    )?;
    out.write("scan.csv", |w| {
        writeln!(w, "drive,probe,level,expected_hz,expected_db,measured_hz,measured_db,flag")?;
        let cols = |p: Option<spu_core::calibration::PeakSummary>| {
            p.map_or((String::new(), String::new()), |p| {
                (format!("{:e}", p.frequency), format!("{:.3}", p.prominence_db))
            })
        };
        for e in &report.entries {
            let (ef, ed) = cols(e.expected);
            let (mf, md) = cols(e.measured);
            writeln!(w, "{},{},{},{ef},{ed},{mf},{md},{}", e.drive, e.probe, e.level, flag_name(e.flag))?;
        }
        Ok(())
    })?;
    let flagged: Vec<_> = report.flagged().collect();
    println!("configurations: {}  flagged: {}", report.entries.len(), flagged.len());
    for (x, y) in report.flagged_pairs() {
        if x == y {
            println!("suspect cell {x}");
        } else {
            println!("suspect coupling {x}-{y}");
        }
    }
    Ok(())
}

pub fn perf(a: &PerfArgs, out: &mut Output) -> Result<()> {
    let rows = match &a.digital_baseline {
        Some(p) => read_baseline(BufReader::new(File::open(p)?))?,
        None => read_baseline(BUNDLED_BASELINE.as_bytes())?,
    };
    let digital = DigitalCostParams::fit(&rows)?;
    let spu = SpuCostParams {
        time_constant: a.time_constant,
        adc_rate: a.adc_rate,
        power_per_cell: a.power_per_cell,
        compile_time_per_element: a.compile_time,
        load_time_per_element: a.load_time,
        sample_spacing: a.spacing,
        ..Default::default()
    };
    spu.validate()?;
    if a.d_min < 1 || a.d_max < a.d_min || a.points < 2 {
        return Err(invalid("need 1 <= d-min <= d-max and at least two points"));
    }
    let ds = log_grid(a.d_min, a.d_max, a.points);
    let curve = perf_curve(&ds, a.n_samples, &spu, &digital);
    let t_cross = crossover(&spu, &digital, a.n_samples, DEFAULT_MAX_CROSSOVER_D);
    let e_cross = energy_crossover(&spu, &digital, a.n_samples, DEFAULT_MAX_CROSSOVER_D);
    let tail: Vec<usize> = ds.iter().copied().filter(|&d| d >= 1000).collect();
    let slope = |f: &dyn Fn(&spu_core::perf::PerfRow) -> f64| {
        let ys: Vec<f64> = curve.iter().filter(|r| r.d >= 1000).map(f).collect();
        (tail.len() >= 2).then(|| loglog_fit_slope(&tail, &ys))
    };
    out.write("perf.csv", |w| write_perf_csv(&curve, w))?;
    out.json(
        "crossover.json",
        &json!({
            "n_samples": a.n_samples,
            "time_crossover_d": t_cross,
            "energy_crossover_d": e_cross,
            "spu": spu,
            "digital": digital,
            "spu_time_slope": slope(&|r| r.spu_time),
            "digital_time_slope": slope(&|r| r.digital_time),
            "baseline_rows": rows.len(),
        }),
    )?;
    let pts = |f: &dyn Fn(&spu_core::perf::PerfRow) -> f64| curve.iter().map(|r| (r.d as f64, f(r))).collect();
    let plot = Plot::new("Time to solution", "dimension d", "seconds")
        .log_x()
        .log_y()
        .with(Series::line("SPU", pts(&|r| r.spu_time)))
        .with(Series::line("digital", pts(&|r| r.digital_time)))
        .with(Series::scatter(
            "baseline",
            rows.iter().filter(|r| r.n_samples == a.n_samples).map(|r| (r.d as f64, r.time)).collect(),
        ));
    out.text("perf.svg", &plot.render())?;
    let eplot = Plot::new("Energy to solution", "dimension d", "joules")
        .log_x()
        .log_y()
        .with(Series::line("SPU", pts(&|r| r.spu_energy)))
        .with(Series::line("digital", pts(&|r| r.digital_energy)));
    out.text("energy.svg", &eplot.render())?;
    let show = |c: Option<usize>| c.map_or("none below 1e6".to_string(), |d| d.to_string());
    println!("time crossover d: {}  energy crossover d: {}", show(t_cross), show(e_cross));
    Ok(())
}

pub fn study(a: &StudyArgs, ctx: &Ctx, out: &mut Output) -> Result<()> {
    let target = match &a.precision {
        Some(p) => TargetSpec::precision(read_symmetric_matrix_file(p, a.symmetry_tol)?)?,
        None => {
            let hw = CircuitParams::uniform_configuration(&DeviceTemplate::nominal(), 8, 3, 1)?;
            TargetSpec::precision(hw.maxwell().matrix() / 1e-9)?
        }
    };
    let axis = match a.axis {
        AxisArg::NoiseLevel => StudyAxis::NoiseLevel,
        AxisArg::SamplingRate => StudyAxis::SamplingRate,
    };
    let budget = if a.windows.is_empty() {
        StudyBudget::Samples(a.counts.clone())
    } else {
        StudyBudget::Window(a.windows.clone())
    };
    // the study sets its own sample counts
    let plan = a.device.plan(1, ctx.seed, ctx.chains);
    let table = parameter_study(axis, &a.grid, &target, &plan, &budget)?;
    out.write("study.csv", |w| table.write_csv(w))?;
    let by_window = matches!(budget, StudyBudget::Window(_));
    let mut plot =
        Plot::new("Covariance error", if by_window { "window" } else { "samples" }, "relative error").log_x().log_y();
    for &v in &a.grid {
        let pts = table
            .rows_for(v)
            .map(|r| (if by_window { r.window } else { r.n_samples as f64 }, r.covariance_error))
            .collect();
        plot = plot.with(Series::line(format!("{v}"), pts));
    }
    out.text("study.svg", &plot.render())?;
    println!("rows: {}", table.rows.len());
    Ok(())
}
