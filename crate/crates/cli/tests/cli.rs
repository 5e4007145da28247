use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use spu_core::io::write_matrix_file;
use spu_core::linalg::random_spd;

fn spu(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spu")).arg("--out").arg(out).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn sample_writes_artifacts_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let m = write(t.path(), "p.csv", "# precision\n2,0.5\n0.5,1\n");
    let out = t.path().join("o");
    let o = spu(&out, &["--seed", "9", "sample", "--precision", &m, "-n", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let man = manifest(&out);
    assert_eq!(man["subcommand"], "sample");
    assert_eq!(man["seed"], 9);
    assert_eq!(man["config"]["sample"]["n"], 500);
    let arts: Vec<&str> = man["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for a in ["samples.csv", "samples.json", "covariance.csv", "moments.csv", "moments.svg"] {
        assert!(arts.contains(&a), "{a} missing from {arts:?}");
        assert!(out.join(a).exists());
    }
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.starts_with("t,x0,x1\n"));
    assert_eq!(samples.lines().count(), 501);
}

#[test]
fn seed_changes_output_and_repeats_are_identical() {
    let t = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = t.path().join("a.csv");
    write_matrix_file(&random_spd(4, &mut rng), &m).unwrap();
    let m = m.to_str().unwrap();
    let run = |dir: &str, seed: &str| {
        let out = t.path().join(dir);
        assert_eq!(
            code(&spu(&out, &["--seed", seed, "--chains", "3", "invert", "--matrix", m, "--samples", "3000"])),
            0
        );
        std::fs::read(out.join("inverse.csv")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_ne!(a, run("c", "2"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_spu"))
        .env("SPU_OUT_DIR", &out)
        .args(["perf", "--points", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("perf.csv").exists() && out.join("crossover.json").exists() && out.join("perf.svg").exists());
    let c: Value = serde_json::from_str(&std::fs::read_to_string(out.join("crossover.json")).unwrap()).unwrap();
    let d = c["time_crossover_d"].as_u64().unwrap();
    assert!((1000..=10_000).contains(&d));
}

#[test]
fn usage_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&spu(t.path(), &["sample"])), 2);
    assert_eq!(code(&spu(t.path(), &["no-such-command"])), 2);
    assert_eq!(code(&spu(t.path(), &["perf", "--points", "many"])), 2);
}

#[test]
fn input_errors_exit_3() {
    let t = tempfile::tempdir().unwrap();
    let ragged = write(t.path(), "r.csv", "1,2\n3\n");
    let text = write(t.path(), "x.csv", "1,a\nb,2\n");
    let missing = t.path().join("nope.csv");
    for m in [ragged.as_str(), text.as_str(), missing.to_str().unwrap()] {
        let o = spu(t.path(), &["invert", "--matrix", m]);
        assert_eq!(code(&o), 3, "{m}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad_pair = spu(t.path(), &["faultscan", "--dead-coupling", "3"]);
    assert_eq!(code(&bad_pair), 3);
}

#[test]
fn validation_errors_exit_4() {
    let t = tempfile::tempdir().unwrap();
    let asym = write(t.path(), "a.csv", "2,1\n0,2\n");
    let indefinite = write(t.path(), "i.csv", "1,2\n2,1\n");
    let rect = write(t.path(), "r.csv", "1,0,0\n0,1,0\n");
    for m in [&asym, &indefinite, &rect] {
        let o = spu(t.path(), &["sample", "--precision", m, "-n", "100"]);
        assert_eq!(code(&o), 4, "{m}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = spu(t.path(), &["--chains", "0", "perf"]);
    assert_eq!(code(&o), 4);
    // nine cells do not fit the board
    let big = t.path().join("big.csv");
    write_matrix_file(&nalgebra::DMatrix::<f64>::identity(9, 9), &big).unwrap();
    let o = spu(t.path(), &["invert", "--matrix", big.to_str().unwrap(), "--device", "hardware"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn patch_failure_reports_the_patch_and_its_cause() {
    let t = tempfile::tempdir().unwrap();
    let mean = write(t.path(), "m.csv", "0\n0\n0\n0\n");
    let cov = write(t.path(), "c.csv", "1,0,0,0\n0,1,0,0\n0,0,1,2\n0,0,2,1\n");
    let o =
        spu(t.path(), &["sngp-sample", "--mean", &mean, "--covariance", &cov, "--patch-size", "2", "--draws", "10"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("patch 1"));
}

#[test]
fn faultscan_reports_a_dead_coupling() {
    let t = tempfile::tempdir().unwrap();
    let faults = write(t.path(), "f.json", r#"[{"kind":"dead_coupling","a":2,"b":5}]"#);
    let o = spu(t.path(), &["faultscan", "--faults", &faults, "--samples", "16384"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(t.path().join("fault_report.json")).unwrap()).unwrap();
    assert_eq!(r["flagged_pairs"], serde_json::json!([[2, 5]]));
    let scan = std::fs::read_to_string(t.path().join("scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 1 + 8 + 56 * 3);
}

#[test]
fn lsq_recovers_a_line() {
    let t = tempfile::tempdir().unwrap();
    let rows: String = (0..21)
        .map(|k| {
            let x = -1.0 + k as f64 * 0.1;
            format!("{x},{}\n", 0.5 + 2.0 * x)
        })
        .collect();
    let data = write(t.path(), "d.csv", &format!("x,y\n{rows}"));
    assert_eq!(code(&spu(t.path(), &["lsq", "--data", &data, "--samples", "50000"])), 0);
    let c = std::fs::read_to_string(t.path().join("coefficients.csv")).unwrap();
    let beta: Vec<f64> = c.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((beta[0] - 0.5).abs() < 0.05 && (beta[1] - 2.0).abs() < 0.1, "{beta:?}");
}

#[test]
fn spectroscopy_fit_reports_identifiable_combinations() {
    let t = tempfile::tempdir().unwrap();
    let o = spu(t.path(), &["spectroscopy", "--cell", "2", "--samples", "200000", "--fit", "--restarts", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f: Value = serde_json::from_str(&std::fs::read_to_string(t.path().join("fit.json")).unwrap()).unwrap();
    for k in ["lc", "rc", "kappa_over_c2"] {
        let e = f["fit"]["relative_error"][k].as_f64().unwrap();
        assert!(e.abs() < 0.05, "{k}: {e}");
    }
}

#[test]
fn help_documents_units_and_defaults() {
    let o = Command::new(env!("CARGO_BIN_EXE_spu")).args(["perf", "--help"]).output().unwrap();
    let h = String::from_utf8_lossy(&o.stdout);
    assert!(h.contains("seconds") && h.contains("Watts") && h.contains("[default: 10000]"), "{h}");
    let o = Command::new(env!("CARGO_BIN_EXE_spu")).args(["faultscan", "--help"]).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("volts rms"));
}
