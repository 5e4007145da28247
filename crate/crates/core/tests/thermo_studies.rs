use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spu_core::circuit::{CircuitParams, DeviceTemplate};
use spu_core::compiler::TargetSpec;
use spu_core::linalg::{random_spd, rel_frobenius};
use spu_core::noise::NoiseChainConfig;
use spu_core::stats::loglog_slope;
use spu_core::thermo::*;

fn target(d: usize, seed: u64) -> TargetSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TargetSpec::precision(random_spd(d, &mut rng)).unwrap()
}

#[test]
fn ideal_noise_level_cancels_after_normalization() {
    let t = target(3, 1);
    let plan = SamplingPlan { seed: 3, ..Default::default() };
    let tab =
        parameter_study(StudyAxis::NoiseLevel, &[0.25, 1.0, 4.0], &t, &plan, &StudyBudget::Samples(vec![500, 2000]))
            .unwrap();
    let base: Vec<f64> = tab.rows_for(1.0).map(|r| r.covariance_error).collect();
    for level in [0.25, 4.0] {
        for (r, b) in tab.rows_for(level).zip(&base) {
            assert!((r.covariance_error - b).abs() < 1e-9 * b, "{level}: {} vs {b}", r.covariance_error);
        }
    }
}

fn bank3_all_positive() -> (TargetSpec, SamplingPlan) {
    let hw = CircuitParams::uniform_configuration(&DeviceTemplate::nominal(), 8, 3, 1).unwrap();
    let t = TargetSpec::precision(hw.maxwell().matrix() / 1e-9).unwrap();
    let plan = SamplingPlan { device: DeviceMode::Hardware(HardwareOptions::default()), ..Default::default() };
    (t, plan)
}

#[test]
fn decorrelated_sampling_beats_fast_sampling_at_fixed_count() {
    let (t, base) = bank3_all_positive();
    for seed in 0..5 {
        let plan = SamplingPlan { seed, ..base.clone() };
        let tab = parameter_study(StudyAxis::SamplingRate, &[0.2, 10.0], &t, &plan, &StudyBudget::Samples(vec![2000]))
            .unwrap();
        let slow = tab.rows_for(0.2).next().unwrap().covariance_error;
        let fast = tab.rows_for(10.0).next().unwrap().covariance_error;
        assert!(slow < fast, "seed {seed}: {slow} vs {fast}");
    }
}

#[test]
fn fastest_rate_wins_at_fixed_window() {
    let (t, base) = bank3_all_positive();
    for seed in 0..5 {
        let plan = SamplingPlan { seed, ..base.clone() };
        let tab =
            parameter_study(StudyAxis::SamplingRate, &[0.2, 10.0], &t, &plan, &StudyBudget::Window(vec![2_000.0]))
                .unwrap();
        let e: Vec<f64> = [0.2, 10.0].iter().map(|&r| tab.rows_for(r).next().unwrap().covariance_error).collect();
        assert!(e[1] < e[0], "seed {seed}: {e:?}");
        let w: Vec<f64> = tab.rows.iter().map(|r| r.window).collect();
        assert!(w.iter().all(|&x| x <= 2_000.0 + 1e-6 && x > 1_900.0));
    }
}

#[test]
fn lfsr_noise_level_has_an_interior_optimum() {
    let t = TargetSpec::precision(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
    let plan = SamplingPlan {
        noise: NoiseMode::LfsrChain(NoiseChainConfig::default()),
        sampling_rate: SamplingRate::Hz(12e6),
        device: DeviceMode::Hardware(HardwareOptions { quantize: false, ..Default::default() }),
        seed: 1,
        ..Default::default()
    };
    let grid = [1e-3, 1e-2, 0.1, 1.0];
    let tab = parameter_study(StudyAxis::NoiseLevel, &grid, &t, &plan, &StudyBudget::Samples(vec![5000])).unwrap();
    let e: Vec<f64> = grid.iter().map(|&g| tab.rows_for(g).next().unwrap().covariance_error).collect();
    let best = e.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best < e[0] && best < e[3], "{e:?}");
}

#[test]
fn inversion_error_decays_as_inverse_root() {
    for d in [4, 8] {
        let a = target(d, 10 + d as u64).matrix;
        let counts = [1_000usize, 4_000, 16_000, 64_000];
        let mut avg = [0.0; 4];
        for seed in 0..8 {
            let r = invert_matrix(&a, &SamplingPlan::new(64_000, seed)).unwrap();
            for (k, &c) in counts.iter().enumerate() {
                avg[k] += r.error_series.iter().find(|p| p.n_samples >= c).unwrap().error / 8.0;
            }
        }
        assert!(avg.windows(2).all(|w| w[1] < w[0]), "d={d}: {avg:?}");
        let slope = loglog_slope(&counts.map(|c| c as f64), &avg);
        assert!((slope + 0.5).abs() < 0.1, "d={d}: slope {slope}");
    }
}

#[test]
fn quantized_hardware_inversion_plateaus() {
    let a = target(4, 21).matrix;
    let plan = SamplingPlan {
        sampling_rate: SamplingRate::Hz(12e6),
        device: DeviceMode::Hardware(HardwareOptions::default()),
        ..SamplingPlan::new(50_000, 2)
    };
    let r = invert_matrix(&a, &plan).unwrap();
    let at = |n: usize| r.error_series.iter().find(|p| p.n_samples >= n).unwrap().error;
    // the quantization bias dominates the tail
    assert!(at(50_000) > 0.02);
    assert!((at(50_000) - at(12_500)).abs() < 0.5 * at(50_000));
    let ideal = invert_matrix(&a, &SamplingPlan::new(50_000, 2)).unwrap();
    assert!(ideal.final_error() < at(50_000));
}

#[test]
fn every_estimate_is_symmetric() {
    let a = target(5, 4).matrix;
    let r = invert_matrix(&a, &SamplingPlan { chains: 2, ..SamplingPlan::new(3000, 0) }).unwrap();
    assert_eq!(r.estimate, r.estimate.transpose());
    assert!(rel_frobenius(&r.estimate, &r.exact) < 0.1);
}
