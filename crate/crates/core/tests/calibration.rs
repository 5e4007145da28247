use nalgebra::DMatrix;
use spu_core::calibration::*;
use spu_core::circuit::{characterized_cells, DeviceTemplate};
use spu_core::compiler::TargetSpec;
use spu_core::stats::sample_covariance;
use spu_core::thermo::*;

fn loaded_identity_plan(seed: u64, coupling_resistance: f64) -> SamplingPlan {
    let hw = HardwareOptions { loading_resistance: Some(coupling_resistance), ..Default::default() };
    SamplingPlan { n_samples: 100_000, seed, chains: 4, device: DeviceMode::Hardware(hw), ..Default::default() }
}

#[test]
fn scaling_vector_flattens_loaded_identity() {
    let r = DeviceTemplate::nominal().cells[0].resistance;
    let target = TargetSpec::precision(DMatrix::identity(8, 8)).unwrap();
    let baseline = sample_gaussian(&target, &loaded_identity_plan(1, 5.0 * r), Backend::EmulatedSpu).unwrap();
    let raw: Vec<f64> = sample_covariance(&baseline.values).unwrap().diagonal().iter().copied().collect();
    assert!(raw[7] / raw[0] > 2.0, "{raw:?}");

    let fit = fit_loading_model(&raw).unwrap();
    assert!((fit.a - 1.0).abs() < 0.05 && (fit.b / 5.0 - 1.0).abs() < 0.05, "{fit:?}");
    assert!(!fit.poor_fit && !fit.degenerate);

    let s = compute_scaling_vector(&baseline).unwrap();
    let experiment = sample_gaussian(&target, &loaded_identity_plan(2, 5.0 * r), Backend::EmulatedSpu).unwrap();
    let corrected = sample_covariance(&apply_scaling(&experiment, &s).unwrap().values).unwrap();
    let diag: Vec<f64> = corrected.diagonal().iter().copied().collect();
    let mean = diag.iter().sum::<f64>() / 8.0;
    assert!(diag.iter().all(|v| (v / mean - 1.0).abs() < 0.03), "{diag:?}");
}

#[test]
fn healthy_board_is_clean_across_seeds() {
    let cells = characterized_cells();
    for seed in 0..10 {
        let cfg = FaultScanConfig { seed, ..Default::default() };
        let r = two_cell_fault_scan(&cells, &[], &cfg).unwrap();
        assert_eq!(r.entries.len(), 8 + 56 * 3);
        assert!(r.is_healthy(), "seed {seed}: {:?}", r.flagged().collect::<Vec<_>>());
    }
}

#[test]
fn every_single_fault_is_detected() {
    let cells = characterized_cells();
    let cfg = FaultScanConfig { seed: 11, ..Default::default() };
    for k in 0..8 {
        for fault in [
            Fault::DeadCell { cell: k },
            Fault::CapacitanceShift { cell: k, factor: 1.5 },
            Fault::CapacitanceShift { cell: k, factor: 0.5 },
        ] {
            let r = two_cell_fault_scan(&cells, &[fault], &cfg).unwrap();
            let own = r.entries.iter().find(|e| e.drive == k && e.probe == k).unwrap();
            assert!(own.flag.is_some(), "{fault:?} missed");
        }
    }
    for (a, b) in [(0, 1), (2, 5), (3, 7), (6, 7)] {
        let r = two_cell_fault_scan(&cells, &[Fault::DeadCoupling { a, b }], &cfg).unwrap();
        assert_eq!(r.flagged_pairs().into_iter().collect::<Vec<_>>(), vec![(a, b)]);
    }
}

#[test]
fn spectroscopy_of_table_rows_matches_model_shape() {
    for (k, cell) in characterized_cells().iter().enumerate() {
        let p = spu_core::CircuitParams::continuous(vec![*cell], DMatrix::zeros(1, 1)).unwrap();
        let b = record_voltages(&p, READOUT_RATE, 200_000, k as u64).unwrap();
        let m = CellMeasurement::from_batch(&b, 0, DEFAULT_SEGMENT, DEFAULT_OVERLAP).unwrap();
        assert!((m.spectrum.total_power() / m.variance - 1.0).abs() < 0.05);
        let cost = CellFitCost::new(&m, cell).unwrap();
        let (s, _) = cost.terms(cell).unwrap();
        // log-periodogram scatter of ~96 averaged segments
        assert!(s < 0.05, "cell {k}: {s}");
    }
}
