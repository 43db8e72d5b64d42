use dfsim::analysis::*;
use dfsim::oracle::{compare, oracle_check_config, ORACLE_TOLERANCE};
use dfsim::protocol::*;
use dfsim::Error;
use std::f64::consts::FRAC_PI_2;

fn table_config() -> ExperimentConfig {
    ExperimentConfig {
        s0: 0.9409,
        ..ExperimentConfig::default()
    }
}

#[test]
fn sweep_rows_are_consistent_and_deterministic() {
    let cfg = table_config();
    let a = sweep_transmittance(&cfg, &[0.003, 0.1, 0.01]).unwrap();
    let b = sweep_transmittance(&cfg, &[0.1, 0.01, 0.003]).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let ts: Vec<f64> = a.rows.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0.1, 0.01, 0.003]);
    for r in &a.rows {
        assert_eq!(r.f_low, (r.v_z + r.v_x) / 2.0);
        assert_eq!(r.chsh_flag, r.f_low > CHSH_THRESHOLD);
        assert_eq!(r.rate_per_second, r.rate_per_pulse * DEFAULT_REPETITION_RATE_HZ);
    }
}

#[test]
fn fidelity_bound_falls_with_transmittance() {
    let table = sweep_transmittance(&table_config(), &TABLE_T_VALUES).unwrap();
    for w in table.rows.windows(2) {
        assert!(w[1].f_low <= w[0].f_low, "{} then {}", w[0].f_low, w[1].f_low);
    }
}

#[test]
fn calibration_fixed_point_and_idempotence() {
    let cfg = table_config();
    let top = visibilities(&run_phase_averaged(&ExperimentConfig { s0: 1.0, ..cfg.clone() }).unwrap())
        .unwrap()
        .1;
    let c = calibrate_overlap(&cfg, 0.1, top).unwrap();
    assert_eq!(c.s0, 1.0);

    let row = sweep_transmittance(&cfg, &[0.1]).unwrap().rows[0].clone();
    let again = calibrate_overlap(&cfg, 0.1, row.v_x).unwrap();
    assert!((again.s0 - cfg.s0).abs() < 1e-4, "{}", again.s0);

    match calibrate_overlap(&cfg, 0.1, top + 0.01) {
        Err(Error::Unattainable { max_attainable, .. }) => assert!((max_attainable - top).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn far_delay_removes_interference() {
    let cfg = table_config();
    let scan = delay_scan(&cfg, &[0.0, 10.0 * cfg.sigma_um]).unwrap();
    let far = &scan.points[1];
    assert!(far.visibility < 1e-12, "{}", far.visibility);
    assert!((far.p_r - far.p_l).abs() <= 1e-12 * far.p_r);
    assert!(scan.points[0].visibility > 0.5);
}

#[test]
fn direct_tomography() {
    let ideal = ExperimentConfig::ideal(Variant::DirectNoDfs);
    let quiet = tomography_experiment(&ideal, false).unwrap();
    assert!((quiet.fidelity - 1.0).abs() < 1e-12);
    let noisy = tomography_experiment(&ideal, true).unwrap();
    assert!((noisy.fidelity - 0.5).abs() < 1e-12);
    let lab = tomography_experiment(&table_config(), true).unwrap();
    for (r, c) in [(0, 3), (3, 0), (1, 2), (2, 1)] {
        assert!(lab.dm.element(r, c).norm() < 1e-12);
    }
}

#[test]
fn sampled_triples_match_exact_rate() {
    let cfg = ExperimentConfig {
        transmittance: 0.1,
        ..table_config()
    };
    let exact = sharing_rate(&cfg).unwrap().0;
    let dist = click_distribution(&cfg).unwrap();
    assert!((dist[7] - exact).abs() < 1e-15);
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let n = 10_000_000u64;
    let events = sample_from(&dist, n, 42);
    let triples = events.iter().filter(|e| e.triple()).count() as f64;
    let expected = exact * n as f64;
    assert!(
        (triples - expected).abs() <= 3.0 * expected.sqrt().max(1.0),
        "{triples} vs {expected}"
    );
    // A single click pattern at percent level checks the sampler itself.
    let e_only = events.iter().filter(|e| e.e && !e.f && !e.g).count() as f64;
    let expected = dist[1] * n as f64;
    assert!((e_only - expected).abs() <= 3.0 * expected.sqrt());
}

#[test]
fn post_selected_probabilities_checked_across_phases() {
    let cfg = ExperimentConfig {
        cutoff: 3,
        ..table_config()
    };
    let dev = compare(&cfg, &[(0.0, 0.0), (FRAC_PI_2, FRAC_PI_2), (FRAC_PI_2, 0.0)]).unwrap();
    assert!(dev < ORACLE_TOLERANCE, "{dev:e}");
    assert!(oracle_check_config(&cfg).unwrap().passed());
}

#[test]
fn dark_counts_set_a_floor() {
    let cfg = ExperimentConfig {
        transmittance: 0.0,
        ..table_config()
    };
    let p = sharing_rate(&cfg).unwrap().0;
    assert!(p > 0.0);
    let dark_free = ExperimentConfig {
        dark_e: 0.0,
        dark_f: 0.0,
        dark_g: 0.0,
        ..cfg
    };
    assert_eq!(sharing_rate(&dark_free).unwrap().0, 0.0);
}

#[test]
fn run_file_round_trip() {
    let spec = RunSpec::parse(include_str!("../../../configs/table.conf")).unwrap();
    assert_eq!(spec.experiment.phases.len(), 8);
    assert_eq!(spec.t_values, TABLE_T_VALUES.to_vec());
    assert!((spec.experiment.mu * spec.experiment.eta - 1.4e-2).abs() < 1e-15);
}
