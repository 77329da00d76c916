use gdlab_core::config::{ExperimentConfig, GridCell, MatrixTargetSpec, ObjectiveSpec, Parallelism};
use gdlab_core::experiments::{run_experiment, summarize, TrialRecord};
use gdlab_core::init::{draw_scalar_init, InitScheme, SchemeKind, VarianceRule};
use gdlab_core::scalar::{scalar_run, ScalarLoss};
use gdlab_core::trajectory::{RunStatus, StepPlan, Thinning, TrajectoryRecorder};
use proptest::prelude::*;

fn scalar_scheme() -> impl Strategy<Value = SchemeKind> {
    prop_oneof![
        Just(SchemeKind::XavierGaussian),
        Just(SchemeKind::XavierUniform),
        Just(SchemeKind::PlusMinusOne),
        (0.5f64..2.0).prop_map(|c1| SchemeKind::ScalarNearOne { c1 }),
    ]
}

fn matrix_scheme() -> impl Strategy<Value = SchemeKind> {
    prop_oneof![
        Just(SchemeKind::XavierGaussian),
        Just(SchemeKind::XavierUniform),
        Just(SchemeKind::NearIdentity { variance: VarianceRule::OneOverDk }),
        Just(SchemeKind::NearIdentity { variance: VarianceRule::OneOverDkSquared }),
    ]
}

fn distinct(cells: &[(SchemeKind, usize)]) -> bool {
    cells.iter().enumerate().all(|(i, c)| !cells[..i].contains(c))
}

fn thinning() -> impl Strategy<Value = Thinning> {
    prop_oneof![(1u64..50).prop_map(Thinning::Every), (1.001f64..2.0).prop_map(Thinning::Geometric)]
}

fn scalar_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::collection::vec((scalar_scheme(), 1usize..6), 1..3).prop_filter("distinct cells", |c| distinct(c)),
        -2.0f64..2.0,
        any::<bool>(),
        1u64..4,
        1e-3f64..0.2,
        1u64..2000,
        1e-4f64..0.5,
        any::<u64>(),
        thinning(),
    )
        .prop_map(|(cells, y, logistic, trials, eta, max_iters, thr, seed, thinning)| ExperimentConfig {
            objective: ObjectiveSpec::Scalar {
                loss: if logistic { ScalarLoss::Logistic } else { ScalarLoss::Quadratic { y } },
            },
            grid: cells.into_iter().map(|(scheme, k)| GridCell { scheme, k, d: 1 }).collect(),
            trials,
            plan: StepPlan::new(eta, max_iters, thr).unwrap(),
            master_seed: seed,
            thinning,
            output_dir: "out".into(),
            parallelism: Parallelism::Threads(2),
            base_dir: None,
        })
}

fn matrix_config() -> impl Strategy<Value = ExperimentConfig> {
    (prop::collection::vec((matrix_scheme(), 1usize..4), 1..3).prop_filter("distinct cells", |c| distinct(c)), 1usize..4, 1u64..3, any::<u64>()).prop_map(
        |(cells, d, trials, seed)| ExperimentConfig {
            objective: ObjectiveSpec::Matrix { target: MatrixTargetSpec::MinusIdentity },
            grid: cells.into_iter().map(|(scheme, k)| GridCell { scheme, k, d }).collect(),
            trials,
            plan: StepPlan::new(0.05, 300, 0.05).unwrap(),
            master_seed: seed,
            thinning: Thinning::default(),
            output_dir: "out".into(),
            parallelism: Parallelism::Threads(1),
            base_dir: None,
        },
    )
}

fn strip_time(records: &[TrialRecord]) -> Vec<TrialRecord> {
    records.iter().map(|r| TrialRecord { wall_time_ms: 0, ..r.clone() }).collect()
}

fn check_record_invariants(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<(), TestCaseError> {
    prop_assert_eq!(records.len() as u64, config.grid.len() as u64 * config.trials);
    for r in records {
        prop_assert!(r.iterations <= config.plan.max_iters);
        if r.status == RunStatus::Converged {
            prop_assert!(r.final_objective <= config.plan.stop_threshold);
        }
        if r.status == RunStatus::MaxIters {
            prop_assert_eq!(r.iterations, config.plan.max_iters);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_records_respect_invariants(config in scalar_config()) {
        let records = run_experiment(&config).unwrap();
        check_record_invariants(&config, &records)?;
    }

    #[test]
    fn matrix_records_respect_invariants(config in matrix_config()) {
        let records = run_experiment(&config).unwrap();
        check_record_invariants(&config, &records)?;
    }

    #[test]
    fn schedule_does_not_change_records(config in scalar_config(), threads in 1usize..5) {
        let a = run_experiment(&ExperimentConfig { parallelism: Parallelism::Threads(1), ..config.clone() }).unwrap();
        let b = run_experiment(&ExperimentConfig { parallelism: Parallelism::Threads(threads), ..config }).unwrap();
        prop_assert_eq!(strip_time(&a), strip_time(&b));
    }

    #[test]
    fn config_round_trips_through_json(config in scalar_config()) {
        let text = config.to_json_string().unwrap();
        prop_assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), config);
    }

    #[test]
    fn summary_statistics_follow_definitions(config in scalar_config()) {
        let records = run_experiment(&config).unwrap();
        let summary = summarize(&records);
        for row in &summary.rows {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.scheme_id == row.scheme && r.k == row.k && r.d == row.d).collect();
            let conv: Vec<f64> = cell
                .iter()
                .filter(|r| r.status == RunStatus::Converged)
                .map(|r| (r.iterations.max(1) as f64).ln())
                .collect();
            prop_assert_eq!(row.n_trials, cell.len());
            prop_assert_eq!(row.n_converged, conv.len());
            let nc = 100.0 * (row.n_trials - row.n_converged) as f64 / row.n_trials as f64;
            prop_assert_eq!(row.nc_percent, nc);
            match row.mean_log_iters {
                None => prop_assert!(conv.is_empty()),
                Some(m) => prop_assert!((m - conv.iter().sum::<f64>() / conv.len() as f64).abs() < 1e-12),
            }
            prop_assert_eq!(row.std_log_iters.is_some(), conv.len() >= 2);
        }
    }

    #[test]
    fn recorder_keeps_endpoints_in_strict_order(
        scheme in scalar_scheme(),
        k in 1usize..6,
        seed in any::<u64>(),
        thin in thinning(),
        max_iters in 1u64..3000,
    ) {
        let init = draw_scalar_init(&InitScheme::new(scheme, seed, 0), k).unwrap();
        let plan = StepPlan::new(0.01, max_iters, 0.05).unwrap();
        let mut rec = TrajectoryRecorder::new(thin);
        let out = scalar_run(&init, &ScalarLoss::Quadratic { y: -1.0 }, &plan, &mut rec).unwrap();
        let snaps = rec.snapshots();
        prop_assert_eq!(snaps.first().unwrap().t, 0);
        prop_assert_eq!(snaps.last().unwrap().t, out.iterations);
        prop_assert!(snaps.windows(2).all(|w| w[0].t < w[1].t));
        prop_assert!(snaps.iter().all(|s| s.coords.len() == k));
    }
}
