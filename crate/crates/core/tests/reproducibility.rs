use gdlab_core::config::{load_config, ExperimentConfig, GridCell, ObjectiveSpec, Parallelism};
use gdlab_core::experiments::{run_experiment, summarize};
use gdlab_core::init::SchemeKind;
use gdlab_core::io::{read_manifest, save_records, trials_csv, write_manifest, Manifest, MANIFEST_JSON};
use gdlab_core::plot::export_figure2;
use gdlab_core::scalar::ScalarLoss;
use gdlab_core::trajectory::{StepPlan, Thinning};

fn config() -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveSpec::Scalar { loss: ScalarLoss::Quadratic { y: -1.0 } },
        grid: vec![
            GridCell { scheme: SchemeKind::ScalarNearOne { c1: 1.0 }, k: 3, d: 1 },
            GridCell { scheme: SchemeKind::XavierGaussian, k: 4, d: 1 },
        ],
        trials: 6,
        plan: StepPlan::new(1e-2, 50_000, 0.1).unwrap(),
        master_seed: 2024,
        thinning: Thinning::default(),
        output_dir: "unused".into(),
        parallelism: Parallelism::Threads(3),
        base_dir: None,
    }
}

fn without_time_column(csv: &[u8]) -> String {
    String::from_utf8(csv.to_vec())
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn manifest_reproduces_trial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let records = run_experiment(&cfg).unwrap();
    save_records(&records, dir.path()).unwrap();
    write_manifest(&Manifest::new("experiment", &cfg).unwrap(), dir.path()).unwrap();

    let manifest = read_manifest(&dir.path().join(MANIFEST_JSON)).unwrap();
    assert_eq!(manifest.master_seed, 2024);
    let replay = manifest.experiment_config().unwrap();
    let again = run_experiment(&replay).unwrap();
    let first = std::fs::read(dir.path().join("trials.csv")).unwrap();
    assert_eq!(without_time_column(&first), without_time_column(&trials_csv(&again).unwrap()));
}

#[test]
fn summary_outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    export_figure2(&summarize(&run_experiment(&config()).unwrap()), a.path()).unwrap();
    let serial = ExperimentConfig { parallelism: Parallelism::Threads(1), ..config() };
    export_figure2(&summarize(&run_experiment(&serial).unwrap()), b.path()).unwrap();
    for name in ["summary.csv", "summary.svg"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn config_file_round_trip_and_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, config().to_json_string().unwrap()).unwrap();
    let loaded = load_config(&path).unwrap();
    assert_eq!(ExperimentConfig { base_dir: None, ..loaded }, config());

    let mut value: serde_json::Value = serde_json::from_str(&config().to_json_string().unwrap()).unwrap();
    value["plan"].as_object_mut().unwrap().remove("eta");
    std::fs::write(&path, value.to_string()).unwrap();
    let err = load_config(&path).unwrap_err().to_string();
    assert!(err.contains("plan.eta"), "{err}");
}
