use gdlab_core::init::{draw_scalar_init, InitScheme, SchemeKind};
use gdlab_core::scalar::{scalar_run, ScalarLoss};
use gdlab_core::trajectory::{NullRecorder, RunStatus, StepPlan};

/// Iterations to reach each threshold `10⁻²…10⁻⁶` from one start point.
fn iterations_per_threshold(trial: u64) -> Vec<u64> {
    let init = draw_scalar_init(&InitScheme::new(SchemeKind::ScalarNearOne { c1: 1.0 }, 42, trial), 5).unwrap();
    (2..=6)
        .map(|e| {
            let plan = StepPlan::new(1e-2, 100_000_000, 10f64.powi(-e)).unwrap();
            let out = scalar_run(&init, &ScalarLoss::Quadratic { y: -1.0 }, &plan, &mut NullRecorder).unwrap();
            assert_eq!(out.status, RunStatus::Converged, "trial {trial}, threshold 1e-{e}");
            out.iterations
        })
        .collect()
}

/// Once past the plateau each extra decade of precision costs about the same
/// number of steps, so the tail is linear in `log(1/ε)`.
#[test]
fn tail_grows_linearly_in_log_precision() {
    for trial in 0..10 {
        let its = iterations_per_threshold(trial);
        let steps: Vec<u64> = its.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = (steps.iter().min().unwrap(), steps.iter().max().unwrap());
        assert!(*lo > 0 && *hi <= 2 * lo, "trial {trial}: per-decade steps {steps:?}");
    }
}
