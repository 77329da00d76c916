//! Convergence-time harness: one record per (scheme, k, d, trial) cell and
//! the per-cell statistics behind the convergence-time bar chart.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridCell, ObjectiveSpec};
use crate::error::Result;
use crate::init::{draw_matrix_init, draw_scalar_init, InitScheme};
use crate::matrix::matrix_run;
use crate::scalar::scalar_run;
use crate::trajectory::{NullRecorder, Recorder, RunStatus, StepPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "scheme")]
    pub scheme_id: String,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "trial")]
    pub trial_index: u64,
    pub seed: u64,
    pub status: RunStatus,
    pub iterations: u64,
    pub final_objective: f64,
    pub wall_time_ms: u64,
}

impl TrialRecord {
    fn sort_key(&self) -> (&str, usize, usize, u64) {
        (&self.scheme_id, self.k, self.d, self.trial_index)
    }
}

/// Runs a single trial of `cell`, feeding snapshots to `recorder`.
///
/// Setup failures (for instance an explicit init of the wrong length) come
/// back as a `Diverged` record at iteration 0 instead of an error, so one bad
/// cell never aborts a sweep.
pub fn run_trial<R: Recorder + ?Sized>(
    config: &ExperimentConfig,
    cell: &GridCell,
    trial_index: u64,
    recorder: &mut R,
) -> TrialRecord {
    let started = Instant::now();
    let scheme = InitScheme::new(cell.scheme.clone(), config.master_seed, trial_index);
    let outcome = run_cell(config, cell, &scheme, &config.plan, recorder);
    let (status, iterations, final_objective) = match outcome {
        Ok(o) => o,
        Err(_) => (RunStatus::Diverged, 0, f64::NAN),
    };
    TrialRecord {
        scheme_id: cell.scheme.id(),
        k: cell.k,
        d: cell.d,
        trial_index,
        seed: config.master_seed,
        status,
        iterations,
        final_objective,
        wall_time_ms: started.elapsed().as_millis() as u64,
    }
}

fn run_cell<R: Recorder + ?Sized>(
    config: &ExperimentConfig,
    cell: &GridCell,
    scheme: &InitScheme,
    plan: &StepPlan,
    recorder: &mut R,
) -> Result<(RunStatus, u64, f64)> {
    match &config.objective {
        ObjectiveSpec::Scalar { loss } => {
            let init = draw_scalar_init(scheme, cell.k)?;
            let out = scalar_run(&init, loss, plan, recorder)?;
            Ok((out.status, out.iterations, out.final_objective))
        }
        ObjectiveSpec::Matrix { .. } => {
            let target = config.matrix_target(cell.d)?;
            let init = draw_matrix_init(scheme, cell.k, cell.d)?;
            let out = matrix_run(&init, &target, plan, recorder)?;
            Ok((out.status, out.iterations, out.final_objective))
        }
    }
}

/// Executes every (cell, trial) pair.
///
/// Trials fan out over a pool of `config.parallelism` threads; the result is
/// sorted by `(scheme, k, d, trial)` so its content never depends on the
/// schedule.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let jobs: Vec<(&GridCell, u64)> =
        config.grid.iter().flat_map(|cell| (0..config.trials).map(move |t| (cell, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.threads())
        .build()
        .expect("thread pool");
    let mut records: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter().map(|&(cell, t)| run_trial(config, cell, t, &mut NullRecorder)).collect()
    });
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub k: usize,
    pub d: usize,
    pub n_trials: usize,
    pub n_converged: usize,
    pub n_diverged: usize,
    pub nc_percent: f64,
    /// Mean of `ln(iterations)` over converged trials.
    pub mean_log_iters: Option<f64>,
    /// Sample standard deviation (`n − 1`) of `ln(iterations)`; needs two
    /// converged trials.
    pub std_log_iters: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, scheme: &str, k: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.k == k)
    }

    /// Rows of one scheme ordered by depth.
    pub fn series(&self, scheme: &str) -> Vec<&SummaryRow> {
        let mut rows: Vec<_> = self.rows.iter().filter(|r| r.scheme == scheme).collect();
        rows.sort_by_key(|r| (r.k, r.d));
        rows
    }

    /// Scheme ids in first-appearance order.
    pub fn schemes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.scheme.as_str()) {
                out.push(&r.scheme);
            }
        }
        out
    }
}

/// Mean and `n − 1` standard deviation. `None` entries for empty input or a
/// single sample's spread.
pub fn mean_and_sample_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (Some(mean), Some((ss / (n - 1) as f64).sqrt()))
}

/// `ln` of an iteration count; a run that starts converged counts as one
/// iteration so its log is 0.
pub fn log_iterations(iterations: u64) -> f64 {
    (iterations.max(1) as f64).ln()
}

pub fn summarize(records: &[TrialRecord]) -> ExperimentSummary {
    let mut keys: Vec<(&str, usize, usize)> = records.iter().map(|r| (r.scheme_id.as_str(), r.k, r.d)).collect();
    keys.sort();
    keys.dedup();
    let rows = keys
        .into_iter()
        .map(|(scheme, k, d)| {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.scheme_id == scheme && r.k == k && r.d == d).collect();
            let logs: Vec<f64> = cell
                .iter()
                .filter(|r| r.status == RunStatus::Converged)
                .map(|r| log_iterations(r.iterations))
                .collect();
            let n_trials = cell.len();
            let n_converged = logs.len();
            let n_diverged = cell.iter().filter(|r| r.status == RunStatus::Diverged).count();
            let (mean, std) = mean_and_sample_std(&logs);
            SummaryRow {
                scheme: scheme.to_string(),
                k,
                d,
                n_trials,
                n_converged,
                n_diverged,
                nc_percent: 100.0 * (n_trials - n_converged) as f64 / n_trials as f64,
                mean_log_iters: mean,
                std_log_iters: std,
            }
        })
        .collect();
    ExperimentSummary { rows }
}

/// Median of converged iteration counts, `None` if none converged.
pub fn median_converged_iterations(records: &[TrialRecord]) -> Option<f64> {
    let mut its: Vec<u64> =
        records.iter().filter(|r| r.status == RunStatus::Converged).map(|r| r.iterations).collect();
    if its.is_empty() {
        return None;
    }
    its.sort_unstable();
    let n = its.len();
    Some(if n % 2 == 1 { its[n / 2] as f64 } else { (its[n / 2 - 1] + its[n / 2]) as f64 / 2.0 })
}
