//! Step plans, run outcomes and trajectory recording shared by the scalar and
//! matrix steppers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step size, iteration cap and stopping threshold for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPlan {
    pub eta: f64,
    #[serde(default = "StepPlan::default_max_iters")]
    pub max_iters: u64,
    #[serde(default = "StepPlan::default_stop_threshold")]
    pub stop_threshold: f64,
}

impl StepPlan {
    pub const DEFAULT_MAX_ITERS: u64 = 10_000_000;
    pub const DEFAULT_STOP_THRESHOLD: f64 = 0.1;

    fn default_max_iters() -> u64 {
        Self::DEFAULT_MAX_ITERS
    }

    fn default_stop_threshold() -> f64 {
        Self::DEFAULT_STOP_THRESHOLD
    }

    pub fn new(eta: f64, max_iters: u64, stop_threshold: f64) -> Result<Self> {
        let plan = Self { eta, max_iters, stop_threshold };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks `max_iters >= 1` and a finite, non-negative step size.
    ///
    /// A zero step size is accepted: it is the degenerate "frozen" run used to
    /// exercise the iteration cap.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidPlan(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidPlan("max_iters must be at least 1".into()));
        }
        if self.stop_threshold.is_nan() {
            return Err(Error::InvalidPlan("stop_threshold is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxIters => "MaxIters",
            RunStatus::Diverged => "Diverged",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Terminal status of a run.
///
/// `iterations` is the index `t` of the state that triggered termination:
/// the first state with objective at or below the threshold, the cap, or the
/// first state holding a non-finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<S> {
    pub status: RunStatus,
    pub iterations: u64,
    pub final_objective: f64,
    pub final_state: S,
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    pub objective: f64,
    /// `∏ wᵢ` for scalar runs; `trace(∏ Wᵢ)/d` for matrix runs.
    pub product: f64,
    /// Per-coordinate values (scalar runs) or per-layer `trace(Wᵢ)/d` (matrix runs).
    pub coords: Vec<f64>,
}

/// Receives per-iteration state from a run.
///
/// The stepper calls [`Recorder::wants`] for every evaluated iteration and only
/// builds a [`Snapshot`] when it returns true; the terminal iteration is always
/// offered through [`Recorder::record`].
pub trait Recorder {
    fn wants(&mut self, t: u64) -> bool;
    fn record(&mut self, snapshot: Snapshot);
}

/// Recorder that drops everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn wants(&mut self, _t: u64) -> bool {
        false
    }

    fn record(&mut self, _snapshot: Snapshot) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thinning {
    /// Record every `n`-th iteration.
    Every(u64),
    /// Record iterations 0, 1, then each time `t` has grown by at least the
    /// given factor since the last recorded point.
    Geometric(f64),
}

impl Default for Thinning {
    fn default() -> Self {
        Thinning::Geometric(1.01)
    }
}

impl Thinning {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Thinning::Every(0) => Err(Error::InvalidPlan("thinning every(0)".into())),
            Thinning::Geometric(r) if !(r.is_finite() && r > 1.0) => {
                Err(Error::InvalidPlan(format!("geometric thinning ratio must be > 1, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

/// Thinned in-memory trajectory. Snapshot `t` values are strictly increasing;
/// the first and last evaluated iterations are always present.
#[derive(Debug, Clone)]
pub struct TrajectoryRecorder {
    thinning: Thinning,
    next: u64,
    snapshots: Vec<Snapshot>,
}

impl TrajectoryRecorder {
    pub fn new(thinning: Thinning) -> Self {
        Self { thinning, next: 0, snapshots: Vec::new() }
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<Snapshot> {
        self.snapshots
    }

    fn advance(&mut self, t: u64) {
        self.next = match self.thinning {
            Thinning::Every(n) => (t / n + 1) * n,
            Thinning::Geometric(r) => {
                let grown = (t as f64 * r).ceil();
                if grown >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    (grown as u64).max(t + 1)
                }
            }
        };
    }
}

impl Recorder for TrajectoryRecorder {
    fn wants(&mut self, t: u64) -> bool {
        t >= self.next
    }

    fn record(&mut self, snapshot: Snapshot) {
        if self.snapshots.last().is_some_and(|s| s.t >= snapshot.t) {
            return;
        }
        self.advance(snapshot.t);
        self.snapshots.push(snapshot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(t: u64) -> Snapshot {
        Snapshot { t, objective: 0.0, product: 0.0, coords: vec![] }
    }

    fn drive(rec: &mut TrajectoryRecorder, last: u64) {
        for t in 0..=last {
            if rec.wants(t) || t == last {
                rec.record(snap(t));
            }
        }
    }

    #[test]
    fn every_n_keeps_multiples_and_endpoints() {
        let mut rec = TrajectoryRecorder::new(Thinning::Every(10));
        drive(&mut rec, 35);
        let ts: Vec<u64> = rec.snapshots().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 30, 35]);
    }

    #[test]
    fn geometric_is_strictly_increasing() {
        let mut rec = TrajectoryRecorder::new(Thinning::Geometric(1.5));
        drive(&mut rec, 1000);
        let ts: Vec<u64> = rec.snapshots().iter().map(|s| s.t).collect();
        assert_eq!(ts[0], 0);
        assert_eq!(*ts.last().unwrap(), 1000);
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert!(ts.len() < 30);
    }

    #[test]
    fn duplicate_terminal_record_is_ignored() {
        let mut rec = TrajectoryRecorder::new(Thinning::Every(1));
        rec.record(snap(0));
        rec.record(snap(0));
        assert_eq!(rec.snapshots().len(), 1);
    }

    #[test]
    fn plan_validation() {
        assert!(StepPlan::new(0.1, 0, 0.1).is_err());
        assert!(StepPlan::new(-1.0, 10, 0.1).is_err());
        assert!(StepPlan::new(f64::NAN, 10, 0.1).is_err());
        assert!(StepPlan::new(0.0, 10, 0.1).is_ok());
        assert!(Thinning::Geometric(1.0).validate().is_err());
        assert!(Thinning::Every(0).validate().is_err());
    }
}
