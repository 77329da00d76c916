//! Depth-`k` network with one-dimensional layers: `F(w) = f(w₁ w₂ ⋯ w_k)`.
//!
//! Products are always formed left to right in index order. Leave-one-out
//! products come from prefix/suffix arrays and never divide by a coordinate,
//! because coordinates cross zero during the dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Recorder, RunOutcome, RunStatus, Snapshot, StepPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarState {
    pub w: Vec<f64>,
    pub t: u64,
}

impl ScalarState {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let state = Self { w, t: 0 };
        state.validate()?;
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.is_empty() {
            return Err(Error::InvalidState("scalar state needs k >= 1 coordinates".into()));
        }
        if let Some(j) = self.w.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidState(format!("coordinate {} is not finite", j + 1)));
        }
        Ok(())
    }

    /// `∏ wᵢ`, left to right.
    pub fn product(&self) -> f64 {
        product(&self.w)
    }
}

pub(crate) fn product(w: &[f64]) -> f64 {
    w.iter().fold(1.0, |acc, &x| acc * x)
}

/// Outer loss `f` applied to the product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarLoss {
    /// `½ (p − y)²`
    Quadratic { y: f64 },
    /// `log(1 + eᵖ)`
    Logistic,
}

impl ScalarLoss {
    pub fn value(&self, p: f64) -> f64 {
        match *self {
            ScalarLoss::Quadratic { y } => {
                let r = p - y;
                0.5 * (r * r)
            }
            ScalarLoss::Logistic => {
                if p > 30.0 {
                    p + (-p).exp().ln_1p()
                } else {
                    p.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(&self, p: f64) -> f64 {
        match *self {
            ScalarLoss::Quadratic { y } => p - y,
            ScalarLoss::Logistic => {
                if p >= 0.0 {
                    1.0 / (1.0 + (-p).exp())
                } else {
                    let e = p.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// `sup |f′(p)|` over `|p| ≤ bound`. Both built-in derivatives are
    /// monotone, so the supremum sits at an endpoint.
    pub fn sup_abs_derivative(&self, bound: f64) -> f64 {
        let b = bound.abs();
        match *self {
            ScalarLoss::Quadratic { y } => b + y.abs(),
            ScalarLoss::Logistic => self.derivative(b),
        }
    }

    /// Infimum of `f` over the reals.
    pub fn infimum(&self) -> f64 {
        0.0
    }
}

/// Outer-loss conditions measured on a grid: differentiable, Lipschitz and
/// strictly increasing from `−½`, with `inf_{p ≥ −½} f − inf f > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterLossReport {
    /// `f′ > 0` at every grid point and `f` strictly increases between neighbours.
    pub increasing: bool,
    /// Largest `|f′|` seen on the grid; the Lipschitz constant over its span.
    pub lipschitz: f64,
    /// `min f` over the grid minus the infimum over the reals.
    pub gap: f64,
    pub pass: bool,
}

/// Checks the outer-loss conditions on a caller-supplied grid, which must be
/// strictly increasing, finite, start at `−½` or later and have two points.
/// The conditions are stated without constants, so this only certifies the
/// sampled points.
pub fn check_outer_loss(loss: &ScalarLoss, grid: &[f64]) -> Result<OuterLossReport> {
    if grid.len() < 2 || grid[0] < -0.5 || grid.iter().any(|p| !p.is_finite()) {
        return Err(Error::Precondition("grid needs >= 2 finite points, all >= -1/2".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("grid must be strictly increasing".into()));
    }
    let values: Vec<f64> = grid.iter().map(|&p| loss.value(p)).collect();
    let increasing =
        grid.iter().all(|&p| loss.derivative(p) > 0.0) && values.windows(2).all(|w| w[1] > w[0]);
    let lipschitz = grid.iter().map(|&p| loss.derivative(p).abs()).fold(0.0, f64::max);
    let gap = values.iter().copied().fold(f64::INFINITY, f64::min) - loss.infimum();
    Ok(OuterLossReport { increasing, lipschitz, gap, pass: increasing && lipschitz.is_finite() && gap > 0.0 })
}

/// Reusable buffers for the hot loop. Every public scalar operation goes
/// through [`ScalarWorkspace::evaluate`], so step, run and the one-shot
/// gradient share one arithmetic path.
#[derive(Debug, Clone, Default)]
pub struct ScalarWorkspace {
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    grad: Vec<f64>,
}

/// Product and objective at the evaluated point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub product: f64,
    pub objective: f64,
    pub derivative: f64,
}

impl ScalarWorkspace {
    pub fn new(k: usize) -> Self {
        Self { prefix: vec![0.0; k + 1], suffix: vec![0.0; k + 1], grad: vec![0.0; k] }
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    /// Fills the gradient buffer for `w` and returns product and objective.
    ///
    /// `grad[j] = (prefix[j] · f′(p)) · suffix[j+1]` where `prefix[j] = w₀⋯w_{j−1}`
    /// and `suffix[j+1] = w_{j+1}⋯w_{k−1}`. The association order matches the
    /// matrix gradient `(Lⱼᵀ R) Rⱼᵀ` so that 1×1 matrix runs are bit-identical.
    pub fn evaluate(&mut self, w: &[f64], loss: &ScalarLoss) -> Evaluation {
        let k = w.len();
        if self.grad.len() != k {
            *self = Self::new(k);
        }
        self.prefix[0] = 1.0;
        for i in 0..k {
            self.prefix[i + 1] = self.prefix[i] * w[i];
        }
        self.suffix[k] = 1.0;
        for i in (0..k).rev() {
            self.suffix[i] = w[i] * self.suffix[i + 1];
        }
        let p = self.prefix[k];
        let fp = loss.derivative(p);
        for j in 0..k {
            self.grad[j] = (self.prefix[j] * fp) * self.suffix[j + 1];
        }
        Evaluation { product: p, objective: loss.value(p), derivative: fp }
    }
}

/// `f(∏ wᵢ)`.
pub fn scalar_objective(state: &ScalarState, loss: &ScalarLoss) -> Result<f64> {
    let value = loss.value(state.product());
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged { iteration: state.t })
    }
}

/// `∂F/∂wⱼ = f′(∏ᵢ wᵢ) · ∏_{i≠j} wᵢ`.
pub fn scalar_gradient(state: &ScalarState, loss: &ScalarLoss) -> Result<Vec<f64>> {
    let mut ws = ScalarWorkspace::new(state.k());
    let eval = ws.evaluate(&state.w, loss);
    if !eval.product.is_finite() || ws.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged { iteration: state.t });
    }
    Ok(ws.grad)
}

fn apply_step(w: &mut [f64], grad: &[f64], eta: f64) -> bool {
    let mut finite = true;
    for (x, g) in w.iter_mut().zip(grad) {
        *x -= eta * g;
        finite &= x.is_finite();
    }
    finite
}

/// One simultaneous gradient step `w(t+1) = w(t) − η ∇F(w(t))`.
pub fn scalar_step(state: &ScalarState, loss: &ScalarLoss, eta: f64) -> Result<ScalarState> {
    let grad = scalar_gradient(state, loss)?;
    let mut w = state.w.clone();
    if !apply_step(&mut w, &grad, eta) {
        return Err(Error::Diverged { iteration: state.t + 1 });
    }
    Ok(ScalarState { w, t: state.t + 1 })
}

/// Iterates [`scalar_step`] until the objective reaches `plan.stop_threshold`,
/// the iteration cap is hit, or a non-finite value shows up.
pub fn scalar_run<R: Recorder + ?Sized>(
    init: &ScalarState,
    loss: &ScalarLoss,
    plan: &StepPlan,
    recorder: &mut R,
) -> Result<RunOutcome<ScalarState>> {
    plan.validate()?;
    init.validate()?;
    let mut ws = ScalarWorkspace::new(init.k());
    let mut w = init.w.clone();
    let mut t = init.t;
    let snapshot = |t: u64, eval: &Evaluation, w: &[f64]| Snapshot {
        t,
        objective: eval.objective,
        product: eval.product,
        coords: w.to_vec(),
    };
    loop {
        let eval = ws.evaluate(&w, loss);
        let status = if !eval.objective.is_finite() || !eval.product.is_finite() {
            Some(RunStatus::Diverged)
        } else if eval.objective <= plan.stop_threshold {
            Some(RunStatus::Converged)
        } else if t >= plan.max_iters {
            Some(RunStatus::MaxIters)
        } else {
            None
        };
        if let Some(status) = status {
            recorder.record(snapshot(t, &eval, &w));
            return Ok(RunOutcome {
                status,
                iterations: t,
                final_objective: eval.objective,
                final_state: ScalarState { w, t },
            });
        }
        if recorder.wants(t) {
            recorder.record(snapshot(t, &eval, &w));
        }
        let finite = apply_step(&mut w, &ws.grad, plan.eta);
        t += 1;
        if !finite {
            let eval = Evaluation { product: f64::NAN, objective: f64::NAN, derivative: f64::NAN };
            recorder.record(snapshot(t, &eval, &w));
            return Ok(RunOutcome {
                status: RunStatus::Diverged,
                iterations: t,
                final_objective: f64::NAN,
                final_state: ScalarState { w, t },
            });
        }
    }
}
