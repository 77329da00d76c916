//! Numerical checks of the inequalities behind the scalar dynamics.
//!
//! Each check returns a [`LemmaReport`]. A violation is an inequality broken by
//! more than the stated tolerance; `worst_margin` is the smallest slack seen
//! (negative when something failed). Precondition failures are errors, not
//! failed reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{
    check_assumption, sample_scalar, scalar_moments, AssumptionConstants, AssumptionReport, AssumptionSubject,
    SchemeKind,
};
use crate::rng::TrialRng;
use crate::scalar::{scalar_run, ScalarLoss, ScalarState, ScalarWorkspace};
use crate::trajectory::{Recorder, RunStatus, Snapshot, StepPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub n_instances: u64,
    pub n_violations: u64,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Accumulates instance margins into a report.
#[derive(Debug, Clone)]
struct Tally {
    n: u64,
    violations: u64,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self { n: 0, violations: 0, worst: f64::MAX }
    }

    /// `margin` is slack (≥ 0 means satisfied); `ok` decides the violation.
    fn push(&mut self, margin: f64, ok: bool) {
        self.n += 1;
        if !ok {
            self.violations += 1;
        }
        if margin.is_nan() {
            self.worst = f64::MIN;
        } else {
            self.worst = self.worst.min(margin);
        }
    }

    fn report(self, lemma_id: &str, tolerance: f64) -> LemmaReport {
        LemmaReport {
            lemma_id: lemma_id.into(),
            n_instances: self.n,
            n_violations: self.violations,
            worst_margin: if self.n == 0 { 0.0 } else { self.worst },
            tolerance,
            pass: self.violations == 0,
        }
    }
}

impl LemmaReport {
    /// Folds per-instance reports of one check into a single report.
    pub fn combine(lemma_id: &str, reports: &[LemmaReport]) -> LemmaReport {
        let n_instances = reports.iter().map(|r| r.n_instances).sum();
        let n_violations = reports.iter().map(|r| r.n_violations).sum();
        LemmaReport {
            lemma_id: lemma_id.into(),
            n_instances,
            n_violations,
            worst_margin: reports.iter().map(|r| r.worst_margin).fold(f64::MAX, f64::min),
            tolerance: reports.iter().map(|r| r.tolerance).fold(0.0, f64::max),
            pass: n_violations == 0,
        }
    }
}

fn leave_one_out(w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let mut prefix = vec![1.0; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] * w[i];
    }
    let mut out = vec![0.0; k];
    let mut suffix = 1.0;
    for j in (0..k).rev() {
        out[j] = prefix[j] * suffix;
        suffix *= w[j];
    }
    out
}

fn max_abs_leave_one_out(w: &[f64]) -> f64 {
    leave_one_out(w).iter().map(|x| x.abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Geometric-mean superadditivity

/// One instance of `∏(wᵢ − α) ≤ ((∏wᵢ)^{1/k} − α)ᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmSample {
    pub w: Vec<f64>,
    pub alpha: f64,
}

pub const GM_RELATIVE_SLACK: f64 = 1e-9;

pub fn gm_sides(s: &GmSample) -> (f64, f64) {
    let k = s.w.len() as f64;
    let lhs = s.w.iter().fold(1.0, |acc, &x| acc * (x - s.alpha));
    let gm = (s.w.iter().map(|x| x.ln()).sum::<f64>() / k).exp();
    (lhs, (gm - s.alpha).powi(s.w.len() as i32))
}

pub fn check_gm_inequality(samples: &[GmSample]) -> Result<LemmaReport> {
    let mut tally = Tally::new();
    for s in samples {
        if s.w.is_empty() || !(s.alpha > 0.0) || s.w.iter().any(|&x| !(x > s.alpha)) {
            return Err(Error::Precondition("gm sample needs alpha > 0 and every w_i > alpha".into()));
        }
        let (lhs, rhs) = gm_sides(s);
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        tally.push((rhs - lhs) / scale, lhs <= rhs + GM_RELATIVE_SLACK * scale);
    }
    Ok(tally.report("gm", GM_RELATIVE_SLACK))
}

/// `k ≤ 10`, `α ∈ (0, 2]`, `wᵢ ∈ (α, α + 10]`.
pub fn random_gm_samples(n: usize, rng: &mut TrialRng) -> Vec<GmSample> {
    (0..n)
        .map(|_| {
            let k = 1 + rng.index(10);
            let alpha = 2.0 * (1.0 - rng.uniform());
            let w = (0..k).map(|_| alpha + 10.0 * (1.0 - rng.uniform())).collect();
            GmSample { w, alpha }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// log(a + b) ≤ log a + b/a

pub const LOGAB_SLACK: f64 = 1e-12;

pub fn check_logab(samples: &[(f64, f64)]) -> Result<LemmaReport> {
    let mut tally = Tally::new();
    for &(a, b) in samples {
        if !(a > 0.0) || !(b >= 0.0) {
            return Err(Error::Precondition(format!("logab needs a > 0 and b >= 0, got ({a}, {b})")));
        }
        let lhs = (a + b).ln();
        let rhs = a.ln() + b / a;
        tally.push(rhs - lhs, lhs <= rhs + LOGAB_SLACK);
    }
    Ok(tally.report("logab", LOGAB_SLACK))
}

/// `a` log-uniform on `[1e−3, 1e3]`, `b` zero one time in ten, otherwise
/// log-uniform on `[1e−6, 1e3]`.
pub fn random_logab_samples(n: usize, rng: &mut TrialRng) -> Vec<(f64, f64)> {
    let ln10 = std::f64::consts::LN_10;
    (0..n)
        .map(|_| {
            let a = (ln10 * rng.uniform_range(-3.0, 3.0)).exp();
            let b = if rng.index(10) == 0 { 0.0 } else { (ln10 * rng.uniform_range(-6.0, 3.0)).exp() };
            (a, b)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sign-flip equivariance

fn same_bits(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Runs `w(t)` for target `y` and `v(t)` for target `σy` from `v(1) = σ ⊙ w(1)`,
/// `σ = ∏σᵢ`, and requires `vⱼ(t) = σⱼ wⱼ(t)` and equal objectives at every
/// step with no tolerance.
pub fn check_signswitch(w1: &ScalarState, sigma: &[f64], y: f64, eta: f64, steps: u64) -> Result<LemmaReport> {
    let k = w1.k();
    if steps == 0 {
        return Err(Error::Precondition("signswitch needs steps >= 1".into()));
    }
    if sigma.len() != k || sigma.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::Precondition("sigma must hold k entries of +1 or -1".into()));
    }
    let total_sign: f64 = sigma.iter().product();
    let loss_w = ScalarLoss::Quadratic { y };
    let loss_v = ScalarLoss::Quadratic { y: total_sign * y };
    let mut w = w1.w.clone();
    let mut v: Vec<f64> = w.iter().zip(sigma).map(|(x, s)| s * x).collect();
    let mut ws_w = ScalarWorkspace::new(k);
    let mut ws_v = ScalarWorkspace::new(k);
    let mut tally = Tally::new();
    for _ in 0..steps {
        let ew = ws_w.evaluate(&w, &loss_w);
        let ev = ws_v.evaluate(&v, &loss_v);
        let mut ok = same_bits(ew.objective, ev.objective);
        let mut worst = 0.0f64;
        for j in 0..k {
            let d = (v[j] - sigma[j] * w[j]).abs();
            ok &= same_bits(v[j], sigma[j] * w[j]);
            worst = worst.max(if d.is_nan() { 0.0 } else { d });
        }
        tally.push(0.0 - worst, ok);
        if !ew.objective.is_finite() {
            break;
        }
        for j in 0..k {
            w[j] -= eta * ws_w.gradient()[j];
            v[j] -= eta * ws_v.gradient()[j];
        }
    }
    Ok(tally.report("signswitch", 0.0))
}

/// `k ∈ 1..=8`, `wᵢ ∈ [−1.5, 1.5]`, random signs, `y ∈ [−2, 2]`.
pub fn random_signswitch_instance(rng: &mut TrialRng) -> (ScalarState, Vec<f64>, f64) {
    let k = 1 + rng.index(8);
    let w = (0..k).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
    let sigma = (0..k).map(|_| rng.sign()).collect();
    let y = rng.uniform_range(-2.0, 2.0);
    (ScalarState::new(w).expect("finite"), sigma, y)
}

// ---------------------------------------------------------------------------
// Small-initialization tail bound

/// Estimates `E|w|` for a scalar scheme; returns `(mean, standard error)`.
pub fn estimate_mean_abs(kind: &SchemeKind, n: usize, rng: &mut TrialRng) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Precondition("need at least two draws".into()));
    }
    let draws = sample_scalar(kind, n, rng)?;
    let abs: Vec<f64> = draws.iter().map(|x| x.abs()).collect();
    let mean = abs.iter().sum::<f64>() / n as f64;
    let var = abs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

pub const MIN_SMALLINIT_DRAWS: usize = 10_000;

/// Monte Carlo check of
/// `Pr(maxⱼ |∏_{i≠j} wᵢ| ≥ k a^{(k−1)/2}) ≤ a^{(k−1)/2}` for `wᵢ` i.i.d. from
/// `kind` with `E|w| ≤ a`.
///
/// The precondition uses the exact `E|w|` when known and otherwise a Monte
/// Carlo estimate, rejected only when it exceeds `a` by more than three
/// standard errors. The probability passes when the empirical frequency is at
/// most the bound plus three binomial standard errors at the bound.
pub fn check_smallinit(kind: &SchemeKind, k: usize, a: f64, n_mc: usize, seed: u64) -> Result<LemmaReport> {
    if n_mc < MIN_SMALLINIT_DRAWS {
        return Err(Error::Precondition(format!("smallinit needs at least {MIN_SMALLINIT_DRAWS} draws")));
    }
    if k < 2 || !(a > 0.0) {
        return Err(Error::Precondition("smallinit needs k >= 2 and a > 0".into()));
    }
    let mut rng = TrialRng::new(seed, 0);
    let mean_abs_ok = match (kind, scalar_moments(kind)) {
        (SchemeKind::ScalarNearOne { .. }, _) | (_, None) => {
            let (m, se) = estimate_mean_abs(kind, n_mc, &mut rng)?;
            m - 3.0 * se <= a
        }
        (_, Some(m)) => m.mean_abs <= a,
    };
    if !mean_abs_ok {
        return Err(Error::Precondition(format!("E|w| exceeds a = {a} for {}", kind.id())));
    }
    let half = (k as f64 - 1.0) / 2.0;
    let bound = a.powf(half);
    let threshold = k as f64 * bound;
    let mut hits = 0usize;
    let mut rng = TrialRng::new(seed, 1);
    for _ in 0..n_mc {
        let w = sample_scalar(kind, k, &mut rng)?;
        if max_abs_leave_one_out(&w) >= threshold {
            hits += 1;
        }
    }
    let freq = hits as f64 / n_mc as f64;
    let slack = 3.0 * (bound.min(1.0) * (1.0 - bound.min(1.0)) / n_mc as f64).sqrt();
    let mut tally = Tally::new();
    tally.push(bound + slack - freq, freq <= bound + slack);
    Ok(tally.report("smallinit", slack))
}

// ---------------------------------------------------------------------------
// Gradient bound on a ball around a flat point

/// Radius `(δ / √(k−1)) · ln(β/α)`.
pub fn flatball_radius(k: usize, alpha: f64, beta: f64, delta: f64) -> f64 {
    delta / ((k - 1) as f64).sqrt() * (beta / alpha).ln()
}

pub const FLATBALL_RELATIVE_SLACK: f64 = 1e-9;

/// Samples points `v` uniformly in the ball of [`flatball_radius`] around `w`
/// (the first probe is `w` itself) and requires
/// `maxⱼ |∏_{i≠j} vᵢ| ≤ β`, `|∏vᵢ| ≤ β‖v‖∞` and
/// `‖∇F(v)‖ ≤ sup_{|p| ≤ β‖v‖∞} |f′(p)| · √k · β`.
pub fn check_flatball(
    w: &ScalarState,
    loss: &ScalarLoss,
    alpha: f64,
    beta: f64,
    delta: f64,
    n_probes: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let k = w.k();
    if k < 2 {
        return Err(Error::Precondition("flatball needs k >= 2".into()));
    }
    if !(alpha > 0.0 && beta > alpha && delta > 0.0) {
        return Err(Error::Precondition("flatball needs 0 < alpha < beta and delta > 0".into()));
    }
    let loo = max_abs_leave_one_out(&w.w);
    if loo > alpha {
        return Err(Error::Precondition(format!("max leave-one-out product {loo} exceeds alpha = {alpha}")));
    }
    let min_abs = w.w.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if min_abs < delta {
        return Err(Error::Precondition(format!("min |w_i| = {min_abs} is below delta = {delta}")));
    }
    let radius = flatball_radius(k, alpha, beta, delta);
    let mut rng = TrialRng::new(seed, 0);
    let mut ws = ScalarWorkspace::new(k);
    let mut tally = Tally::new();
    let tol = FLATBALL_RELATIVE_SLACK;
    for probe in 0..n_probes {
        let v: Vec<f64> = if probe == 0 {
            w.w.clone()
        } else {
            let dir: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = radius * rng.uniform().powf(1.0 / k as f64);
            w.w.iter().zip(&dir).map(|(x, u)| x + r * u / norm).collect()
        };
        let v_inf = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let loo = max_abs_leave_one_out(&v);
        tally.push((beta - loo) / beta, loo <= beta * (1.0 + tol));

        let eval = ws.evaluate(&v, loss);
        let p_bound = beta * v_inf;
        tally.push((p_bound - eval.product.abs()) / p_bound, eval.product.abs() <= p_bound * (1.0 + tol));

        let grad_norm = ws.gradient().iter().map(|g| g * g).sum::<f64>().sqrt();
        let g_bound = loss.sup_abs_derivative(p_bound) * (k as f64).sqrt() * beta;
        tally.push((g_bound - grad_norm) / g_bound, grad_norm <= g_bound * (1.0 + tol));
    }
    Ok(tally.report("flatball", tol))
}

// ---------------------------------------------------------------------------
// PL inequality on the positive region below the target

/// `𝒲 = {w : ∏wᵢ ∈ [0, y), w_{j*} ≥ δ for one coordinate j*, wⱼ ≥ γ for the rest}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionW {
    pub y: f64,
    pub delta: f64,
    pub gamma: f64,
    pub k: usize,
}

impl RegionW {
    pub fn validate(&self) -> Result<()> {
        if !(self.y > 0.0 && self.delta > 0.0 && self.gamma >= self.delta) || self.k == 0 {
            return Err(Error::Precondition("region needs y > 0, 0 < delta <= gamma and k >= 1".into()));
        }
        Ok(())
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        if w.len() != self.k {
            return false;
        }
        let p: f64 = w.iter().product();
        if !(p >= 0.0 && p < self.y) {
            return false;
        }
        let mut sorted = w.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted[0] >= self.delta && sorted[1..].iter().all(|&x| x >= self.gamma)
    }

    /// `μ` in `‖∇F‖² ≥ μ F`: `2k δ² γ^{2(k−2)}`.
    pub fn pl_constant(&self) -> f64 {
        2.0 * self.k as f64 * self.delta * self.delta * self.gamma.powi(2 * (self.k as i32 - 2))
    }

    /// `(δ, γ, …, γ)`.
    pub fn corner(&self) -> Vec<f64> {
        let mut w = vec![self.gamma; self.k];
        w[0] = self.delta;
        w
    }
}

pub const PL_RELATIVE_SLACK: f64 = 1e-9;
pub const PL_MAX_ATTEMPTS: u64 = 1_000_000;

/// Checks `‖∇F(w)‖² ≥ 2kδ²γ^{2(k−2)} F(w)` for `F = ½(∏w − y)²` at the corner
/// `(δ, γ, …, γ)` and at `n_probes − 1` rejection-sampled points of `𝒲`.
///
/// Candidates put one random coordinate at `δ·e^{s}` and the others at
/// `γ·e^{s}` with `s` uniform on `[0, 2L/k]`, `L = ln(y / (δγ^{k−1}))`, and are
/// kept when the product stays below `y`.
pub fn check_pl_condition(region: &RegionW, n_probes: usize, seed: u64) -> Result<LemmaReport> {
    region.validate()?;
    let k = region.k;
    let floor = region.delta * region.gamma.powi(k as i32 - 1);
    if floor >= region.y {
        return Err(Error::InfeasibleRegion(format!("delta*gamma^(k-1) = {floor} is not below y = {}", region.y)));
    }
    let spread = 2.0 * (region.y / floor).ln() / k as f64;
    let loss = ScalarLoss::Quadratic { y: region.y };
    let mu = region.pl_constant();
    let mut ws = ScalarWorkspace::new(k);
    let mut rng = TrialRng::new(seed, 0);
    let mut tally = Tally::new();
    let mut attempts = 0u64;
    let mut probe = region.corner();
    for i in 0..n_probes {
        if i > 0 {
            loop {
                attempts += 1;
                if attempts > PL_MAX_ATTEMPTS {
                    return Err(Error::InfeasibleRegion(format!(
                        "no point of the region found in {PL_MAX_ATTEMPTS} attempts"
                    )));
                }
                let j_star = rng.index(k);
                for (j, x) in probe.iter_mut().enumerate() {
                    let lower = if j == j_star { region.delta } else { region.gamma };
                    *x = lower * (spread * rng.uniform()).exp();
                }
                if region.contains(&probe) {
                    break;
                }
            }
        }
        let eval = ws.evaluate(&probe, &loss);
        let lhs = ws.gradient().iter().map(|g| g * g).sum::<f64>();
        let rhs = mu * eval.objective;
        let scale = rhs.max(f64::MIN_POSITIVE);
        tally.push((lhs - rhs) / scale, lhs >= rhs * (1.0 - PL_RELATIVE_SLACK));
    }
    Ok(tally.report("pl", PL_RELATIVE_SLACK))
}

// ---------------------------------------------------------------------------
// Hessian of the quadratic objective

/// Closed-form Hessian of `½(∏wᵢ − y)²`, row-major `k × k`:
/// `H_rr = p²/w_r²`, `H_rs = (p − y)p/(w_r w_s) + p²/(w_r w_s)`.
pub fn hessian_formula(w: &[f64], y: f64) -> Vec<f64> {
    let k = w.len();
    let p: f64 = w.iter().product();
    let mut h = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..k {
            h[r * k + s] = if r == s {
                p * p / (w[r] * w[r])
            } else {
                (p - y) * p / (w[r] * w[s]) + p * p / (w[r] * w[s])
            };
        }
    }
    h
}

/// Second-order central differences of `F` with step `10⁻³·|wᵢ|` per axis.
pub fn hessian_finite_difference(w: &[f64], y: f64) -> Vec<f64> {
    let k = w.len();
    let f = |x: &[f64]| {
        let p: f64 = x.iter().product();
        0.5 * (p - y) * (p - y)
    };
    let h: Vec<f64> = w.iter().map(|x| 1e-3 * x.abs()).collect();
    let mut out = vec![0.0; k * k];
    let mut x = w.to_vec();
    let f0 = f(&x);
    for r in 0..k {
        x[r] = w[r] + h[r];
        let fp = f(&x);
        x[r] = w[r] - h[r];
        let fm = f(&x);
        x[r] = w[r];
        out[r * k + r] = (fp - 2.0 * f0 + fm) / (h[r] * h[r]);
        for s in r + 1..k {
            let mut corner = |dr: f64, ds: f64| {
                x[r] = w[r] + dr * h[r];
                x[s] = w[s] + ds * h[s];
                let v = f(&x);
                x[r] = w[r];
                x[s] = w[s];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[r] * h[s]);
            out[r * k + s] = v;
            out[s * k + r] = v;
        }
    }
    out
}

pub const HESSIAN_RELATIVE_TOLERANCE: f64 = 1e-4;

/// Compares [`hessian_formula`] with [`hessian_finite_difference`] entrywise,
/// relative to the largest entry magnitude (at least 1). With a region that
/// contains `w`, also requires `‖∇²F‖ ≤ 2ky²/δ²`, checked through the Frobenius
/// norm, which dominates the spectral norm.
pub fn check_hessian(w: &ScalarState, y: f64, region: Option<&RegionW>) -> Result<LemmaReport> {
    if w.w.contains(&0.0) {
        return Err(Error::Precondition("hessian formula needs every w_i != 0".into()));
    }
    let k = w.k();
    let formula = hessian_formula(&w.w, y);
    let fd = hessian_finite_difference(&w.w, y);
    let scale = formula.iter().map(|x| x.abs()).fold(1.0, f64::max);
    let mut tally = Tally::new();
    for (a, b) in formula.iter().zip(&fd) {
        let err = (a - b).abs() / scale;
        tally.push(HESSIAN_RELATIVE_TOLERANCE - err, err <= HESSIAN_RELATIVE_TOLERANCE);
    }
    if let Some(region) = region {
        region.validate()?;
        if region.y == y && region.contains(&w.w) {
            let frob = formula.iter().map(|x| x * x).sum::<f64>().sqrt();
            let bound = 2.0 * k as f64 * y * y / (region.delta * region.delta);
            tally.push((bound - frob) / bound, frob <= bound);
        }
    }
    Ok(tally.report("hessian", HESSIAN_RELATIVE_TOLERANCE))
}

/// `k ∈ 1..=6`, `|wᵢ| ∈ [0.2, 2]` with random sign, `y ∈ [−2, 2]`.
pub fn random_hessian_instance(rng: &mut TrialRng) -> (ScalarState, f64) {
    let k = 1 + rng.index(6);
    let w = (0..k).map(|_| rng.sign() * rng.uniform_range(0.2, 2.0)).collect();
    (ScalarState::new(w).expect("finite"), rng.uniform_range(-2.0, 2.0))
}

// ---------------------------------------------------------------------------
// Sign-crossing structure for a negative target

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PhaseCheck {
    Checked { report: LemmaReport, crossing: Option<Crossing> },
    /// The start point does not meet the positive, well-separated
    /// initialization conditions for a negative target.
    NotApplicable { reason: String },
}

impl PhaseCheck {
    pub fn passed(&self) -> Option<bool> {
        match self {
            PhaseCheck::Checked { report, .. } => Some(report.pass),
            PhaseCheck::NotApplicable { .. } => None,
        }
    }
}

/// Where the one sign change happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// 0-based coordinate index.
    pub coordinate: usize,
    /// First iteration with that coordinate `≤ 0`.
    pub t0: u64,
    pub value_at_t0: f64,
    pub value_after: f64,
}

#[derive(Debug, Default)]
struct PhaseMonitor {
    initial_argmin: Option<usize>,
    last_t: Option<u64>,
    ever_nonpositive: Vec<bool>,
    t0: Option<u64>,
    crossing: Option<Crossing>,
    /// (b) the first non-positive set is exactly the initial argmin
    first_is_argmin: Option<bool>,
    /// (c) at t0 every other coordinate is positive and above it
    others_above_at_t0: Option<bool>,
    /// (d) at t0+1 the crosser is negative and the others positive
    split_after: Option<bool>,
    last_objective_after: Option<f64>,
    objective_increases: u64,
    margin: f64,
}

impl Recorder for PhaseMonitor {
    fn wants(&mut self, _t: u64) -> bool {
        true
    }

    fn record(&mut self, s: Snapshot) {
        if self.last_t.is_some_and(|t| s.t <= t) {
            return;
        }
        self.last_t = Some(s.t);
        let w = &s.coords;
        if self.initial_argmin.is_none() {
            self.ever_nonpositive = vec![false; w.len()];
            self.initial_argmin = w.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(j, _)| j);
            self.margin = f64::MAX;
        }
        for (j, &x) in w.iter().enumerate() {
            if !(x > 0.0) {
                self.ever_nonpositive[j] = true;
            }
        }
        match self.t0 {
            None => {
                let nonpos: Vec<usize> = (0..w.len()).filter(|&j| !(w[j] > 0.0)).collect();
                if nonpos.is_empty() {
                    return;
                }
                let j = nonpos[0];
                self.t0 = Some(s.t);
                self.first_is_argmin = Some(nonpos.len() == 1 && Some(j) == self.initial_argmin);
                let others_ok = (0..w.len()).filter(|&i| i != j).all(|i| w[i] > 0.0 && w[i] > w[j]);
                self.others_above_at_t0 = Some(others_ok);
                self.crossing = Some(Crossing { coordinate: j, t0: s.t, value_at_t0: w[j], value_after: f64::NAN });
            }
            Some(t0) => {
                let Some(crossing) = self.crossing.as_mut() else { return };
                let j = crossing.coordinate;
                if s.t == t0 + 1 {
                    crossing.value_after = w[j];
                    let min_other = (0..w.len()).filter(|&i| i != j).map(|i| w[i]).fold(f64::INFINITY, f64::min);
                    self.split_after = Some(w[j] < 0.0 && min_other > 0.0);
                    self.margin = self.margin.min(-w[j]).min(if min_other.is_finite() { min_other } else { f64::MAX });
                    self.last_objective_after = Some(s.objective);
                } else if let Some(prev) = self.last_objective_after {
                    if !(s.objective <= prev) {
                        self.objective_increases += 1;
                    }
                    self.last_objective_after = Some(s.objective);
                }
            }
        }
    }
}

/// Runs gradient descent on `½(∏w − y)²` from `init` and checks the sign
/// structure of the trajectory:
///
/// * (a) exactly one coordinate ever becomes non-positive;
/// * (b) it is the initial argmin;
/// * (c) at its first non-positive iteration `t₀` every other coordinate is
///   positive and larger;
/// * (d) at `t₀ + 1` it is strictly negative and the others positive;
/// * (e) from `t₀ + 1` on the objective never increases and the run converges.
///
/// Returns `NotApplicable` when `y ≥ 0`, a coordinate is non-positive, or the
/// initialization conditions for a negative target fail under `consts`.
pub fn check_phase_structure(
    init: &ScalarState,
    y: f64,
    plan: &StepPlan,
    consts: &AssumptionConstants,
) -> Result<PhaseCheck> {
    if !(y < 0.0) {
        return Ok(PhaseCheck::NotApplicable { reason: format!("target y = {y} is not negative") });
    }
    if init.w.iter().any(|&x| !(x > 0.0)) {
        return Ok(PhaseCheck::NotApplicable { reason: "initial coordinates are not all positive".into() });
    }
    let a4 = check_assumption(AssumptionSubject::NegativeTarget { state: init, y }, consts);
    if !a4.pass {
        return Ok(PhaseCheck::NotApplicable { reason: failed_clauses(&a4) });
    }
    let mut monitor = PhaseMonitor::default();
    let outcome = scalar_run(init, &ScalarLoss::Quadratic { y }, plan, &mut monitor)?;

    let mut tally = Tally::new();
    let crossers = monitor.ever_nonpositive.iter().filter(|&&b| b).count();
    let converged = outcome.status == RunStatus::Converged;
    tally.push(0.0, crossers == 1);
    tally.push(0.0, monitor.first_is_argmin == Some(true));
    tally.push(0.0, monitor.others_above_at_t0 == Some(true));
    tally.push(0.0, monitor.split_after == Some(true));
    tally.push(0.0, converged && monitor.objective_increases == 0);
    let mut report = tally.report("phase_structure", 0.0);
    report.worst_margin = if report.pass { monitor.margin } else { -1.0 };
    Ok(PhaseCheck::Checked { report, crossing: monitor.crossing })
}

fn failed_clauses(report: &AssumptionReport) -> String {
    let names: Vec<&str> = report.clauses.iter().filter(|c| !c.pass).map(|c| c.clause.as_str()).collect();
    format!("initialization conditions fail: {}", names.join(", "))
}

/// Positive start point for a negative target that satisfies the
/// initialization conditions under `consts`: sorted values with gaps of at
/// least `1/k`, shuffled, redrawn until the checks pass.
pub fn sample_phase_init(k: usize, y: f64, consts: &AssumptionConstants, rng: &mut TrialRng) -> Result<ScalarState> {
    let gap = (k as f64).powf(-consts.a4_c4);
    for _ in 0..100_000 {
        let mut w = Vec::with_capacity(k);
        let mut x = rng.uniform_range(0.2, 0.5);
        for _ in 0..k {
            w.push(x);
            x += gap * (1.0 + 0.1 * rng.uniform()) + 1e-9;
        }
        for i in (1..k).rev() {
            w.swap(i, rng.index(i + 1));
        }
        let state = ScalarState::new(w)?;
        if check_assumption(AssumptionSubject::NegativeTarget { state: &state, y }, consts).pass {
            return Ok(state);
        }
    }
    Err(Error::InfeasibleRegion(format!("no start point for k = {k} satisfies the initialization conditions")))
}

// ---------------------------------------------------------------------------
// Suite

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub pass: bool,
    pub reports: BTreeMap<String, LemmaReport>,
}

/// Sizes of the default suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSizes {
    pub gm: usize,
    pub logab: usize,
    pub signswitch_instances: usize,
    pub signswitch_steps: u64,
    pub smallinit_draws: usize,
    pub flatball_probes: usize,
    pub pl_probes: usize,
    pub hessian_instances: usize,
    pub mean_abs_draws: usize,
    pub phase_instances: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            gm: 10_000,
            logab: 100_000,
            signswitch_instances: 100,
            signswitch_steps: 1000,
            smallinit_draws: 100_000,
            flatball_probes: 1000,
            pl_probes: 1000,
            hessian_instances: 100,
            mean_abs_draws: 200_000,
            phase_instances: 20,
        }
    }
}

pub const MEAN_ABS_TOLERANCE: f64 = 0.01;

/// `|estimate − exact E|w||` within [`MEAN_ABS_TOLERANCE`].
pub fn check_mean_abs(kind: &SchemeKind, n: usize, seed: u64) -> Result<LemmaReport> {
    let exact = scalar_moments(kind)
        .ok_or_else(|| Error::Precondition(format!("{} has no scalar moments", kind.id())))?
        .mean_abs;
    let (estimate, _) = estimate_mean_abs(kind, n, &mut TrialRng::new(seed, 0))?;
    let mut tally = Tally::new();
    let err = (estimate - exact).abs();
    tally.push(MEAN_ABS_TOLERANCE - err, err <= MEAN_ABS_TOLERANCE);
    Ok(tally.report("mean_abs", MEAN_ABS_TOLERANCE))
}

fn seed_for(seed: u64, check: u64) -> u64 {
    let mut s = seed ^ check.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    crate::rng::splitmix64(&mut s)
}

/// Runs every check with the default sizes.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    run_suite_with(seed, &SuiteSizes::default())
}

pub fn run_suite_with(seed: u64, n: &SuiteSizes) -> Result<SuiteReport> {
    let mut reports = BTreeMap::new();
    let mut put = |id: &str, mut r: LemmaReport| {
        r.lemma_id = id.into();
        reports.insert(id.to_string(), r);
    };

    put("gm", check_gm_inequality(&random_gm_samples(n.gm, &mut TrialRng::new(seed_for(seed, 1), 0)))?);
    put("logab", check_logab(&random_logab_samples(n.logab, &mut TrialRng::new(seed_for(seed, 2), 0)))?);

    let mut rng = TrialRng::new(seed_for(seed, 3), 0);
    let mut parts = Vec::with_capacity(n.signswitch_instances);
    for _ in 0..n.signswitch_instances {
        let (w, sigma, y) = random_signswitch_instance(&mut rng);
        parts.push(check_signswitch(&w, &sigma, y, 1e-2, n.signswitch_steps)?);
    }
    put("signswitch", LemmaReport::combine("signswitch", &parts));

    put(
        "smallinit_gaussian",
        check_smallinit(&SchemeKind::XavierGaussian, 21, 0.8, n.smallinit_draws, seed_for(seed, 4))?,
    );
    put(
        "smallinit_uniform",
        check_smallinit(&SchemeKind::XavierUniform, 11, 0.9, n.smallinit_draws, seed_for(seed, 5))?,
    );
    put(
        "smallinit_plus_minus_one",
        check_smallinit(&SchemeKind::PlusMinusOne, 5, 1.0, n.smallinit_draws, seed_for(seed, 6))?,
    );

    let ones = ScalarState::new(vec![1.0; 10])?;
    let quad = ScalarLoss::Quadratic { y: -1.0 };
    put("flatball", check_flatball(&ones, &quad, 1.0, 2.0, 1.0, n.flatball_probes, seed_for(seed, 7))?);

    let region = RegionW { y: 1.0, delta: 0.2, gamma: 0.5, k: 6 };
    put("pl", check_pl_condition(&region, n.pl_probes, seed_for(seed, 8))?);

    let mut rng = TrialRng::new(seed_for(seed, 9), 0);
    let parts = (0..n.hessian_instances)
        .map(|_| {
            let (w, y) = random_hessian_instance(&mut rng);
            check_hessian(&w, y, None)
        })
        .collect::<Result<Vec<_>>>()?;
    put("hessian", LemmaReport::combine("hessian", &parts));

    put("mean_abs_gaussian", check_mean_abs(&SchemeKind::XavierGaussian, n.mean_abs_draws, seed_for(seed, 10))?);
    put("mean_abs_uniform", check_mean_abs(&SchemeKind::XavierUniform, n.mean_abs_draws, seed_for(seed, 11))?);

    put("phase_structure", phase_sweep(n.phase_instances, seed_for(seed, 12))?);

    let pass = reports.values().all(|r| r.pass);
    Ok(SuiteReport { seed, pass, reports })
}

/// Sign-structure check over random start points, `k` cycling through `3..=7`,
/// `y = −1`, `η = 10⁻³`, threshold 0.1.
pub fn phase_sweep(instances: usize, seed: u64) -> Result<LemmaReport> {
    let consts = AssumptionConstants::default();
    let plan = StepPlan::new(1e-3, 10_000_000, 0.1)?;
    let mut rng = TrialRng::new(seed, 0);
    let mut parts = Vec::with_capacity(instances);
    for i in 0..instances {
        let k = 3 + i % 5;
        let init = sample_phase_init(k, -1.0, &consts, &mut rng)?;
        match check_phase_structure(&init, -1.0, &plan, &consts)? {
            PhaseCheck::Checked { report, .. } => parts.push(report),
            PhaseCheck::NotApplicable { reason } => {
                return Err(Error::InvalidState(format!("sampled start point rejected: {reason}")))
            }
        }
    }
    Ok(LemmaReport::combine("phase_structure", &parts))
}
