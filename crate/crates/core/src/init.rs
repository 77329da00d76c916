//! Random initialization schemes and the deterministic initialization
//! conditions they are meant to satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Mat, MatrixState};
use crate::rng::TrialRng;
use crate::scalar::ScalarState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRule {
    /// Perturbation variance `1/(dk)`.
    OneOverDk,
    /// Perturbation variance `1/(dk)²`.
    OneOverDkSquared,
}

impl VarianceRule {
    pub fn variance(self, d: usize, k: usize) -> f64 {
        let dk = (d * k) as f64;
        match self {
            VarianceRule::OneOverDk => 1.0 / dk,
            VarianceRule::OneOverDkSquared => 1.0 / (dk * dk),
        }
    }
}

/// Distribution family of an initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeKind {
    /// i.i.d. `N(0, 1/d)` entries.
    XavierGaussian,
    /// i.i.d. uniform entries on `[−√(3/d), √(3/d)]`.
    XavierUniform,
    /// `Wᵢ = I + M`, `M` with i.i.d. zero-mean Gaussian entries.
    NearIdentity { variance: VarianceRule },
    /// `wᵢ` uniform on `[1 − k^{−c1}, 1 + k^{−c1}]`.
    ScalarNearOne {
        #[serde(default = "default_c1")]
        c1: f64,
    },
    /// `wᵢ` uniform on `{−1, +1}`.
    PlusMinusOne,
    /// Fixed values: `k` scalars, or `k·d·d` row-major matrix entries.
    Explicit { values: Vec<f64> },
}

fn default_c1() -> f64 {
    1.0
}

impl SchemeKind {
    /// Stable identifier used in CSV files and figure legends.
    pub fn id(&self) -> String {
        match self {
            SchemeKind::XavierGaussian => "xavier_gaussian".into(),
            SchemeKind::XavierUniform => "xavier_uniform".into(),
            SchemeKind::NearIdentity { variance: VarianceRule::OneOverDk } => "near_identity_dk".into(),
            SchemeKind::NearIdentity { variance: VarianceRule::OneOverDkSquared } => "near_identity_dk2".into(),
            SchemeKind::ScalarNearOne { c1 } if *c1 == 1.0 => "scalar_near_one".into(),
            SchemeKind::ScalarNearOne { c1 } => format!("scalar_near_one_c{c1}"),
            SchemeKind::PlusMinusOne => "plus_minus_one".into(),
            SchemeKind::Explicit { .. } => "explicit".into(),
        }
    }

    pub fn supports_scalar(&self) -> bool {
        !matches!(self, SchemeKind::NearIdentity { .. })
    }

    pub fn supports_matrix(&self) -> bool {
        !matches!(self, SchemeKind::ScalarNearOne { .. } | SchemeKind::PlusMinusOne)
    }
}

/// A scheme bound to a position in the random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct InitScheme {
    pub kind: SchemeKind,
    pub seed: u64,
    pub trial_index: u64,
}

impl InitScheme {
    pub fn new(kind: SchemeKind, seed: u64, trial_index: u64) -> Self {
        Self { kind, seed, trial_index }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Self::new(SchemeKind::Explicit { values }, 0, 0)
    }

    fn rng(&self) -> TrialRng {
        TrialRng::new(self.seed, self.trial_index)
    }
}

/// Draws `w(1) ∈ ℝᵏ`.
pub fn draw_scalar_init(scheme: &InitScheme, k: usize) -> Result<ScalarState> {
    let mut rng = scheme.rng();
    ScalarState::new(sample_scalar(&scheme.kind, k, &mut rng)?)
}

/// Draws `k` scalar coordinates from `kind` using `rng`.
pub fn sample_scalar(kind: &SchemeKind, k: usize, rng: &mut TrialRng) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidState("k must be >= 1".into()));
    }
    Ok(match kind {
        SchemeKind::XavierGaussian => (0..k).map(|_| rng.normal()).collect(),
        SchemeKind::XavierUniform => {
            let r = 3f64.sqrt();
            (0..k).map(|_| rng.uniform_range(-r, r)).collect()
        }
        SchemeKind::ScalarNearOne { c1 } => {
            let radius = (k as f64).powf(-c1);
            (0..k).map(|_| rng.uniform_range(1.0 - radius, 1.0 + radius)).collect()
        }
        SchemeKind::PlusMinusOne => (0..k).map(|_| rng.sign()).collect(),
        SchemeKind::Explicit { values } => {
            if values.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "explicit init has {} values but k = {k}",
                    values.len()
                )));
            }
            values.clone()
        }
        SchemeKind::NearIdentity { .. } => {
            return Err(Error::IncompatibleScheme { scheme: kind.id(), target: "scalar" })
        }
    })
}

/// Draws `W₁(1), …, W_k(1)`, layer by layer, each row-major.
pub fn draw_matrix_init(scheme: &InitScheme, k: usize, d: usize) -> Result<MatrixState> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidState("k and d must be >= 1".into()));
    }
    let mut rng = scheme.rng();
    let n = d * d;
    let mut layer = |f: &mut dyn FnMut(&mut TrialRng, usize) -> f64| -> Vec<Mat> {
        (0..k)
            .map(|_| {
                let data = (0..n).map(|e| f(&mut rng, e)).collect();
                Mat::from_row_major(d, data).expect("sized")
            })
            .collect()
    };
    let mats = match &scheme.kind {
        SchemeKind::XavierGaussian => {
            let sd = (1.0 / d as f64).sqrt();
            layer(&mut |r, _| sd * r.normal())
        }
        SchemeKind::XavierUniform => {
            let r = (3.0 / d as f64).sqrt();
            layer(&mut |g, _| g.uniform_range(-r, r))
        }
        SchemeKind::NearIdentity { variance } => {
            let sd = variance.variance(d, k).sqrt();
            layer(&mut |r, e| {
                let noise = sd * r.normal();
                if e / d == e % d {
                    1.0 + noise
                } else {
                    noise
                }
            })
        }
        SchemeKind::Explicit { values } => {
            if values.len() != k * n {
                return Err(Error::DimensionMismatch(format!(
                    "explicit init has {} values but k·d·d = {}",
                    values.len(),
                    k * n
                )));
            }
            values.chunks(n).map(|c| Mat::from_row_major(d, c.to_vec()).expect("sized")).collect()
        }
        SchemeKind::ScalarNearOne { .. } | SchemeKind::PlusMinusOne => {
            return Err(Error::IncompatibleScheme { scheme: scheme.kind.id(), target: "matrix" })
        }
    };
    MatrixState::new(mats)
}

/// Caller-supplied constants for the initialization conditions. The defaults
/// are concrete choices; the conditions themselves only ask for some
/// constants independent of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// Zero-mean/unit-variance scheme: `Pr(|w| ≤ a) ≤ c1·a`.
    pub a2_c1: f64,
    /// Zero-mean/unit-variance scheme: `E|w| ≤ 1 − c2`.
    pub a2_c2: f64,
    /// Near-one point: `max |wⱼ − 1| ≤ k^{−c1}`.
    pub a3_c1: f64,
    /// Near-one point: `c2 ≤ ∏ wᵢ`.
    pub a3_c2: f64,
    /// Near-one point: `∏ wᵢ ≤ c3`.
    pub a3_c3: f64,
    /// Negative-target point: `|wᵢ| ≤ c2`.
    pub a4_c2: f64,
    /// Negative-target point: gaps `≥ k^{−c4}` and leave-two-out products `≤ c4`.
    pub a4_c4: f64,
}

impl Default for AssumptionConstants {
    fn default() -> Self {
        Self { a2_c1: 1.0, a2_c2: 0.1, a3_c1: 1.0, a3_c2: 0.25, a3_c3: std::f64::consts::E, a4_c2: 2.0, a4_c4: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// i.i.d. zero-mean unit-variance draws with small-ball and `E|w|` bounds.
    A2,
    /// Deterministic near-one initialization.
    A3,
    /// Negative target with distinct, bounded coordinates.
    A4,
}

pub enum AssumptionSubject<'a> {
    Distribution(&'a SchemeKind),
    NearOne(&'a ScalarState),
    NegativeTarget { state: &'a ScalarState, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseCheck {
    pub clause: String,
    pub measured: f64,
    pub constant: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption: Assumption,
    pub clauses: Vec<ClauseCheck>,
    pub pass: bool,
}

impl AssumptionReport {
    fn new(assumption: Assumption, clauses: Vec<ClauseCheck>) -> Self {
        let pass = clauses.iter().all(|c| c.pass);
        Self { assumption, clauses, pass }
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseCheck> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

fn clause(name: &str, measured: f64, constant: f64, pass: bool) -> ClauseCheck {
    ClauseCheck { clause: name.into(), measured, constant, pass }
}

/// Exact moments of a scalar scheme at `d = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub mean_abs: f64,
    /// `sup_{a>0} Pr(|w| ≤ a) / a`
    pub small_ball: f64,
}

fn discrete_moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mut small_ball = 0.0f64;
    for (i, &a) in abs.iter().enumerate() {
        // mass at or below `a` includes ties after position i
        let count = abs.iter().skip(i).take_while(|&&b| b == a).count() + i;
        let ratio = if a == 0.0 { f64::INFINITY } else { count as f64 / n / a };
        small_ball = small_ball.max(ratio);
    }
    Moments { mean, variance, mean_abs, small_ball }
}

/// Analytic moments of a scalar scheme, or `None` for matrix-only schemes.
pub fn scalar_moments(kind: &SchemeKind) -> Option<Moments> {
    use std::f64::consts::PI;
    match kind {
        SchemeKind::XavierGaussian => Some(Moments {
            mean: 0.0,
            variance: 1.0,
            mean_abs: (2.0 / PI).sqrt(),
            small_ball: (2.0 / PI).sqrt(),
        }),
        SchemeKind::XavierUniform => Some(Moments {
            mean: 0.0,
            variance: 1.0,
            mean_abs: 3f64.sqrt() / 2.0,
            small_ball: 1.0 / 3f64.sqrt(),
        }),
        SchemeKind::PlusMinusOne => Some(discrete_moments(&[-1.0, 1.0])),
        SchemeKind::Explicit { values } if !values.is_empty() => Some(discrete_moments(values)),
        // The uniform law on [1−r, 1+r] depends on k; report its k → ∞ limit, a point mass at 1.
        SchemeKind::ScalarNearOne { .. } => Some(discrete_moments(&[1.0])),
        _ => None,
    }
}

pub fn check_assumption(subject: AssumptionSubject<'_>, c: &AssumptionConstants) -> AssumptionReport {
    match subject {
        AssumptionSubject::Distribution(kind) => {
            let Some(m) = scalar_moments(kind) else {
                return AssumptionReport::new(
                    Assumption::A2,
                    vec![clause("scalar_distribution", 0.0, 1.0, false)],
                );
            };
            AssumptionReport::new(
                Assumption::A2,
                vec![
                    clause("zero_mean", m.mean, 0.0, m.mean.abs() <= 1e-12),
                    clause("unit_variance", m.variance, 1.0, (m.variance - 1.0).abs() <= 1e-12),
                    clause("small_ball", m.small_ball, c.a2_c1, m.small_ball <= c.a2_c1),
                    clause("mean_abs", m.mean_abs, 1.0 - c.a2_c2, m.mean_abs <= 1.0 - c.a2_c2),
                ],
            )
        }
        AssumptionSubject::NearOne(state) => {
            let k = state.k() as f64;
            let radius = k.powf(-c.a3_c1);
            let dev = state.w.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
            let p = state.product();
            AssumptionReport::new(
                Assumption::A3,
                vec![
                    clause("max_deviation_from_one", dev, radius, dev <= radius),
                    clause("product_lower", p, c.a3_c2, p >= c.a3_c2),
                    clause("product_upper", p, c.a3_c3, p <= c.a3_c3),
                ],
            )
        }
        AssumptionSubject::NegativeTarget { state, y } => {
            let w = &state.w;
            let k = w.len();
            let max_abs = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let p = state.product();
            let gap = min_abs_gap(w);
            let gap_floor = (k as f64).powf(-c.a4_c4);
            let l2o = max_leave_two_out(w);
            AssumptionReport::new(
                Assumption::A4,
                vec![
                    clause("negative_target", y, 0.0, y < 0.0),
                    clause("bounded_coordinates", max_abs, c.a4_c2, max_abs <= c.a4_c2),
                    clause("product_above_target", p, y, p > y),
                    clause("min_abs_gap", gap, gap_floor, gap >= gap_floor),
                    clause("max_leave_two_out_product", l2o, c.a4_c4, l2o <= c.a4_c4),
                ],
            )
        }
    }
}

/// `min_{j≠j′} ||wⱼ| − |w_{j′}||`, infinite when `k = 1`.
pub fn min_abs_gap(w: &[f64]) -> f64 {
    let mut abs: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min)
}

/// `max_{j≠j′} |∏_{i∉{j,j′}} wᵢ|`; 0 when `k = 1` (no pairs).
pub fn max_leave_two_out(w: &[f64]) -> f64 {
    let k = w.len();
    let mut best = 0.0f64;
    for j in 0..k {
        for jp in j + 1..k {
            let prod = w
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j && i != jp)
                .fold(1.0, |acc, (_, &x)| acc * x);
            best = best.max(prod.abs());
        }
    }
    best
}
