//! Square-matrix layers: `F(W₁,…,W_k) = ½‖W₁W₂⋯W_k − Y‖²_F`.
//!
//! Gradient w.r.t. `Wⱼ` is `(Lⱼᵀ R) Rⱼᵀ` with `R = ∏Wᵢ − Y`,
//! `Lⱼ = W₁⋯W_{j−1}` and `Rⱼ = W_{j+1}⋯W_k`. Prefixes and suffixes are cached,
//! so one gradient costs about `4k` matrix products.

use crate::error::{Error, Result};
use crate::trajectory::{Recorder, RunOutcome, RunStatus, Snapshot, StepPlan};

/// Dense row-major `d×d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    d: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![0.0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = s;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d);
        for (i, &x) in diag.iter().enumerate() {
            m.data[i * d + i] = x;
        }
        m
    }

    pub fn from_row_major(d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                data.len()
            )));
        }
        Ok(Self { d, data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.d);
        transpose_into(self, &mut out);
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let mut out = Mat::zeros(self.d);
        mul_into(self, other, &mut out);
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

fn transpose_into(a: &Mat, out: &mut Mat) {
    let d = a.d;
    for i in 0..d {
        for j in 0..d {
            out.data[j * d + i] = a.data[i * d + j];
        }
    }
}

const TILE_ROWS: usize = 4;
const TILE_COLS: usize = 8;

/// `out = a · b`.
///
/// Every output entry is `a[i,0]·b[0,j] + a[i,1]·b[1,j] + ⋯` accumulated in
/// index order, starting from the first term rather than from zero (so 1×1
/// products are a single rounding). Register tiles only change which entries
/// are computed together, never the per-entry operation order.
fn mul_into(a: &Mat, b: &Mat, out: &mut Mat) {
    let d = a.d;
    let (a, b, o) = (&a.data[..], &b.data[..], &mut out.data[..]);
    let full_rows = d - d % TILE_ROWS;
    let full_cols = d - d % TILE_COLS;
    for i0 in (0..full_rows).step_by(TILE_ROWS) {
        for j0 in (0..full_cols).step_by(TILE_COLS) {
            let mut acc = [[0.0f64; TILE_COLS]; TILE_ROWS];
            let b0: &[f64; TILE_COLS] = b[j0..j0 + TILE_COLS].try_into().unwrap();
            for (r, row) in acc.iter_mut().enumerate() {
                let x = a[(i0 + r) * d];
                for c in 0..TILE_COLS {
                    row[c] = x * b0[c];
                }
            }
            for l in 1..d {
                let bl: &[f64; TILE_COLS] = b[l * d + j0..l * d + j0 + TILE_COLS].try_into().unwrap();
                for (r, row) in acc.iter_mut().enumerate() {
                    let x = a[(i0 + r) * d + l];
                    for c in 0..TILE_COLS {
                        row[c] += x * bl[c];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                o[(i0 + r) * d + j0..(i0 + r) * d + j0 + TILE_COLS].copy_from_slice(row);
            }
        }
        for i in i0..i0 + TILE_ROWS {
            for j in full_cols..d {
                o[i * d + j] = dot_column(a, b, d, i, j);
            }
        }
    }
    for i in full_rows..d {
        for j in 0..d {
            o[i * d + j] = dot_column(a, b, d, i, j);
        }
    }
}

#[inline]
fn dot_column(a: &[f64], b: &[f64], d: usize, i: usize, j: usize) -> f64 {
    let row = &a[i * d..(i + 1) * d];
    let mut s = row[0] * b[j];
    for l in 1..d {
        s += row[l] * b[l * d + j];
    }
    s
}

/// `out = aᵀ · b`, via an explicit transpose into `scratch`.
fn mul_tn_into(a: &Mat, b: &Mat, scratch: &mut Mat, out: &mut Mat) {
    transpose_into(a, scratch);
    mul_into(scratch, b, out);
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixState {
    pub mats: Vec<Mat>,
    pub t: u64,
}

impl MatrixState {
    pub fn new(mats: Vec<Mat>) -> Result<Self> {
        let state = Self { mats, t: 0 };
        state.validate()?;
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.mats.len()
    }

    pub fn d(&self) -> usize {
        self.mats.first().map_or(0, Mat::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.mats.first() else {
            return Err(Error::InvalidState("matrix state needs k >= 1 layers".into()));
        };
        let d = first.dim();
        if d == 0 {
            return Err(Error::InvalidState("matrix dimension must be >= 1".into()));
        }
        for (i, m) in self.mats.iter().enumerate() {
            if m.dim() != d || m.data.len() != d * d {
                return Err(Error::DimensionMismatch(format!("layer {} is not {d}x{d}", i + 1)));
            }
            if !m.is_finite() {
                return Err(Error::InvalidState(format!("layer {} has non-finite entries", i + 1)));
            }
        }
        Ok(())
    }

    /// `W₁W₂⋯W_k`, left to right.
    pub fn product(&self) -> Mat {
        let mut acc = self.mats[0].clone();
        for m in &self.mats[1..] {
            acc = acc.matmul(m);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTarget {
    pub y: Mat,
}

impl MatrixTarget {
    pub fn minus_identity(d: usize) -> Self {
        Self { y: Mat::scaled_identity(d, -1.0) }
    }

    fn check(&self, state: &MatrixState) -> Result<()> {
        if self.y.dim() != state.d() {
            return Err(Error::DimensionMismatch(format!(
                "target is {0}x{0} but layers are {1}x{1}",
                self.y.dim(),
                state.d()
            )));
        }
        Ok(())
    }
}

/// Buffers for the matrix hot loop.
#[derive(Debug, Clone)]
pub struct MatrixWorkspace {
    d: usize,
    /// `prefix[j] = W₁⋯W_{j+1}` (0-based `j`), so `prefix[k−1]` is the full product.
    prefix: Vec<Mat>,
    /// `suffix_t[j] = (W_{j+2}⋯W_k)ᵀ`; the last entry is unused (identity).
    suffix_t: Vec<Mat>,
    suffix: Mat,
    scratch: Mat,
    tmp: Mat,
    residual: Mat,
    grads: Vec<Mat>,
}

impl MatrixWorkspace {
    pub fn new(k: usize, d: usize) -> Self {
        Self {
            d,
            prefix: vec![Mat::zeros(d); k],
            suffix_t: vec![Mat::zeros(d); k],
            suffix: Mat::zeros(d),
            scratch: Mat::zeros(d),
            tmp: Mat::zeros(d),
            residual: Mat::zeros(d),
            grads: vec![Mat::zeros(d); k],
        }
    }

    pub fn gradients(&self) -> &[Mat] {
        &self.grads
    }

    pub fn product(&self) -> &Mat {
        self.prefix.last().expect("k >= 1")
    }

    /// Fills the gradient buffers and returns the objective.
    pub fn evaluate(&mut self, mats: &[Mat], target: &MatrixTarget) -> f64 {
        let k = mats.len();
        let d = target.y.dim();
        if self.grads.len() != k || self.d != d {
            *self = Self::new(k, d);
        }

        self.prefix[0].data.copy_from_slice(&mats[0].data);
        for j in 1..k {
            let (done, rest) = self.prefix.split_at_mut(j);
            mul_into(&done[j - 1], &mats[j], &mut rest[0]);
        }

        // Right-to-left suffix products W_{j+1}(W_{j+2}(⋯W_k)), stored transposed.
        if k >= 2 {
            self.suffix.data.copy_from_slice(&mats[k - 1].data);
            transpose_into(&self.suffix, &mut self.suffix_t[k - 2]);
            for j in (0..k.saturating_sub(2)).rev() {
                mul_into(&mats[j + 1], &self.suffix, &mut self.scratch);
                std::mem::swap(&mut self.suffix, &mut self.scratch);
                transpose_into(&self.suffix, &mut self.suffix_t[j]);
            }
        }

        let p = &self.prefix[k - 1];
        for ((r, &x), &y) in self.residual.data.iter_mut().zip(&p.data).zip(&target.y.data) {
            *r = x - y;
        }
        let sq: f64 = self.residual.data.iter().map(|r| r * r).sum();

        for j in 0..k {
            let grad = &mut self.grads[j];
            match (j == 0, j == k - 1) {
                (true, true) => grad.data.copy_from_slice(&self.residual.data),
                (true, false) => mul_into(&self.residual, &self.suffix_t[j], grad),
                (false, true) => mul_tn_into(&self.prefix[j - 1], &self.residual, &mut self.scratch, grad),
                (false, false) => {
                    mul_tn_into(&self.prefix[j - 1], &self.residual, &mut self.scratch, &mut self.tmp);
                    mul_into(&self.tmp, &self.suffix_t[j], grad);
                }
            }
        }
        0.5 * sq
    }
}

/// `½‖∏Wᵢ − Y‖²_F`.
pub fn matrix_objective(state: &MatrixState, target: &MatrixTarget) -> Result<f64> {
    target.check(state)?;
    let p = state.product();
    let sq: f64 = p.data.iter().zip(&target.y.data).map(|(x, y)| (x - y) * (x - y)).sum();
    let value = 0.5 * sq;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged { iteration: state.t })
    }
}

pub fn matrix_gradient(state: &MatrixState, target: &MatrixTarget) -> Result<Vec<Mat>> {
    target.check(state)?;
    let mut ws = MatrixWorkspace::new(state.k(), state.d());
    let value = ws.evaluate(&state.mats, target);
    if !value.is_finite() || ws.grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged { iteration: state.t });
    }
    Ok(ws.grads)
}

fn apply_step(mats: &mut [Mat], grads: &[Mat], eta: f64) -> bool {
    let mut finite = true;
    for (m, g) in mats.iter_mut().zip(grads) {
        for (x, g) in m.data.iter_mut().zip(&g.data) {
            *x -= eta * g;
            finite &= x.is_finite();
        }
    }
    finite
}

/// One simultaneous step of all `k` layers.
pub fn matrix_step(state: &MatrixState, target: &MatrixTarget, eta: f64) -> Result<MatrixState> {
    let grads = matrix_gradient(state, target)?;
    let mut mats = state.mats.clone();
    if !apply_step(&mut mats, &grads, eta) {
        return Err(Error::Diverged { iteration: state.t + 1 });
    }
    Ok(MatrixState { mats, t: state.t + 1 })
}

fn layer_traces(mats: &[Mat]) -> Vec<f64> {
    mats.iter().map(|m| m.trace() / m.dim() as f64).collect()
}

/// Matrix analogue of [`crate::scalar::scalar_run`]. Snapshots carry
/// `trace(∏Wᵢ)/d` as the product and `trace(Wⱼ)/d` per layer.
pub fn matrix_run<R: Recorder + ?Sized>(
    init: &MatrixState,
    target: &MatrixTarget,
    plan: &StepPlan,
    recorder: &mut R,
) -> Result<RunOutcome<MatrixState>> {
    plan.validate()?;
    init.validate()?;
    target.check(init)?;
    let d = init.d();
    let mut ws = MatrixWorkspace::new(init.k(), d);
    let mut mats = init.mats.clone();
    let mut t = init.t;
    loop {
        let objective = ws.evaluate(&mats, target);
        let status = if !objective.is_finite() {
            Some(RunStatus::Diverged)
        } else if objective <= plan.stop_threshold {
            Some(RunStatus::Converged)
        } else if t >= plan.max_iters {
            Some(RunStatus::MaxIters)
        } else {
            None
        };
        let snap = |t, ws: &MatrixWorkspace, mats: &[Mat]| Snapshot {
            t,
            objective,
            product: ws.product().trace() / d as f64,
            coords: layer_traces(mats),
        };
        if let Some(status) = status {
            recorder.record(snap(t, &ws, &mats));
            return Ok(RunOutcome {
                status,
                iterations: t,
                final_objective: objective,
                final_state: MatrixState { mats, t },
            });
        }
        if recorder.wants(t) {
            recorder.record(snap(t, &ws, &mats));
        }
        let finite = apply_step(&mut mats, &ws.grads, plan.eta);
        t += 1;
        if !finite {
            recorder.record(Snapshot {
                t,
                objective: f64::NAN,
                product: f64::NAN,
                coords: layer_traces(&mats),
            });
            return Ok(RunOutcome {
                status: RunStatus::Diverged,
                iterations: t,
                final_objective: f64::NAN,
                final_state: MatrixState { mats, t },
            });
        }
    }
}
