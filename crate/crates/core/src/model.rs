//! The full network: sequence evolution, gated recurrent reader and Q-head.
//!
//! With `S` the selected set (`c_v = 1` iff `v ∈ S`), all states start at zero
//! and for `t = 0..T`
//!
//! ```text
//! x_v(t+1) = relu(W_G1 Σ_{u∈Γ(v)} x_u(t) + w_G2 c_v + w_G3)
//! ```
//!
//! The reader consumes the sequence `x(0..T)` one step behind it:
//!
//! ```text
//! i_v(t+1) = relu(W4 Σ_{u∈Γ(v)} x_u(t) + w5 c_v + b6)
//! f(t+1)   = sigmoid(W7 Σ_{u∈V} x_u(t) + b8)
//! y_v(t+1) = f(t+1) ⊙ i_v(t+1) + (1 − f(t+1)) ⊙ y_v(t),     y_v(0) = 0
//! ```
//!
//! and the head scores every vertex as
//!
//! ```text
//! Q(v) = w_Q1ᵀ relu(W_Q2 Σ_u y_u(T)) + w_Q3ᵀ relu(W_Q4 y_v(T)).
//! ```
//!
//! Gradients are accumulated by hand in reverse through all three blocks.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::dynamics::{neighbor_sums, EvolutionParams, Trajectory};
use crate::graphs::Graph;
use crate::seeding;
use crate::tensor::{axpy, dot, relu, sigmoid, Matrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in `{0}`")]
    NonFinite(&'static str),
    #[error("sequence length must be at least 1")]
    ZeroSteps,
    #[error("action {action} is not a vertex of a graph with {n} vertices")]
    BadAction { action: usize, n: usize },
    #[error("unsupported checkpoint version `{0}` (expected {CHECKPOINT_VERSION})")]
    CheckpointVersion(String),
    #[error("checkpoint line {line}: {reason}")]
    CheckpointParse { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// The twelve trainable tensors, in flat-vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tensor {
    WG1,
    WG2,
    WG3,
    W4,
    W5,
    B6,
    W7,
    B8,
    WQ2,
    WQ1,
    WQ4,
    WQ3,
}

impl Tensor {
    pub const ALL: [Tensor; 12] = [
        Tensor::WG1,
        Tensor::WG2,
        Tensor::WG3,
        Tensor::W4,
        Tensor::W5,
        Tensor::B6,
        Tensor::W7,
        Tensor::B8,
        Tensor::WQ2,
        Tensor::WQ1,
        Tensor::WQ4,
        Tensor::WQ3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::WG1 => "W_G1",
            Tensor::WG2 => "w_G2",
            Tensor::WG3 => "w_G3",
            Tensor::W4 => "W4",
            Tensor::W5 => "w5",
            Tensor::B6 => "b6",
            Tensor::W7 => "W7",
            Tensor::B8 => "b8",
            Tensor::WQ2 => "W_Q2",
            Tensor::WQ1 => "w_Q1",
            Tensor::WQ4 => "W_Q4",
            Tensor::WQ3 => "w_Q3",
        }
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, Tensor::WG1 | Tensor::W4 | Tensor::W7 | Tensor::WQ2 | Tensor::WQ4)
    }

    pub fn shape(self, d: usize) -> (usize, usize) {
        if self.is_matrix() {
            (d, d)
        } else {
            (d, 1)
        }
    }
}

/// All trainable parameters, stored as one flat vector (matrices row-major,
/// tensors in [`Tensor::ALL`] order). Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    d: usize,
    flat: Vec<f64>,
}

pub fn param_count(d: usize) -> usize {
    5 * d * d + 7 * d
}

impl ParamSet {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "embedding dimension must be positive");
        Self { d, flat: vec![0.0; param_count(d)] }
    }

    /// Entries i.i.d. uniform on `[-1/√d, 1/√d]`.
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = seeding::rng(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut p = Self::zeros(d);
        p.flat.iter_mut().for_each(|x| *x = rng.random_range(-bound..=bound));
        p
    }

    pub fn from_flat(d: usize, flat: Vec<f64>) -> Result<Self, ModelError> {
        if d == 0 || flat.len() != param_count(d) {
            return Err(ModelError::Shape(format!("flat vector of length {} does not fit d = {d}", flat.len())));
        }
        Ok(Self { d, flat })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn as_flat(&self) -> &[f64] {
        &self.flat
    }

    #[inline]
    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn range(&self, t: Tensor) -> Range<usize> {
        let (d, dd) = (self.d, self.d * self.d);
        let mut start = 0;
        for cur in Tensor::ALL {
            let len = if cur.is_matrix() { dd } else { d };
            if cur == t {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    #[inline]
    pub fn get(&self, t: Tensor) -> &[f64] {
        let r = self.range(t);
        &self.flat[r]
    }

    #[inline]
    pub fn get_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.range(t);
        &mut self.flat[r]
    }

    pub fn matrix(&self, t: Tensor) -> Matrix {
        let (r, c) = t.shape(self.d);
        Matrix::from_vec(r, c, self.get(t).to_vec())
    }

    pub fn first_non_finite(&self) -> Option<Tensor> {
        Tensor::ALL.into_iter().find(|&t| !self.get(t).iter().all(|x| x.is_finite()))
    }

    /// The evolution block as stand-alone dynamics parameters (noise-free).
    pub fn evolution(&self) -> EvolutionParams {
        EvolutionParams {
            w1: self.matrix(Tensor::WG1),
            b1: self.get(Tensor::WG3).to_vec(),
            w2: self.get(Tensor::WG2).to_vec(),
            sigma2: 0.0,
        }
    }
}

/// `y = M x` for a row-major `d×d` slice.
#[inline]
fn mat_vec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr = dot(&m[r * d..(r + 1) * d], x);
    }
}

/// `y += Mᵀ x` for a row-major `d×d` slice.
#[inline]
fn mat_t_vec_acc(m: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (r, &xr) in x.iter().enumerate() {
        if xr != 0.0 {
            axpy(xr, &m[r * d..(r + 1) * d], y);
        }
    }
}

/// `M += a bᵀ` for a row-major `d×d` slice.
#[inline]
fn outer_acc(m: &mut [f64], a: &[f64], b: &[f64]) {
    let d = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar != 0.0 {
            axpy(ar, b, &mut m[r * d..(r + 1) * d]);
        }
    }
}

/// Reader states for `t = 0..=T` (`i` and `f` are unused at `t = 0`).
///
/// The gate is driven only by the graph-wide sum, so it is the same for
/// every vertex and is stored once per step.
#[derive(Clone, Debug)]
pub struct ReaderState {
    pub y: Vec<Matrix>,
    pub i: Vec<Matrix>,
    pub f: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct QValues {
    pub values: Vec<f64>,
    /// The vertex-independent summand `w_Q1ᵀ relu(W_Q2 Σ_u y_u(T))`.
    pub shared: f64,
}

/// One forward evaluation with everything backward needs.
#[derive(Clone, Debug)]
pub struct Forward {
    pub trajectory: Trajectory,
    pub reader: ReaderState,
    pub q: QValues,
    /// `Σ_{u∈Γ(v)} x_u(t)` for `t = 0..=T`.
    sums: Vec<Matrix>,
    /// `Σ_u x_u(t)` for `t = 0..=T`.
    totals: Vec<Vec<f64>>,
    /// `Σ_u y_u(T)`.
    y_total: Vec<f64>,
    head_global: Vec<f64>,
    head_local: Matrix,
}

impl Forward {
    pub fn steps(&self) -> usize {
        self.trajectory.steps()
    }

    /// Sign pattern of every relu pre-activation, hashed. Two evaluations with
    /// the same signature lie in the same linear piece of the network.
    pub fn activation_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut feed = |xs: &[f64]| xs.iter().for_each(|&x| (x > 0.0).hash(&mut h));
        self.trajectory.states.iter().for_each(|m| feed(m.as_slice()));
        self.reader.i.iter().for_each(|m| feed(m.as_slice()));
        feed(&self.head_global);
        feed(self.head_local.as_slice());
        h.finish()
    }
}

fn check_inputs(g: &Graph, flags: &[bool], p: &ParamSet, steps: usize) -> Result<(), ModelError> {
    if steps == 0 {
        return Err(ModelError::ZeroSteps);
    }
    if flags.len() != g.n() {
        return Err(ModelError::Shape(format!("{} flags for {} vertices", flags.len(), g.n())));
    }
    if let Some(t) = p.first_non_finite() {
        return Err(ModelError::NonFinite(t.name()));
    }
    Ok(())
}

pub fn forward(g: &Graph, flags: &[bool], p: &ParamSet, steps: usize) -> Result<Forward, ModelError> {
    check_inputs(g, flags, p, steps)?;
    let (n, d) = (g.n(), p.dim());
    let (w_g1, w_g2, w_g3) = (p.get(Tensor::WG1), p.get(Tensor::WG2), p.get(Tensor::WG3));

    let mut states = Vec::with_capacity(steps + 1);
    let mut sums = Vec::with_capacity(steps + 1);
    states.push(Matrix::zeros(n, d));
    sums.push(Matrix::zeros(n, d));
    for t in 0..steps {
        let mut next = Matrix::zeros(n, d);
        for v in 0..n {
            let out = next.row_mut(v);
            mat_vec(w_g1, sums[t].row(v), out);
            axpy(1.0, w_g3, out);
            if flags[v] {
                axpy(1.0, w_g2, out);
            }
            out.iter_mut().for_each(|x| *x = relu(*x));
        }
        sums.push(neighbor_sums(g, &next));
        states.push(next);
    }
    let totals: Vec<Vec<f64>> = states.iter().map(|s| s.column_sums()).collect();

    let (w4, w5, b6) = (p.get(Tensor::W4), p.get(Tensor::W5), p.get(Tensor::B6));
    let (w7, b8) = (p.get(Tensor::W7), p.get(Tensor::B8));
    let mut ys = vec![Matrix::zeros(n, d)];
    let mut is = vec![Matrix::zeros(n, d)];
    let mut fs = vec![vec![0.0; d]];
    for t in 1..=steps {
        let mut gate = vec![0.0; d];
        mat_vec(w7, &totals[t - 1], &mut gate);
        gate.iter_mut().zip(b8).for_each(|(f, b)| *f = sigmoid(*f + b));

        let mut input = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        for v in 0..n {
            let iv = input.row_mut(v);
            mat_vec(w4, sums[t - 1].row(v), iv);
            axpy(1.0, b6, iv);
            if flags[v] {
                axpy(1.0, w5, iv);
            }
            iv.iter_mut().for_each(|x| *x = relu(*x));
            let prev = ys[t - 1].row(v);
            let yv = y.row_mut(v);
            for k in 0..d {
                yv[k] = gate[k] * iv[k] + (1.0 - gate[k]) * prev[k];
            }
        }
        ys.push(y);
        is.push(input);
        fs.push(gate);
    }

    let y_final = &ys[steps];
    let y_total = y_final.column_sums();
    let mut head_global = vec![0.0; d];
    mat_vec(p.get(Tensor::WQ2), &y_total, &mut head_global);
    head_global.iter_mut().for_each(|x| *x = relu(*x));
    let shared = dot(p.get(Tensor::WQ1), &head_global);

    let (w_q3, w_q4) = (p.get(Tensor::WQ3), p.get(Tensor::WQ4));
    let mut head_local = Matrix::zeros(n, d);
    let mut values = Vec::with_capacity(n);
    for v in 0..n {
        let h = head_local.row_mut(v);
        mat_vec(w_q4, y_final.row(v), h);
        h.iter_mut().for_each(|x| *x = relu(*x));
        values.push(shared + dot(w_q3, h));
    }
    if !values.iter().all(|q| q.is_finite()) {
        return Err(ModelError::NonFinite("Q"));
    }

    Ok(Forward {
        trajectory: Trajectory { states },
        reader: ReaderState { y: ys, i: is, f: fs },
        q: QValues { values, shared },
        sums,
        totals,
        y_total,
        head_global,
        head_local,
    })
}

/// Q-values only.
pub fn q_values(g: &Graph, flags: &[bool], p: &ParamSet, steps: usize) -> Result<Vec<f64>, ModelError> {
    Ok(forward(g, flags, p, steps)?.q.values)
}

/// Loss `(Q(action) − target)²` and its exact gradient with respect to every
/// parameter (relu′(0) = 0).
pub fn backward(
    g: &Graph,
    flags: &[bool],
    p: &ParamSet,
    steps: usize,
    action: usize,
    target: f64,
) -> Result<(f64, ParamSet), ModelError> {
    let fwd = forward(g, flags, p, steps)?;
    let mut grads = ParamSet::zeros(p.dim());
    let loss = backward_from(g, flags, p, &fwd, action, target, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// Accumulates `scale · ∂loss/∂θ` into `grads` using a cached forward pass and
/// returns the unscaled loss.
#[allow(clippy::too_many_arguments)]
pub fn backward_from(
    g: &Graph,
    flags: &[bool],
    p: &ParamSet,
    fwd: &Forward,
    action: usize,
    target: f64,
    scale: f64,
    grads: &mut ParamSet,
) -> Result<f64, ModelError> {
    let (n, d, steps) = (g.n(), p.dim(), fwd.steps());
    if action >= n {
        return Err(ModelError::BadAction { action, n });
    }
    if !target.is_finite() {
        return Err(ModelError::NonFinite("target"));
    }
    let err = fwd.q.values[action] - target;
    let loss = err * err;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    let delta = 2.0 * err * scale;

    // Q-head.
    let h1 = &fwd.head_global;
    axpy(delta, h1, grads.get_mut(Tensor::WQ1));
    let dpre1: Vec<f64> =
        p.get(Tensor::WQ1).iter().zip(h1).map(|(w, h)| if *h > 0.0 { delta * w } else { 0.0 }).collect();
    outer_acc(grads.get_mut(Tensor::WQ2), &dpre1, &fwd.y_total);
    let mut dz = vec![0.0; d];
    mat_t_vec_acc(p.get(Tensor::WQ2), &dpre1, &mut dz);

    let h2 = fwd.head_local.row(action);
    axpy(delta, h2, grads.get_mut(Tensor::WQ3));
    let dpre2: Vec<f64> =
        p.get(Tensor::WQ3).iter().zip(h2).map(|(w, h)| if *h > 0.0 { delta * w } else { 0.0 }).collect();
    let y_final = &fwd.reader.y[steps];
    outer_acc(grads.get_mut(Tensor::WQ4), &dpre2, y_final.row(action));
    let mut dy_action = vec![0.0; d];
    mat_t_vec_acc(p.get(Tensor::WQ4), &dpre2, &mut dy_action);

    let mut dy = Matrix::zeros(n, d);
    for v in 0..n {
        dy.row_mut(v).copy_from_slice(&dz);
    }
    axpy(1.0, &dy_action, dy.row_mut(action));

    // Walk t = T..1. At the top of each iteration dX(t) is complete; the
    // evolution step producing x(t) and the reader step consuming x(t−1)
    // together complete dX(t−1).
    let (w4, w7, w_g1) = (p.get(Tensor::W4), p.get(Tensor::W7), p.get(Tensor::WG1));
    let mut dx = Matrix::zeros(n, d);
    let mut dx_prev = Matrix::zeros(n, d);
    let mut d_input = Matrix::zeros(n, d);
    let mut d_sum = Matrix::zeros(n, d);
    let mut d_pre = Matrix::zeros(n, d);
    for t in (1..=steps).rev() {
        dx_prev.fill(0.0);
        d_sum.fill(0.0);

        if t < steps {
            let x_t = &fwd.trajectory.states[t];
            let prev_sums = &fwd.sums[t - 1];
            let mut g_w1 = vec![0.0; d * d];
            let mut g_w2 = vec![0.0; d];
            let mut g_w3 = vec![0.0; d];
            for v in 0..n {
                let (dxv, xv) = (dx.row(v), x_t.row(v));
                let dp = d_pre.row_mut(v);
                for k in 0..d {
                    dp[k] = if xv[k] > 0.0 { dxv[k] } else { 0.0 };
                }
                let dp = d_pre.row(v);
                outer_acc(&mut g_w1, dp, prev_sums.row(v));
                axpy(1.0, dp, &mut g_w3);
                if flags[v] {
                    axpy(1.0, dp, &mut g_w2);
                }
                if t >= 2 {
                    mat_t_vec_acc(w_g1, dp, d_sum.row_mut(v));
                }
            }
            axpy(1.0, &g_w1, grads.get_mut(Tensor::WG1));
            axpy(1.0, &g_w2, grads.get_mut(Tensor::WG2));
            axpy(1.0, &g_w3, grads.get_mut(Tensor::WG3));
        }

        let gate = &fwd.reader.f[t];
        let input = &fwd.reader.i[t];
        let y_prev = &fwd.reader.y[t - 1];
        let mut d_gate = vec![0.0; d];
        for v in 0..n {
            let (iv, pv) = (input.row(v), y_prev.row(v));
            let dyv = dy.row_mut(v);
            let div = d_input.row_mut(v);
            for k in 0..d {
                d_gate[k] += dyv[k] * (iv[k] - pv[k]);
                div[k] = if iv[k] > 0.0 { dyv[k] * gate[k] } else { 0.0 };
                dyv[k] *= 1.0 - gate[k];
            }
        }

        let d_gate_pre: Vec<f64> = (0..d).map(|k| d_gate[k] * gate[k] * (1.0 - gate[k])).collect();
        outer_acc(grads.get_mut(Tensor::W7), &d_gate_pre, &fwd.totals[t - 1]);
        axpy(1.0, &d_gate_pre, grads.get_mut(Tensor::B8));

        let sums = &fwd.sums[t - 1];
        let mut g_w4 = vec![0.0; d * d];
        let mut g_w5 = vec![0.0; d];
        let mut g_b6 = vec![0.0; d];
        for v in 0..n {
            let div = d_input.row(v);
            outer_acc(&mut g_w4, div, sums.row(v));
            axpy(1.0, div, &mut g_b6);
            if flags[v] {
                axpy(1.0, div, &mut g_w5);
            }
            if t >= 2 {
                mat_t_vec_acc(w4, div, d_sum.row_mut(v));
            }
        }
        axpy(1.0, &g_w4, grads.get_mut(Tensor::W4));
        axpy(1.0, &g_w5, grads.get_mut(Tensor::W5));
        axpy(1.0, &g_b6, grads.get_mut(Tensor::B6));

        if t >= 2 {
            let mut d_total = vec![0.0; d];
            mat_t_vec_acc(w7, &d_gate_pre, &mut d_total);
            for v in 0..n {
                let row = dx_prev.row_mut(v);
                axpy(1.0, &d_total, row);
                for &u in g.neighbors(v) {
                    axpy(1.0, d_sum.row(u), row);
                }
            }
        }
        std::mem::swap(&mut dx, &mut dx_prev);
    }

    if let Some(t) = grads.first_non_finite() {
        return Err(ModelError::NonFinite(t.name()));
    }
    Ok(loss)
}

/// Outcome of comparing backward against central finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest per-coordinate relative error; coordinates whose absolute
    /// error is within the floor count as 0.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst: Option<(Tensor, usize)>,
    pub coordinates: usize,
    /// Whether some ±h probe changed the relu sign pattern, i.e. the instance
    /// sits on a kink where the derivative is not defined.
    pub crosses_kink: bool,
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_ABS_FLOOR: f64 = 1e-7;
pub const GRADCHECK_REL_TOL: f64 = 1e-4;

/// Central finite-difference check of [`backward`] on one instance.
pub fn gradient_check(
    g: &Graph,
    flags: &[bool],
    p: &ParamSet,
    steps: usize,
    action: usize,
    target: f64,
) -> Result<GradCheck, ModelError> {
    let (_, analytic) = backward(g, flags, p, steps, action, target)?;
    let base_sig = forward(g, flags, p, steps)?.activation_signature();
    let loss_at = |q: &ParamSet| -> Result<(f64, u64), ModelError> {
        let f = forward(g, flags, q, steps)?;
        let e = f.q.values[action] - target;
        Ok((e * e, f.activation_signature()))
    };
    let mut probe = p.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        coordinates: p.as_flat().len(),
        crosses_kink: false,
    };
    for t in Tensor::ALL {
        for (offset, idx) in p.range(t).enumerate() {
            let orig = probe.as_flat()[idx];
            probe.as_flat_mut()[idx] = orig + GRADCHECK_STEP;
            let (plus, sp) = loss_at(&probe)?;
            probe.as_flat_mut()[idx] = orig - GRADCHECK_STEP;
            let (minus, sm) = loss_at(&probe)?;
            probe.as_flat_mut()[idx] = orig;
            report.crosses_kink |= sp != base_sig || sm != base_sig;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let a = analytic.as_flat()[idx];
            let abs = (a - numeric).abs();
            let rel = if abs <= GRADCHECK_ABS_FLOOR { 0.0 } else { abs / a.abs().max(numeric.abs()) };
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((t, offset));
            }
        }
    }
    Ok(report)
}

/// Summary of [`gradient_check_suite`].
#[derive(Clone, Debug)]
pub struct GradSuite {
    pub cases: usize,
    /// Draws rejected because a probe crossed a relu kink.
    pub skipped: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

impl GradSuite {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_REL_TOL
    }
}

/// Gradient-checks `cases` random (graph, selection, d, T, action, target)
/// instances; draws that sit on a relu kink are replaced by fresh ones.
pub fn gradient_check_suite(seed: u64, cases: usize) -> Result<GradSuite, ModelError> {
    let mut rng = crate::seeding::substream(seed, &[0]);
    let mut suite = GradSuite { cases: 0, skipped: 0, coordinates: 0, max_rel_error: 0.0, max_abs_error: 0.0 };
    let mut draw = 0u64;
    while suite.cases < cases {
        draw += 1;
        let n = rng.random_range(1..=9);
        let p_edge = rng.random_range(0.2..0.6);
        let g = crate::graphs::generate(&crate::graphs::GenSpec::ErdosRenyi {
            n,
            p: p_edge,
            seed: crate::seeding::derive(seed, &[1, draw]),
        })
        .expect("valid generator spec");
        let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let d = rng.random_range(1..=4);
        let steps = rng.random_range(1..=5);
        let p = ParamSet::random(d, crate::seeding::derive(seed, &[2, draw]));
        let action = rng.random_range(0..n);
        let target = rng.random_range(-3.0..3.0);
        let report = gradient_check(&g, &flags, &p, steps, action, target)?;
        if report.crosses_kink {
            suite.skipped += 1;
            continue;
        }
        suite.cases += 1;
        suite.coordinates += report.coordinates;
        suite.max_rel_error = suite.max_rel_error.max(report.max_rel_error);
        suite.max_abs_error = suite.max_abs_error.max(report.max_abs_error);
    }
    Ok(suite)
}

pub const CHECKPOINT_VERSION: &str = "1";
const CHECKPOINT_MAGIC: &str = "G2S-CKPT";

pub fn checkpoint_to_string(p: &ParamSet) -> String {
    let d = p.dim();
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "d {d}");
    for t in Tensor::ALL {
        let (rows, cols) = t.shape(d);
        let _ = writeln!(out, "tensor {} {rows} {cols}", t.name());
        let data = p.get(t);
        for r in 0..rows {
            let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn checkpoint_from_str(text: &str) -> Result<ParamSet, ModelError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, reason: String| ModelError::CheckpointParse { line, reason };
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| bad(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("header")?;
    match header.split_ascii_whitespace().collect::<Vec<_>>().as_slice() {
        [CHECKPOINT_MAGIC, CHECKPOINT_VERSION] => {}
        [CHECKPOINT_MAGIC, other] => return Err(ModelError::CheckpointVersion(other.to_string())),
        _ => return Err(bad(ln, format!("bad header `{header}`"))),
    }
    let (ln, dline) = next("`d <int>`")?;
    let d = match dline.split_ascii_whitespace().collect::<Vec<_>>().as_slice() {
        ["d", v] => {
            v.parse::<usize>().ok().filter(|&d| d >= 1).ok_or_else(|| bad(ln, format!("bad dimension `{v}`")))?
        }
        _ => return Err(bad(ln, format!("expected `d <int>`, got `{dline}`"))),
    };
    let mut flat = Vec::with_capacity(param_count(d));
    for t in Tensor::ALL {
        let (ln, tline) = next("tensor header")?;
        let (rows, cols) = t.shape(d);
        let expected = format!("tensor {} {rows} {cols}", t.name());
        if tline.split_ascii_whitespace().collect::<Vec<_>>().join(" ") != expected {
            return Err(bad(ln, format!("expected `{expected}`, got `{tline}`")));
        }
        for _ in 0..rows {
            let (ln, row) = next("tensor row")?;
            let values: Result<Vec<f64>, _> = row.split_ascii_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| bad(ln, format!("bad number: {e}")))?;
            if values.len() != cols {
                return Err(bad(ln, format!("expected {cols} values, got {}", values.len())));
            }
            if !values.iter().all(|x| x.is_finite()) {
                return Err(bad(ln, "non-finite value".into()));
            }
            flat.extend(values);
        }
    }
    if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(ln, format!("trailing content `{extra}`")));
    }
    ParamSet::from_flat(d, flat)
}

pub fn save_checkpoint(p: &ParamSet, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, checkpoint_to_string(p))
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet, ModelError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    checkpoint_from_str(&text)
}
