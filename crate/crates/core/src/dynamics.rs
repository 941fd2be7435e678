//! The graph-induced dynamical system whose per-vertex trajectories are the
//! sequence embedding, and the local spatial/spectral convolution filters
//! together with the exact parameter conversion between them.

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::graphs::Graph;
use crate::seeding;
use crate::tensor::{axpy, relu, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite entry in `{0}`")]
    NonFinite(&'static str),
    #[error("dimension mismatch for `{what}`: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: String, got: String },
    #[error("noise variance must be >= 0, got {0}")]
    NegativeVariance(f64),
    #[error("a noise seed is required when sigma2 > 0")]
    MissingNoiseSeed,
    #[error("a noise seed was supplied but sigma2 = 0")]
    UnexpectedNoiseSeed,
    #[error("filter basis is {got:?}, expected {expected:?}")]
    BasisMismatch { expected: Basis, got: Basis },
    #[error("filter needs K >= 1 weight matrices")]
    EmptyFilter,
}

fn mismatch(what: &'static str, expected: impl ToString, got: impl ToString) -> DynamicsError {
    DynamicsError::DimensionMismatch { what, expected: expected.to_string(), got: got.to_string() }
}

/// Parameters of `x_v(t+1) = relu(W1 Σ_{u∈Γ(v)} x_u(t) + w2 c_v + b1) + n_v(t+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// Weight on the selection flag `c_v`.
    pub w2: Vec<f64>,
    pub sigma2: f64,
}

impl EvolutionParams {
    pub fn zeros(d: usize) -> Self {
        Self { w1: Matrix::zeros(d, d), b1: vec![0.0; d], w2: vec![0.0; d], sigma2: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let d = self.dim();
        if d == 0 {
            return Err(mismatch("d", ">= 1", 0));
        }
        if self.w1.shape() != (d, d) {
            return Err(mismatch("w1", format!("{d}x{d}"), format!("{:?}", self.w1.shape())));
        }
        if self.w2.len() != d {
            return Err(mismatch("w2", d, self.w2.len()));
        }
        if !self.w1.is_finite() {
            return Err(DynamicsError::NonFinite("w1"));
        }
        if !self.b1.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite("b1"));
        }
        if !self.w2.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite("w2"));
        }
        if !self.sigma2.is_finite() {
            return Err(DynamicsError::NonFinite("sigma2"));
        }
        if self.sigma2 < 0.0 {
            return Err(DynamicsError::NegativeVariance(self.sigma2));
        }
        Ok(())
    }
}

/// `states[t]` holds `x_v(t)` in row `v`, for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Matrix>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, t: usize) -> &Matrix {
        &self.states[t]
    }
}

/// `out[v] = Σ_{u ∈ Γ(v)} x[u]`.
pub fn neighbor_sums(g: &Graph, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for v in 0..g.n() {
        let row = out.row_mut(v);
        for &u in g.neighbors(v) {
            axpy(1.0, x.row(u), row);
        }
    }
    out
}

/// Runs the evolution for `steps` steps from the all-zero state.
///
/// `noise_seed` must be given exactly when `sigma2 > 0`; the noise for
/// vertex `v` at step `t` comes from its own substream of that seed.
pub fn evolve(
    g: &Graph,
    params: &EvolutionParams,
    flags: &[bool],
    steps: usize,
    noise_seed: Option<u64>,
) -> Result<Trajectory, DynamicsError> {
    let init = Matrix::zeros(g.n(), params.dim());
    evolve_from(g, params, flags, init, steps, noise_seed)
}

/// Same as [`evolve`] from an arbitrary initial state.
pub fn evolve_from(
    g: &Graph,
    params: &EvolutionParams,
    flags: &[bool],
    init: Matrix,
    steps: usize,
    noise_seed: Option<u64>,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    let d = params.dim();
    if flags.len() != g.n() {
        return Err(mismatch("flags", g.n(), flags.len()));
    }
    if init.shape() != (g.n(), d) {
        return Err(mismatch("init", format!("{}x{d}", g.n()), format!("{:?}", init.shape())));
    }
    if !init.is_finite() {
        return Err(DynamicsError::NonFinite("init"));
    }
    let noise_seed = match (params.sigma2 > 0.0, noise_seed) {
        (true, None) => return Err(DynamicsError::MissingNoiseSeed),
        (false, Some(_)) => return Err(DynamicsError::UnexpectedNoiseSeed),
        (_, seed) => seed,
    };
    let sigma = params.sigma2.sqrt();

    let mut states = Vec::with_capacity(steps + 1);
    states.push(init);
    for t in 0..steps {
        let sums = neighbor_sums(g, &states[t]);
        let mut pre = sums.matmul_t(&params.w1);
        let mut next = Matrix::zeros(g.n(), d);
        for v in 0..g.n() {
            let row = pre.row_mut(v);
            axpy(1.0, &params.b1, row);
            if flags[v] {
                axpy(1.0, &params.w2, row);
            }
            let out = next.row_mut(v);
            for (o, &p) in out.iter_mut().zip(row.iter()) {
                *o = relu(p);
            }
            if let Some(seed) = noise_seed {
                let mut rng = seeding::substream(seed, &[v as u64, t as u64 + 1]);
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *o += sigma * z;
                }
            }
        }
        states.push(next);
    }
    Ok(Trajectory { states })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Adjacency,
    Laplacian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `Ã = D^{-1/2} A D^{-1/2}`, with `D^{-1/2}` taken as 0 at isolated vertices.
    Normalized,
    Unnormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// A localized graph convolution `Y_v = σ(Σ_{k<K} W_k (P^k X)_v + b0)` where
/// `P` is `Ã` for the adjacency basis and `L̃ = I − Ã` for the Laplacian basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnnFilterParams {
    /// `K` matrices, each `d_out × d_in`.
    pub weights: Vec<Matrix>,
    pub bias: Vec<f64>,
    pub basis: Basis,
    pub normalization: Normalization,
    pub activation: Activation,
}

impl GcnnFilterParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn validate(&self) -> Result<(usize, usize), DynamicsError> {
        let first = self.weights.first().ok_or(DynamicsError::EmptyFilter)?;
        let shape = first.shape();
        for w in &self.weights {
            if w.shape() != shape {
                return Err(mismatch("weights", format!("{shape:?}"), format!("{:?}", w.shape())));
            }
            if !w.is_finite() {
                return Err(DynamicsError::NonFinite("weights"));
            }
        }
        if self.bias.len() != shape.0 {
            return Err(mismatch("bias", shape.0, self.bias.len()));
        }
        Ok(shape)
    }
}

/// Applies `Ã` (normalized or not) to the rows of `x` without forming the matrix.
fn apply_adjacency(g: &Graph, x: &Matrix, normalization: Normalization) -> Matrix {
    match normalization {
        Normalization::Unnormalized => neighbor_sums(g, x),
        Normalization::Normalized => {
            let inv_sqrt: Vec<f64> = (0..g.n())
                .map(|v| match g.degree(v) {
                    0 => 0.0,
                    d => 1.0 / (d as f64).sqrt(),
                })
                .collect();
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for v in 0..g.n() {
                let row = out.row_mut(v);
                for &u in g.neighbors(v) {
                    axpy(inv_sqrt[v] * inv_sqrt[u], x.row(u), row);
                }
            }
            out
        }
    }
}

fn apply_filter(g: &Graph, x: &Matrix, p: &GcnnFilterParams) -> Result<Matrix, DynamicsError> {
    let (d_out, d_in) = p.validate()?;
    if x.shape() != (g.n(), d_in) {
        return Err(mismatch("X", format!("{}x{d_in}", g.n()), format!("{:?}", x.shape())));
    }
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("X"));
    }
    let mut acc = Matrix::zeros(g.n(), d_out);
    let mut power = x.clone();
    for (k, w) in p.weights.iter().enumerate() {
        if k > 0 {
            let shifted = apply_adjacency(g, &power, p.normalization);
            power = match p.basis {
                Basis::Adjacency => shifted,
                Basis::Laplacian => {
                    let mut lap = power;
                    axpy(-1.0, shifted.as_slice(), lap.as_mut_slice());
                    lap
                }
            };
        }
        acc.add_assign(&power.matmul_t(w));
    }
    for v in 0..g.n() {
        let row = acc.row_mut(v);
        axpy(1.0, &p.bias, row);
        if p.activation == Activation::Relu {
            row.iter_mut().for_each(|y| *y = relu(*y));
        }
    }
    Ok(acc)
}

/// Spatial filter over powers of the (normalized) adjacency matrix.
pub fn spatial_filter(g: &Graph, x: &Matrix, p: &GcnnFilterParams) -> Result<Matrix, DynamicsError> {
    if p.basis != Basis::Adjacency {
        return Err(DynamicsError::BasisMismatch { expected: Basis::Adjacency, got: p.basis });
    }
    apply_filter(g, x, p)
}

/// Spectral filter over powers of `L̃ = I − Ã`.
pub fn spectral_filter(g: &Graph, x: &Matrix, p: &GcnnFilterParams) -> Result<Matrix, DynamicsError> {
    if p.basis != Basis::Laplacian {
        return Err(DynamicsError::BasisMismatch { expected: Basis::Laplacian, got: p.basis });
    }
    apply_filter(g, x, p)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Spectral parameters computing the same function as the given spatial ones.
///
/// Expanding `(I − Ã)^i = Σ_k C(i,k) (−1)^k Ã^k` and matching powers of `Ã`
/// gives `Σ_{i≥k} C(i,k) (−1)^k W'_i = W_k`, solved from `k = K−1` downwards.
pub fn spatial_to_spectral(p: &GcnnFilterParams) -> Result<GcnnFilterParams, DynamicsError> {
    if p.basis != Basis::Adjacency {
        return Err(DynamicsError::BasisMismatch { expected: Basis::Adjacency, got: p.basis });
    }
    let (rows, cols) = p.validate()?;
    let k_max = p.k();
    let mut primed = vec![Matrix::zeros(rows, cols); k_max];
    for k in (0..k_max).rev() {
        let mut w = p.weights[k].scaled(sign(k));
        for i in k + 1..k_max {
            axpy(-binomial(i, k), primed[i].as_slice(), w.as_mut_slice());
        }
        primed[k] = w;
    }
    Ok(GcnnFilterParams { weights: primed, basis: Basis::Laplacian, ..p.clone() })
}

/// Inverse of [`spatial_to_spectral`]: `W_k = Σ_{i≥k} C(i,k) (−1)^k W'_i`.
pub fn spectral_to_spatial(p: &GcnnFilterParams) -> Result<GcnnFilterParams, DynamicsError> {
    if p.basis != Basis::Laplacian {
        return Err(DynamicsError::BasisMismatch { expected: Basis::Laplacian, got: p.basis });
    }
    let (rows, cols) = p.validate()?;
    let k_max = p.k();
    let weights = (0..k_max)
        .map(|k| {
            let mut w = Matrix::zeros(rows, cols);
            for i in k..k_max {
                axpy(binomial(i, k) * sign(k), p.weights[i].as_slice(), w.as_mut_slice());
            }
            w
        })
        .collect();
    Ok(GcnnFilterParams { weights, basis: Basis::Adjacency, ..p.clone() })
}

/// Largest discrepancies seen by [`equivalence_suite`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivReport {
    pub cases: usize,
    /// Spatial filter output vs. the converted spectral filter output.
    pub max_filter_diff: f64,
    /// Spatial weights vs. spatial → spectral → spatial weights.
    pub max_round_trip_diff: f64,
}

/// Compares spatial filters with their spectral conversions on `cases`
/// random instances with `n <= n_max`, `K <= k_max` and `d <= d_max`.
pub fn equivalence_suite(
    seed: u64,
    cases: usize,
    n_max: usize,
    k_max: usize,
    d_max: usize,
) -> Result<EquivReport, DynamicsError> {
    use rand::Rng as _;
    let mut rng = seeding::substream(seed, &[0]);
    let mut report = EquivReport { cases, max_filter_diff: 0.0, max_round_trip_diff: 0.0 };
    for case in 0..cases as u64 {
        let n = rng.random_range(1..=n_max.max(1));
        let p_edge = rng.random_range(0.1..0.5);
        let g = crate::graphs::generate(&crate::graphs::GenSpec::ErdosRenyi {
            n,
            p: p_edge,
            seed: seeding::derive(seed, &[1, case]),
        })
        .expect("valid generator spec");
        let k = rng.random_range(1..=k_max.max(1));
        let d_in = rng.random_range(1..=d_max.max(1));
        let d_out = rng.random_range(1..=d_max.max(1));
        let mut uniform = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let weights = (0..k).map(|_| uniform(d_out, d_in)).collect();
        let bias = uniform(d_out, 1).as_slice().to_vec();
        let x = uniform(n, d_in);
        let normalization = if case % 2 == 0 { Normalization::Normalized } else { Normalization::Unnormalized };
        let spatial =
            GcnnFilterParams { weights, bias, basis: Basis::Adjacency, normalization, activation: Activation::Relu };
        let spectral = spatial_to_spectral(&spatial)?;
        let back = spectral_to_spatial(&spectral)?;
        for (a, b) in spatial.weights.iter().zip(&back.weights) {
            report.max_round_trip_diff = report.max_round_trip_diff.max(a.max_abs_diff(b));
        }
        let ys = spatial_filter(&g, &x, &spatial)?;
        let yl = spectral_filter(&g, &x, &spectral)?;
        report.max_filter_diff = report.max_filter_diff.max(ys.max_abs_diff(&yl));
    }
    Ok(report)
}
