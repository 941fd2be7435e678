//! Greedy-construction environments for the three problems and the
//! Q-learning trainer (ε-greedy exploration, experience replay, Adam).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::graphs::{generate, GenSpec, Graph, GraphError};
use crate::model::{backward_from, forward, ModelError, ParamSet};
use crate::seeding;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("vertex {v} out of range for a graph with {n} vertices")]
    VertexOutOfRange { v: usize, n: usize },
    #[error("vertex {0} listed twice")]
    DuplicateVertex(usize),
    #[error("vertices {0} and {1} are adjacent, so the set is not independent")]
    DependentSet(usize, usize),
    #[error("action {action} is not feasible in the current state")]
    Infeasible { action: usize },
    #[error("invalid training config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("gradient length {grads} does not match parameter length {params}")]
    LengthMismatch { params: usize, grads: usize },
    #[error("non-finite gradient at coordinate {0}")]
    NonFiniteGradient(usize),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Problem {
    Mvc,
    Mc,
    Mis,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::Mvc, Problem::Mc, Problem::Mis];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Mvc => "mvc",
            Problem::Mc => "mc",
            Problem::Mis => "mis",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mvc" => Ok(Problem::Mvc),
            "mc" => Ok(Problem::Mc),
            "mis" => Ok(Problem::Mis),
            other => Err(format!("unknown problem `{other}` (expected mvc, mc or mis)")),
        }
    }
}

fn membership(g: &Graph, selected: &[usize]) -> Result<Vec<bool>, RlError> {
    let mut flags = vec![false; g.n()];
    for &v in selected {
        if v >= g.n() {
            return Err(RlError::VertexOutOfRange { v, n: g.n() });
        }
        if std::mem::replace(&mut flags[v], true) {
            return Err(RlError::DuplicateVertex(v));
        }
    }
    Ok(flags)
}

pub fn cut_value(g: &Graph, flags: &[bool]) -> usize {
    g.edges().iter().filter(|&&(u, v)| flags[u] != flags[v]).count()
}

/// The maximised objective: `−|S|` (mvc), `cut(S, V∖S)` (mc), `|S|` (mis).
pub fn objective(problem: Problem, g: &Graph, selected: &[usize]) -> Result<f64, RlError> {
    let flags = membership(g, selected)?;
    Ok(match problem {
        Problem::Mvc => -(selected.len() as f64),
        Problem::Mc => cut_value(g, &flags) as f64,
        Problem::Mis => {
            if let Some(&(u, v)) = g.edges().iter().find(|&&(u, v)| flags[u] && flags[v]) {
                return Err(RlError::DependentSet(u, v));
            }
            selected.len() as f64
        }
    })
}

pub fn is_vertex_cover(g: &Graph, selected: &[usize]) -> bool {
    membership(g, selected).is_ok_and(|f| g.edges().iter().all(|&(u, v)| f[u] || f[v]))
}

pub fn is_independent_set(g: &Graph, selected: &[usize]) -> bool {
    membership(g, selected).is_ok_and(|f| g.edges().iter().all(|&(u, v)| !(f[u] && f[v])))
}

/// Partial solution of one episode, with incrementally maintained caches.
#[derive(Clone, Debug)]
pub struct EnvState<'g> {
    problem: Problem,
    g: &'g Graph,
    selected: Vec<usize>,
    flags: Vec<bool>,
    /// Uncovered edges incident to each vertex.
    uncovered_degree: Vec<usize>,
    uncovered: usize,
    /// Selected or adjacent to a selected vertex.
    blocked: Vec<bool>,
    /// Edges with exactly one selected endpoint (kept for every problem).
    cut: i64,
    stopped: bool,
}

impl<'g> EnvState<'g> {
    pub fn new(problem: Problem, g: &'g Graph) -> Self {
        let n = g.n();
        Self {
            problem,
            g,
            selected: Vec::new(),
            flags: vec![false; n],
            uncovered_degree: (0..n).map(|v| g.degree(v)).collect(),
            uncovered: g.m(),
            blocked: vec![false; n],
            cut: 0,
            stopped: false,
        }
    }

    /// Replays `selected` in order from the empty state.
    pub fn from_selection(problem: Problem, g: &'g Graph, selected: &[usize]) -> Result<Self, RlError> {
        let mut st = Self::new(problem, g);
        for &a in selected {
            st.step(a)?;
        }
        Ok(st)
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn steps_taken(&self) -> usize {
        self.selected.len()
    }

    pub fn uncovered_edges(&self) -> usize {
        self.uncovered
    }

    pub fn cut(&self) -> i64 {
        self.cut
    }

    pub fn value(&self) -> f64 {
        match self.problem {
            Problem::Mvc => -(self.selected.len() as f64),
            Problem::Mc => self.cut as f64,
            Problem::Mis => self.selected.len() as f64,
        }
    }

    pub fn is_feasible(&self, v: usize) -> bool {
        v < self.g.n()
            && match self.problem {
                Problem::Mvc => self.uncovered_degree[v] > 0,
                Problem::Mis => !self.blocked[v],
                Problem::Mc => !self.stopped && !self.flags[v],
            }
    }

    pub fn feasible_actions(&self) -> Vec<usize> {
        (0..self.g.n()).filter(|&v| self.is_feasible(v)).collect()
    }

    pub fn is_terminal(&self) -> bool {
        (0..self.g.n()).all(|v| !self.is_feasible(v))
    }

    /// Immediate reward of adding `v`, without applying it.
    pub fn gain(&self, v: usize) -> f64 {
        match self.problem {
            Problem::Mvc => -1.0,
            Problem::Mis => 1.0,
            Problem::Mc => self.cut_delta(v) as f64,
        }
    }

    fn cut_delta(&self, v: usize) -> i64 {
        let inside = self.g.neighbors(v).iter().filter(|&&u| self.flags[u]).count();
        self.g.degree(v) as i64 - 2 * inside as i64
    }

    /// Ends a max-cut episode early; afterwards no action is feasible.
    pub fn latch_stop(&mut self) {
        self.stopped = true;
    }

    pub fn step(&mut self, a: usize) -> Result<f64, RlError> {
        if !self.is_feasible(a) {
            return Err(RlError::Infeasible { action: a });
        }
        let reward = self.gain(a);
        self.cut += self.cut_delta(a);
        let g = self.g;
        for &u in g.neighbors(a) {
            if !self.flags[u] {
                self.uncovered_degree[u] -= 1;
                self.uncovered -= 1;
            }
            self.blocked[u] = true;
        }
        self.uncovered_degree[a] = 0;
        self.blocked[a] = true;
        self.flags[a] = true;
        self.selected.push(a);
        Ok(reward)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub graph_id: usize,
    pub before: Vec<u32>,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
}

impl Transition {
    pub fn after(&self) -> Vec<usize> {
        self.before.iter().map(|&v| v as usize).chain([self.action]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `k` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, rng: &mut impl Rng, k: usize) -> Vec<usize> {
        (0..k).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam step; parameters are untouched on error.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<(), RlError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(RlError::LengthMismatch { params: params.len(), grads: grads.len() });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(RlError::NonFiniteGradient(i));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub problem: Problem,
    /// Training graphs are drawn from this spec with per-graph derived seeds.
    pub graph: GenSpec,
    pub pool_size: usize,
    pub iterations: usize,
    pub t_train: usize,
    pub d: usize,
    pub adam: AdamConfig,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(problem: Problem, graph: GenSpec, iterations: usize, seed: u64) -> Self {
        Self {
            problem,
            graph,
            pool_size: 1000,
            iterations,
            t_train: 5,
            d: 16,
            adam: AdamConfig::default(),
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay: 10_000,
            replay_capacity: 50_000,
            batch_size: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |field, reason: &str| Err(RlError::InvalidConfig { field, reason: reason.into() });
        self.graph.validate()?;
        if self.pool_size == 0 {
            return bad("pool_size", "must be positive");
        }
        if self.t_train == 0 {
            return bad("t_train", "must be positive");
        }
        if self.d == 0 {
            return bad("d", "must be positive");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("lr", "must be a positive finite number");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("beta", "Adam betas must lie in [0, 1)");
        }
        if !(self.adam.eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon", "must lie in [0, 1]");
        }
        if self.eps_start < self.eps_end {
            return bad("epsilon", "start must be at least end");
        }
        if self.eps_decay == 0 {
            return bad("eps_decay", "must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity", "must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size", "must be positive and at most the replay capacity");
        }
        Ok(())
    }

    pub fn epsilon(&self, iteration: usize) -> f64 {
        let frac = (iteration as f64 / self.eps_decay as f64).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub episode_objective: f64,
    /// Mean batch loss over the episode's updates; `None` before the replay
    /// buffer first fills a batch.
    pub mean_loss: Option<f64>,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,episode_objective,mean_loss,epsilon\n");
        for r in &self.rows {
            let loss = r.mean_loss.map(|l| format!("{l:.9e}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{:.6}\n", r.iteration, r.episode_objective, loss, r.epsilon));
        }
        out
    }
}

const STREAM_POOL: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_EPISODE: u64 = 4;
const STREAM_REPLAY: u64 = 5;

pub fn training_pool(cfg: &TrainConfig) -> Result<Vec<Graph>, RlError> {
    (0..cfg.pool_size)
        .map(|i| {
            let spec = cfg.graph.with_seed(seeding::derive(cfg.seed, &[STREAM_POOL, i as u64]));
            generate(&spec).map_err(RlError::from)
        })
        .collect()
}

pub fn initial_params(cfg: &TrainConfig) -> ParamSet {
    ParamSet::random(cfg.d, seeding::derive(cfg.seed, &[STREAM_INIT]))
}

/// Index of the largest `q[v]` over `candidates` (ascending), lowest id on ties.
pub fn argmax_over(q: &[f64], candidates: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &v in candidates {
        if best.is_none_or(|b| q[v] > q[b]) {
            best = Some(v);
        }
    }
    best
}

pub fn train(cfg: &TrainConfig) -> Result<(ParamSet, TrainLog), RlError> {
    train_with_progress(cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every episode.
pub fn train_with_progress(
    cfg: &TrainConfig,
    mut progress: impl FnMut(&LogRow, &ParamSet),
) -> Result<(ParamSet, TrainLog), RlError> {
    cfg.validate()?;
    let mut params = initial_params(cfg);
    let mut log = TrainLog::default();
    if cfg.iterations == 0 {
        return Ok((params, log));
    }
    let pool = training_pool(cfg)?;
    let mut adam = AdamState::new(params.as_flat().len());
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut replay_rng = seeding::substream(cfg.seed, &[STREAM_REPLAY]);
    let mut grads = ParamSet::zeros(cfg.d);
    let mut order: Vec<usize> = Vec::new();

    for iteration in 0..cfg.iterations {
        let pass = iteration / cfg.pool_size;
        if iteration % cfg.pool_size == 0 {
            order = (0..cfg.pool_size).collect();
            order.shuffle(&mut seeding::substream(cfg.seed, &[STREAM_SHUFFLE, pass as u64]));
        }
        let graph_id = order[iteration % cfg.pool_size];
        let g = &pool[graph_id];
        let epsilon = cfg.epsilon(iteration);
        let mut rng = seeding::substream(cfg.seed, &[STREAM_EPISODE, iteration as u64]);

        let mut st = EnvState::new(cfg.problem, g);
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        loop {
            let feasible = st.feasible_actions();
            if feasible.is_empty() {
                break;
            }
            if cfg.problem == Problem::Mc {
                let improving = feasible.iter().any(|&v| st.gain(v) > 0.0);
                if !improving && rng.random_bool(0.5) {
                    st.latch_stop();
                    break;
                }
            }
            let action = if rng.random::<f64>() < epsilon {
                feasible[rng.random_range(0..feasible.len())]
            } else {
                let q = forward(g, st.flags(), &params, cfg.t_train)?.q.values;
                argmax_over(&q, &feasible).expect("feasible set is non-empty")
            };
            let before: Vec<u32> = st.selected().iter().map(|&v| v as u32).collect();
            let reward = st.step(action)?;
            replay.push(Transition { graph_id, before, action, reward, terminal: st.is_terminal() });

            if replay.len() >= cfg.batch_size {
                let loss = replay_update(cfg, &pool, &replay, &mut replay_rng, &mut params, &mut grads, &mut adam)
                    .map_err(|e| RlError::Divergence { iteration, reason: e.to_string() })?;
                loss_sum += loss;
                updates += 1;
            }
        }

        let row = LogRow {
            iteration,
            episode_objective: st.value(),
            mean_loss: (updates > 0).then(|| loss_sum / updates as f64),
            epsilon,
        };
        progress(&row, &params);
        log.rows.push(row);
    }
    Ok((params, log))
}

/// One Adam step on the mean squared Bellman error of a uniform batch;
/// returns the batch mean loss.
fn replay_update(
    cfg: &TrainConfig,
    pool: &[Graph],
    replay: &ReplayBuffer,
    rng: &mut impl Rng,
    params: &mut ParamSet,
    grads: &mut ParamSet,
    adam: &mut AdamState,
) -> Result<f64, RlError> {
    let batch = replay.sample_indices(rng, cfg.batch_size);
    grads.as_flat_mut().fill(0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for &i in &batch {
        let tr = replay.get(i);
        let g = &pool[tr.graph_id];
        let after = tr.after();
        let mut target = tr.reward;
        if !tr.terminal {
            let next = EnvState::from_selection(cfg.problem, g, &after)?;
            let q = forward(g, next.flags(), params, cfg.t_train)?.q.values;
            let feasible = next.feasible_actions();
            target += feasible.iter().map(|&v| q[v]).fold(f64::NEG_INFINITY, f64::max);
        }
        let mut flags = vec![false; g.n()];
        tr.before.iter().for_each(|&v| flags[v as usize] = true);
        let fwd = forward(g, &flags, params, cfg.t_train)?;
        total += backward_from(g, &flags, params, &fwd, tr.action, target, scale, grads)?;
    }
    let mean = total * scale;
    if !mean.is_finite() {
        return Err(RlError::Model(ModelError::NonFinite("loss")));
    }
    adam_update(params.as_flat_mut(), grads.as_flat(), adam, &cfg.adam)?;
    Ok(mean)
}
