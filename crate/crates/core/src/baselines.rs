//! Classical heuristics, the tree message-passing vertex cover heuristic, and
//! exact branch-and-bound solvers used as reference oracles.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::graphs::Graph;
use crate::rl::Problem;
use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("`{method}` does not support problem `{problem}`")]
    Unsupported { method: &'static str, problem: Problem },
    #[error("input graph is not a tree")]
    NotATree,
    #[error("number of rounds must be at least 1")]
    ZeroRounds,
}

/// A solution together with its size: cover size (mvc), cut size (mc) or
/// independent-set size (mis). For mc the solution is one side of the cut.
#[derive(Clone, Debug, PartialEq)]
pub struct OptResult {
    pub value: usize,
    pub solution: Vec<usize>,
    /// The value is proven optimal.
    pub exact: bool,
    pub nodes: u64,
    pub wall: Duration,
}

impl OptResult {
    fn heuristic(mut solution: Vec<usize>, value: usize, start: Instant) -> Self {
        solution.sort_unstable();
        Self { value, solution, exact: false, nodes: 0, wall: start.elapsed() }
    }
}

pub fn greedy(problem: Problem, g: &Graph) -> OptResult {
    let start = Instant::now();
    match problem {
        Problem::Mvc => {
            let cover = greedy_cover(g);
            let k = cover.len();
            OptResult::heuristic(cover, k, start)
        }
        Problem::Mis => {
            let set = greedy_independent_set(g);
            let k = set.len();
            OptResult::heuristic(set, k, start)
        }
        Problem::Mc => {
            let (side, cut) = local_search_cut(g, vec![false; g.n()]);
            OptResult::heuristic((0..g.n()).filter(|&v| side[v]).collect(), cut, start)
        }
    }
}

/// Repeatedly takes the vertex covering the most uncovered edges.
fn greedy_cover(g: &Graph) -> Vec<usize> {
    let mut residual: Vec<usize> = (0..g.n()).map(|v| g.degree(v)).collect();
    let mut taken = vec![false; g.n()];
    let mut cover = Vec::new();
    loop {
        let Some(v) =
            (0..g.n()).filter(|&v| residual[v] > 0).max_by(|&a, &b| residual[a].cmp(&residual[b]).then(b.cmp(&a)))
        else {
            return cover;
        };
        taken[v] = true;
        residual[v] = 0;
        for &u in g.neighbors(v) {
            if !taken[u] {
                residual[u] -= 1;
            }
        }
        cover.push(v);
    }
}

/// Repeatedly takes a minimum residual-degree vertex and deletes its closed
/// neighbourhood.
fn greedy_independent_set(g: &Graph) -> Vec<usize> {
    let n = g.n();
    let mut alive = vec![true; n];
    let mut residual: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut set = Vec::new();
    while let Some(v) = (0..n).filter(|&v| alive[v]).min_by_key(|&v| (residual[v], v)) {
        set.push(v);
        let mut removed = vec![v];
        removed.extend(g.neighbors(v).iter().copied().filter(|&u| alive[u]));
        for &r in &removed {
            alive[r] = false;
        }
        for &r in &removed {
            for &w in g.neighbors(r) {
                if alive[w] {
                    residual[w] -= 1;
                }
            }
        }
    }
    set
}

/// Single-vertex flip local search: repeatedly flips the vertex with the
/// largest positive cut gain (lowest id on ties) until none improves.
fn local_search_cut(g: &Graph, mut side: Vec<bool>) -> (Vec<bool>, usize) {
    let n = g.n();
    let mut cut = g.edges().iter().filter(|&&(u, v)| side[u] != side[v]).count() as i64;
    let gain = |side: &[bool], v: usize| -> i64 {
        g.neighbors(v).iter().map(|&u| if side[u] == side[v] { 1 } else { -1 }).sum()
    };
    let mut gains: Vec<i64> = (0..n).map(|v| gain(&side, v)).collect();
    while let Some(v) = (0..n).filter(|&v| gains[v] > 0).max_by(|&a, &b| gains[a].cmp(&gains[b]).then(b.cmp(&a))) {
        cut += gains[v];
        side[v] = !side[v];
        gains[v] = -gains[v];
        for &u in g.neighbors(v) {
            gains[u] = gain(&side, u);
        }
    }
    (side, cut as usize)
}

/// Both endpoints of a maximal matching built by scanning edges in sorted order.
pub fn matching_mvc(g: &Graph) -> OptResult {
    let start = Instant::now();
    let mut matched = vec![false; g.n()];
    let mut cover = Vec::new();
    for &(u, v) in g.edges() {
        if !matched[u] && !matched[v] {
            matched[u] = true;
            matched[v] = true;
            cover.extend([u, v]);
        }
    }
    let k = cover.len();
    OptResult::heuristic(cover, k, start)
}

/// One pass over a seeded random vertex order: a vertex joins the independent
/// set iff no earlier neighbour did. The cover is the complement.
pub fn list_heuristic(problem: Problem, g: &Graph, seed: u64) -> Result<OptResult, BaselineError> {
    let start = Instant::now();
    if problem == Problem::Mc {
        return Err(BaselineError::Unsupported { method: "list", problem });
    }
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.shuffle(&mut seeding::rng(seed));
    let mut inside = vec![false; g.n()];
    for &v in &order {
        inside[v] = g.neighbors(v).iter().all(|&u| !inside[u]);
    }
    let solution: Vec<usize> = (0..g.n()).filter(|&v| inside[v] == (problem == Problem::Mis)).collect();
    let k = solution.len();
    Ok(OptResult::heuristic(solution, k, start))
}

/// Per-vertex state of the tree vertex-cover heuristic.
///
/// `x_v ∈ {−ε, +1}` marks inactive/active and `y_v ∈ {−1, 0, +ε}` marks
/// not-in-cover / undecided / in-cover.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeHeuristicState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub epsilon: f64,
    pub round: usize,
}

impl TreeHeuristicState {
    pub fn new(g: &Graph) -> Self {
        let epsilon = 1.0 / (g.max_degree() as f64 + 1.0);
        Self { x: vec![-epsilon; g.n()], y: vec![0.0; g.n()], epsilon, round: 0 }
    }

    /// One synchronous round.
    pub fn advance(&mut self, g: &Graph) {
        let eps = self.epsilon;
        let mut x = vec![0.0; g.n()];
        let mut y = vec![0.0; g.n()];
        for v in 0..g.n() {
            let sx: f64 = g.neighbors(v).iter().map(|&u| self.x[u]).sum();
            if sx >= -eps {
                x[v] = 1.0;
                let sy: f64 = g.neighbors(v).iter().map(|&u| self.y[u]).sum();
                y[v] = if sy < 0.0 { eps } else { -1.0 };
            } else {
                x[v] = -eps;
                y[v] = 0.0;
            }
        }
        self.x = x;
        self.y = y;
        self.round += 1;
    }
}

/// Runs the heuristic for `rounds` rounds with `ε = 1/(Δ+1)` and returns the
/// aggregate `Σ_v ȳ_v` with `ȳ_v = mean_i (y_v(i) + 1)/(1 + ε)`, and its
/// nearest integer.
pub fn tree_mvc_heuristic(g: &Graph, rounds: usize) -> Result<(f64, usize), BaselineError> {
    if !g.is_tree() {
        return Err(BaselineError::NotATree);
    }
    if rounds == 0 {
        return Err(BaselineError::ZeroRounds);
    }
    let mut st = TreeHeuristicState::new(g);
    let mut acc = vec![0.0; g.n()];
    for _ in 0..rounds {
        st.advance(g);
        for (a, &y) in acc.iter_mut().zip(&st.y) {
            *a += (y + 1.0) / (1.0 + st.epsilon);
        }
    }
    let total: f64 = acc.iter().map(|a| a / rounds as f64).sum();
    Ok((total, total.round() as usize))
}

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Exact optimum by branch and bound. When the node budget runs out the best
/// incumbent is returned with `exact == false`.
pub fn exact(problem: Problem, g: &Graph, budget: u64) -> OptResult {
    let start = Instant::now();
    let mut res = match problem {
        Problem::Mvc | Problem::Mis => {
            let (set, nodes, complete) = max_independent_set(g, budget);
            let solution = if problem == Problem::Mis {
                set
            } else {
                let mut inside = vec![false; g.n()];
                set.iter().for_each(|&v| inside[v] = true);
                (0..g.n()).filter(|&v| !inside[v]).collect()
            };
            OptResult { value: solution.len(), solution, exact: complete, nodes, wall: Duration::ZERO }
        }
        Problem::Mc => max_cut(g, budget),
    };
    res.solution.sort_unstable();
    res.wall = start.elapsed();
    res
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut b = Self::empty(n);
        (0..n).for_each(|v| b.insert(v));
        b
    }

    #[inline]
    fn insert(&mut self, v: usize) {
        self.0[v / 64] |= 1 << (v % 64);
    }

    #[inline]
    fn remove(&mut self, v: usize) {
        self.0[v / 64] &= !(1 << (v % 64));
    }

    #[inline]
    fn contains(&self, v: usize) -> bool {
        self.0[v / 64] >> (v % 64) & 1 == 1
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    #[inline]
    fn and_len(&self, other: &Bits) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    fn intersect(&mut self, other: &Bits) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a &= b);
    }

    fn subtract(&mut self, other: &Bits) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a &= !b);
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                (w != 0).then(|| {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    i * 64 + b
                })
            })
        })
    }
}

/// Vertex-cover search phrased on its complement: every branch decides a
/// vertex `v` either into the cover or its whole neighbourhood into the
/// cover (`v` into the independent set).
struct IndependentSetSearch {
    adj: Vec<Bits>,
    budget: u64,
    nodes: u64,
    exhausted: bool,
    chosen: Vec<usize>,
    best: Vec<usize>,
}

fn max_independent_set(g: &Graph, budget: u64) -> (Vec<usize>, u64, bool) {
    let n = g.n();
    let adj: Vec<Bits> = (0..n)
        .map(|v| {
            let mut b = Bits::empty(n);
            g.neighbors(v).iter().for_each(|&u| b.insert(u));
            b
        })
        .collect();
    let mut search = IndependentSetSearch {
        adj,
        budget,
        nodes: 0,
        exhausted: false,
        chosen: Vec::new(),
        best: greedy_independent_set(g),
    };
    search.run(Bits::full(n));
    (search.best, search.nodes, !search.exhausted)
}

impl IndependentSetSearch {
    fn take(&mut self, v: usize, p: &mut Bits) {
        self.chosen.push(v);
        p.subtract(&self.adj[v]);
        p.remove(v);
    }

    /// Safe reductions: vertices of degree ≤ 1, and degree-2 vertices whose
    /// neighbours are adjacent, always belong to some maximum independent set.
    fn reduce(&mut self, p: &mut Bits) {
        loop {
            let mut changed = false;
            let snapshot: Vec<usize> = p.ones().collect();
            for v in snapshot {
                if !p.contains(v) {
                    continue;
                }
                let deg = self.adj[v].and_len(p);
                let simplicial = match deg {
                    0 | 1 => true,
                    2 => {
                        let mut nb = self.adj[v].clone();
                        nb.intersect(p);
                        let mut it = nb.ones();
                        let (a, b) = (it.next().unwrap(), it.next().unwrap());
                        self.adj[a].contains(b)
                    }
                    _ => false,
                };
                if simplicial {
                    self.take(v, p);
                    changed = true;
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// Number of cliques in a greedy clique partition of `p`, an upper bound
    /// on its independence number. Low-degree vertices are placed first.
    fn clique_cover_bound(&self, p: &Bits) -> usize {
        let mut order: Vec<(usize, usize)> = p.ones().map(|v| (self.adj[v].and_len(p), v)).collect();
        order.sort_unstable();
        let mut commons: Vec<Bits> = Vec::new();
        for (_, v) in order {
            match commons.iter_mut().find(|c| c.contains(v)) {
                Some(c) => c.intersect(&self.adj[v]),
                None => {
                    let mut c = self.adj[v].clone();
                    c.intersect(p);
                    commons.push(c);
                }
            }
        }
        commons.len()
    }

    fn run(&mut self, mut p: Bits) {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let mark = self.chosen.len();
        self.reduce(&mut p);
        if p.is_empty() {
            if self.chosen.len() > self.best.len() {
                self.best = self.chosen.clone();
            }
            self.chosen.truncate(mark);
            return;
        }
        if self.chosen.len() + self.clique_cover_bound(&p) <= self.best.len() {
            self.chosen.truncate(mark);
            return;
        }
        let v = p
            .ones()
            .max_by(|&a, &b| self.adj[a].and_len(&p).cmp(&self.adj[b].and_len(&p)).then(b.cmp(&a)))
            .expect("non-empty candidate set");

        let mut with_v = p.clone();
        self.take(v, &mut with_v);
        self.run(with_v);
        self.chosen.pop();
        if !self.exhausted {
            p.remove(v);
            self.run(p);
        }
        self.chosen.truncate(mark);
    }
}

/// Max cut by branch and bound over side assignments. The first vertex is
/// fixed to side 0; the bound adds, for every unassigned vertex, its better
/// side's edges into the assigned part, plus every edge among unassigned
/// vertices.
fn max_cut(g: &Graph, budget: u64) -> OptResult {
    let n = g.n();
    let (init_side, init_cut) = local_search_cut(g, vec![false; n]);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));

    struct Search<'a> {
        g: &'a Graph,
        order: Vec<usize>,
        side: Vec<Option<bool>>,
        /// `toward[v][s]`: edges from `v` to assigned vertices on side `s`.
        toward: Vec<[i64; 2]>,
        free_edges: i64,
        cut: i64,
        best: i64,
        best_side: Vec<bool>,
        nodes: u64,
        budget: u64,
        exhausted: bool,
    }

    impl Search<'_> {
        fn bound(&self, depth: usize) -> i64 {
            let slack: i64 = self.order[depth..].iter().map(|&v| self.toward[v][0].max(self.toward[v][1])).sum();
            self.cut + slack + self.free_edges
        }

        fn assign(&mut self, v: usize, s: bool, sign: i64) {
            let si = s as usize;
            self.cut += sign * self.toward[v][1 - si];
            for &u in self.g.neighbors(v) {
                self.toward[u][si] += sign;
                if self.side[u].is_none() {
                    self.free_edges -= sign;
                }
            }
        }

        fn run(&mut self, depth: usize) {
            self.nodes += 1;
            if self.nodes > self.budget {
                self.exhausted = true;
                return;
            }
            if depth == self.order.len() {
                if self.cut > self.best {
                    self.best = self.cut;
                    self.best_side = self.side.iter().map(|s| s.unwrap()).collect();
                }
                return;
            }
            if self.bound(depth) <= self.best {
                return;
            }
            let v = self.order[depth];
            let sides: &[bool] = if depth == 0 {
                &[false]
            } else if self.toward[v][0] >= self.toward[v][1] {
                &[true, false]
            } else {
                &[false, true]
            };
            for &s in sides {
                self.side[v] = Some(s);
                self.assign(v, s, 1);
                self.run(depth + 1);
                self.assign(v, s, -1);
                self.side[v] = None;
                if self.exhausted {
                    return;
                }
            }
        }
    }

    let mut search = Search {
        g,
        order,
        side: vec![None; n],
        toward: vec![[0, 0]; n],
        free_edges: g.m() as i64,
        cut: 0,
        best: init_cut as i64,
        best_side: init_side,
        nodes: 0,
        budget,
        exhausted: false,
    };
    if n > 0 {
        search.run(0);
    }
    // Report the side without the first-ordered vertex's complement ambiguity.
    let solution: Vec<usize> = (0..n).filter(|&v| search.best_side[v]).collect();
    OptResult {
        value: search.best as usize,
        solution,
        exact: !search.exhausted,
        nodes: search.nodes,
        wall: Duration::ZERO,
    }
}
