//! Undirected simple graphs in compressed adjacency form, the edge-list text
//! format, seeded generators and the small hand-built fixture graphs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid edge ({u}, {v}): {reason}")]
    InvalidEdge { u: usize, v: usize, reason: &'static str },
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GraphError {
    GraphError::InvalidParameter { field, reason: reason.into() }
}

/// Immutable undirected graph on vertices `0..n`.
///
/// The edge list is kept sorted with `u < v` in every pair, so two graphs
/// compare equal exactly when their edge sets are equal.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range ids.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::InvalidEdge { u, v, reason: "vertex id out of range" });
            }
            if u == v {
                return Err(GraphError::InvalidEdge { u, v, reason: "self-loop" });
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            let (u, v) = w[0];
            return Err(GraphError::InvalidEdge { u, v, reason: "duplicate edge" });
        }
        Ok(Self::from_sorted_unique(n, list))
    }

    fn from_sorted_unique(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![0usize; 2 * edges.len()];
        // Edges are sorted by (u, v), so pushing v into u's list and u into
        // v's list in this order leaves every list ascending.
        for &(u, v) in &edges {
            adjacency[fill[u]] = v;
            fill[u] += 1;
        }
        for &(u, v) in &edges {
            adjacency[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..n {
            adjacency[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { n, edges, offsets, adjacency }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_sorted_unique(n, Vec::new())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Sorted `(u, v)` pairs with `u < v`.
    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list Γ(v).
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }

    pub fn is_tree(&self) -> bool {
        self.n >= 1 && self.m() + 1 == self.n && self.is_connected()
    }

    /// The graph with vertex `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length must equal n");
        Self::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
            .expect("relabelling by a permutation preserves simplicity")
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, m={}, edges={:?})", self.n, self.m(), self.edges)
    }
}

/// Parses the edge-list format: a header line `n m` followed by `m` lines `u v`.
pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (line_no, header) = lines
        .find(|(_, l)| !l.is_empty())
        .ok_or(GraphError::Parse { line: 1, reason: "missing `n m` header".into() })?;
    let (n, m) = parse_pair(header, line_no, "header")?;
    let mut edges = Vec::with_capacity(m);
    let mut seen = std::collections::HashSet::with_capacity(m);
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if edges.len() == m {
            return Err(GraphError::Parse { line: line_no, reason: format!("more than {m} edge lines") });
        }
        let (u, v) = parse_pair(line, line_no, "edge")?;
        let bad = |reason: &str| GraphError::Parse { line: line_no, reason: reason.to_string() };
        if u >= n || v >= n {
            return Err(bad("vertex id out of range"));
        }
        if u == v {
            return Err(bad("self-loop"));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(bad("duplicate edge"));
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        let line = text.lines().count().max(1);
        return Err(GraphError::Parse { line, reason: format!("expected {m} edges, found {}", edges.len()) });
    }
    Graph::from_edges(n, edges)
}

fn parse_pair(line: &str, line_no: usize, what: &str) -> Result<(usize, usize), GraphError> {
    let mut it = line.split_ascii_whitespace();
    let mut next = || {
        it.next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| GraphError::Parse { line: line_no, reason: format!("malformed {what} line `{line}`") })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(GraphError::Parse { line: line_no, reason: format!("trailing tokens on {what} line") });
    }
    Ok((a, b))
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(8 * (g.m() + 1));
    out.push_str(&format!("{} {}\n", g.n(), g.m()));
    for &(u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

/// Named hard-coded graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixture {
    /// 4-regular graph on 8 vertices with minimum vertex cover 5.
    R1,
    /// 4-regular graph on 8 vertices with minimum vertex cover 6.
    R2,
    /// Balanced 7-node binary tree, every node blown up into a 3-chain.
    LgBalanced,
    /// Skewed 7-node binary tree, every node blown up into a 3-chain.
    LgSkewed,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::R1, Fixture::R2, Fixture::LgBalanced, Fixture::LgSkewed];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::R1 => "r1",
            Fixture::R2 => "r2",
            Fixture::LgBalanced => "lg-balanced",
            Fixture::LgSkewed => "lg-skewed",
        }
    }
}

impl FromStr for Fixture {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fixture::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| GraphError::UnknownFixture(s.to_string()))
    }
}

const R1_EDGES: [(usize, usize); 16] = [
    (0, 3),
    (0, 5),
    (0, 6),
    (0, 7),
    (1, 2),
    (1, 4),
    (1, 6),
    (1, 7),
    (2, 3),
    (2, 5),
    (2, 6),
    (3, 4),
    (3, 5),
    (4, 5),
    (4, 7),
    (6, 7),
];

const R2_EDGES: [(usize, usize); 16] = [
    (0, 1),
    (0, 2),
    (0, 4),
    (0, 7),
    (1, 4),
    (1, 5),
    (1, 6),
    (2, 3),
    (2, 4),
    (2, 7),
    (3, 5),
    (3, 6),
    (3, 7),
    (4, 6),
    (5, 6),
    (5, 7),
];

// Parent of each node in the 7-node binary trees (root = 0).
const BALANCED_PARENTS: [Option<usize>; 7] = [None, Some(0), Some(0), Some(1), Some(1), Some(2), Some(2)];
const SKEWED_PARENTS: [Option<usize>; 7] = [None, Some(0), Some(0), Some(1), Some(1), Some(3), Some(3)];

fn chain_blowup(parents: &[Option<usize>], chain: usize) -> Graph {
    let mut edges = Vec::new();
    for (b, parent) in parents.iter().enumerate() {
        let head = b * chain;
        for i in 0..chain - 1 {
            edges.push((head + i, head + i + 1));
        }
        if let Some(p) = parent {
            let parent_tail = p * chain + chain - 1;
            edges.push((parent_tail, head));
        }
    }
    Graph::from_edges(parents.len() * chain, edges).expect("fixture is simple")
}

pub fn fixture(which: Fixture) -> Graph {
    match which {
        Fixture::R1 => Graph::from_edges(8, R1_EDGES).expect("fixture is simple"),
        Fixture::R2 => Graph::from_edges(8, R2_EDGES).expect("fixture is simple"),
        Fixture::LgBalanced => chain_blowup(&BALANCED_PARENTS, 3),
        Fixture::LgSkewed => chain_blowup(&SKEWED_PARENTS, 3),
    }
}

pub fn fixture_by_name(name: &str) -> Result<Graph, GraphError> {
    Ok(fixture(name.parse()?))
}

/// Cap on full restarts of the pairing model.
pub const REGULAR_RETRY_CAP: usize = 1000;

/// Generator recipe. Random kinds carry their own seed, so `generate` is a
/// pure function of the spec.
#[derive(Clone, Debug, PartialEq)]
pub enum GenSpec {
    ErdosRenyi {
        n: usize,
        p: f64,
        seed: u64,
    },
    Regular {
        n: usize,
        degree: usize,
        seed: u64,
    },
    /// Two classes of sizes `⌊n/2⌋` and `⌈n/2⌉`; each cross pair is an edge with probability `p`.
    Bipartite {
        n: usize,
        p: f64,
        seed: u64,
    },
    Grid {
        rows: usize,
        cols: usize,
    },
    /// Uniform labelled tree via a Prüfer sequence.
    Tree {
        n: usize,
        seed: u64,
    },
    /// Johnson's bipartite family on which max-degree greedy is a `Θ(log n)` approximation.
    GreedyWorst {
        n: usize,
    },
    /// A planted set `0..k` which is the unique minimum vertex cover.
    PlantedCover {
        k: usize,
        extra: usize,
        attach_p: f64,
        inner_p: f64,
        seed: u64,
    },
    Fixture(Fixture),
}

impl GenSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            GenSpec::ErdosRenyi { .. } => "er",
            GenSpec::Regular { .. } => "regular",
            GenSpec::Bipartite { .. } => "bipartite",
            GenSpec::Grid { .. } => "grid",
            GenSpec::Tree { .. } => "tree",
            GenSpec::GreedyWorst { .. } => "greedy-worst",
            GenSpec::PlantedCover { .. } => "planted-cover",
            GenSpec::Fixture(f) => match f {
                Fixture::R1 => "fixture-r1",
                Fixture::R2 => "fixture-r2",
                Fixture::LgBalanced => "fixture-lg-balanced",
                Fixture::LgSkewed => "fixture-lg-skewed",
            },
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            GenSpec::ErdosRenyi { seed, .. }
            | GenSpec::Regular { seed, .. }
            | GenSpec::Bipartite { seed, .. }
            | GenSpec::Tree { seed, .. }
            | GenSpec::PlantedCover { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Same recipe with a different seed (no-op for deterministic kinds).
    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            GenSpec::ErdosRenyi { seed, .. }
            | GenSpec::Regular { seed, .. }
            | GenSpec::Bipartite { seed, .. }
            | GenSpec::Tree { seed, .. }
            | GenSpec::PlantedCover { seed, .. } => *seed = new_seed,
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let check_p = |field: &'static str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(invalid(field, format!("{p} is not in [0, 1]")))
            }
        };
        match *self {
            GenSpec::ErdosRenyi { p, .. } | GenSpec::Bipartite { p, .. } => check_p("p", p),
            GenSpec::Regular { n, degree, .. } => {
                if degree >= n.max(1) && !(n == 0 && degree == 0) {
                    Err(invalid("degree", format!("degree {degree} must be below n = {n}")))
                } else if (n * degree) % 2 != 0 {
                    Err(invalid("degree", format!("degree·n = {} must be even", n * degree)))
                } else {
                    Ok(())
                }
            }
            GenSpec::Grid { rows, cols } => {
                if rows == 0 {
                    Err(invalid("rows", "must be at least 1"))
                } else if cols == 0 {
                    Err(invalid("cols", "must be at least 1"))
                } else {
                    Ok(())
                }
            }
            GenSpec::Tree { n, .. } => {
                if n == 0 {
                    Err(invalid("n", "a tree needs at least one vertex"))
                } else {
                    Ok(())
                }
            }
            GenSpec::GreedyWorst { n } => {
                if n < 2 {
                    Err(invalid("n", "needs at least 2 left vertices"))
                } else {
                    Ok(())
                }
            }
            GenSpec::PlantedCover { k, attach_p, inner_p, .. } => {
                if k == 0 {
                    return Err(invalid("k", "planted set must be non-empty"));
                }
                check_p("attach_p", attach_p)?;
                check_p("inner_p", inner_p)
            }
            GenSpec::Fixture(_) => Ok(()),
        }
    }
}

pub fn generate(spec: &GenSpec) -> Result<Graph, GraphError> {
    spec.validate()?;
    match *spec {
        GenSpec::ErdosRenyi { n, p, seed } => Ok(erdos_renyi(n, p, seed)),
        GenSpec::Regular { n, degree, seed } => random_regular(n, degree, seed),
        GenSpec::Bipartite { n, p, seed } => Ok(random_bipartite(n, p, seed)),
        GenSpec::Grid { rows, cols } => Ok(grid(rows, cols)),
        GenSpec::Tree { n, seed } => Ok(random_tree(n, seed)),
        GenSpec::GreedyWorst { n } => Ok(greedy_worst(n)),
        GenSpec::PlantedCover { k, extra, attach_p, inner_p, seed } => {
            Ok(planted_cover(k, extra, attach_p, inner_p, seed))
        }
        GenSpec::Fixture(f) => Ok(fixture(f)),
    }
}

fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = seeding::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_sorted_unique(n, edges)
}

fn random_bipartite(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = seeding::rng(seed);
    let left = n / 2;
    let mut edges = Vec::new();
    for u in 0..left {
        for v in left..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_sorted_unique(n, edges)
}

/// Pairing model: shuffle `n·d` half-edges, pair them up, restart on any
/// self-loop or multi-edge.
fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = seeding::rng(seed);
    let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..REGULAR_RETRY_CAP {
        points.shuffle(&mut rng);
        let mut edges: Vec<(usize, usize)> = points.chunks_exact(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect();
        if edges.iter().any(|&(u, v)| u == v) {
            continue;
        }
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                continue 'attempt;
            }
        }
        return Ok(Graph::from_sorted_unique(n, edges));
    }
    Err(GraphError::GenerationFailed(format!(
        "no simple {degree}-regular pairing on {n} vertices within {REGULAR_RETRY_CAP} attempts"
    )))
}

fn grid(rows: usize, cols: usize) -> Graph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::from_edges(rows * cols, edges).expect("grid is simple")
}

fn random_tree(n: usize, seed: u64) -> Graph {
    if n <= 2 {
        return Graph::from_edges(n, (n == 2).then_some((0, 1))).expect("tiny tree");
    }
    let mut rng = seeding::rng(seed);
    let prufer: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &v in &prufer {
        degree[v] += 1;
    }
    let mut leaves: std::collections::BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in &prufer {
        let leaf = leaves.pop_first().expect("a Prüfer step always has a leaf");
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let rest: Vec<usize> = leaves.into_iter().collect();
    edges.push((rest[0], rest[1]));
    Graph::from_edges(n, edges).expect("Prüfer decoding yields a simple tree")
}

/// Left part `0..n`; for each `i` in `2..=n` there are `⌊n/i⌋` right vertices
/// of degree `i`, the `j`-th adjacent to left block `[j·i, (j+1)·i)`.
fn greedy_worst(n: usize) -> Graph {
    let mut edges = Vec::new();
    let mut next = n;
    for i in 2..=n {
        for j in 0..n / i {
            for l in j * i..(j + 1) * i {
                edges.push((l, next));
            }
            next += 1;
        }
    }
    Graph::from_edges(next, edges).expect("greedy-worst graph is simple")
}

/// Vertices `0..k` are the planted cover. Each planted vertex gets two
/// private pendant leaves, which forces it into every minimum cover; `extra`
/// further vertices form an independent set, each joined to one uniform
/// planted vertex plus every other planted vertex with probability
/// `attach_p`; pairs inside the planted set are joined with probability
/// `inner_p`. Every edge touches `0..k`, so the cover has size exactly `k`.
fn planted_cover(k: usize, extra: usize, attach_p: f64, inner_p: f64, seed: u64) -> Graph {
    let mut rng = seeding::rng(seed);
    let mut edges = Vec::new();
    for u in 0..k {
        for v in u + 1..k {
            if rng.random::<f64>() < inner_p {
                edges.push((u, v));
            }
        }
    }
    let mut next = k;
    for p in 0..k {
        edges.push((p, next));
        edges.push((p, next + 1));
        next += 2;
    }
    for _ in 0..extra {
        let anchor = rng.random_range(0..k);
        for p in 0..k {
            if p == anchor || rng.random::<f64>() < attach_p {
                edges.push((p, next));
            }
        }
        next += 1;
    }
    Graph::from_edges(next, edges).expect("planted-cover graph is simple")
}
