//! Greedy rollouts of a trained network, the varying-length evaluation, and a
//! config-driven experiment runner that scores every method against an exact
//! or best-known reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::baselines::{self, BaselineError, OptResult, DEFAULT_NODE_BUDGET};
use crate::graphs::{generate, Fixture, GenSpec, Graph, GraphError};
use crate::model::{self, ModelError, ParamSet};
use crate::rl::{argmax_over, EnvState, Problem, RlError};
use crate::seeding;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("cannot score against a zero reference")]
    ZeroReference,
    #[error("T_max must be at least 1")]
    ZeroTMax,
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Size of a solution in the problem's natural units (cover size, cut size,
/// independent-set size).
pub fn solution_size(problem: Problem, g: &Graph, solution: &[usize]) -> usize {
    match problem {
        Problem::Mvc | Problem::Mis => solution.len(),
        Problem::Mc => {
            let mut flags = vec![false; g.n()];
            solution.iter().for_each(|&v| flags[v] = true);
            crate::rl::cut_value(g, &flags)
        }
    }
}

/// One greedy (ε = 0) episode with `steps`-long embeddings.
///
/// Max cut stops once no feasible vertex has a positive Q-value and returns
/// the best-objective prefix of the visited sequence (shortest on ties).
pub fn rollout(g: &Graph, p: &ParamSet, problem: Problem, steps: usize) -> Result<Vec<usize>, HarnessError> {
    let mut st = EnvState::new(problem, g);
    let mut best_len = 0;
    let mut best_value = st.value();
    loop {
        let feasible = st.feasible_actions();
        if feasible.is_empty() {
            break;
        }
        let q = model::q_values(g, st.flags(), p, steps)?;
        let a = argmax_over(&q, &feasible).expect("feasible set is non-empty");
        if problem == Problem::Mc && q[a] <= 0.0 {
            break;
        }
        st.step(a)?;
        if st.value() > best_value {
            best_value = st.value();
            best_len = st.steps_taken();
        }
    }
    let mut sel = st.selected().to_vec();
    if problem == Problem::Mc {
        sel.truncate(best_len);
    }
    Ok(sel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaryingT {
    /// Selected vertices in insertion order.
    pub solution: Vec<usize>,
    /// Objective of `solution` (`−|S|` for mvc).
    pub objective: f64,
    pub t_used: usize,
    /// Objective of the fixed-length rollout for each `T = 1..=T_max`.
    pub per_t: Vec<f64>,
}

/// Runs a greedy rollout for every `T = 1..=T_max` and keeps the best
/// objective, preferring the smallest `T` on ties.
pub fn solve_varying_t(g: &Graph, p: &ParamSet, problem: Problem, t_max: usize) -> Result<VaryingT, HarnessError> {
    if t_max == 0 {
        return Err(HarnessError::ZeroTMax);
    }
    let mut best: Option<VaryingT> = None;
    let mut per_t = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let sol = rollout(g, p, problem, t)?;
        let obj = crate::rl::objective(problem, g, &sol)?;
        per_t.push(obj);
        if best.as_ref().is_none_or(|b| obj > b.objective) {
            best = Some(VaryingT { solution: sol, objective: obj, t_used: t, per_t: Vec::new() });
        }
    }
    let mut best = best.expect("t_max >= 1");
    best.per_t = per_t;
    Ok(best)
}

/// Ratio oriented so that 1 is optimal and larger is worse: `size/opt` for
/// minimum vertex cover, `opt/value` for the maximisation problems.
pub fn approx_ratio(problem: Problem, value: f64, reference: f64) -> Result<f64, HarnessError> {
    if !(reference > 0.0) {
        return Err(HarnessError::ZeroReference);
    }
    Ok(match problem {
        Problem::Mvc => value / reference,
        Problem::Mc | Problem::Mis => {
            if value > 0.0 {
                reference / value
            } else {
                f64::INFINITY
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    G2s,
    Greedy,
    Matching,
    List,
    Tree,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::G2s => "g2s",
            Method::Greedy => "greedy",
            Method::Matching => "matching",
            Method::List => "list",
            Method::Tree => "tree",
            Method::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [Method::G2s, Method::Greedy, Method::Matching, Method::List, Method::Tree, Method::Exact]
            .into_iter()
            .find(|m| m.name() == s)
    }

    fn supports(self, problem: Problem) -> bool {
        match self {
            Method::Matching | Method::Tree => problem == Problem::Mvc,
            Method::List => problem != Problem::Mc,
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefKind {
    Exact,
    Incumbent,
}

impl RefKind {
    pub fn name(self) -> &'static str {
        match self {
            RefKind::Exact => "exact",
            RefKind::Incumbent => "incumbent",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub graph_id: String,
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub problem: Problem,
    pub method: String,
    pub value: f64,
    pub reference: f64,
    pub ref_kind: RefKind,
    pub ratio: f64,
    pub t_used: Option<usize>,
    pub wall_ms: f64,
    pub seed: Option<u64>,
}

pub const CSV_HEADER: &str = "graph_id,kind,n,m,problem,method,value,reference,ref_kind,ratio,t_used,wall_ms,seed";

impl EvalRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.graph_id,
            self.kind,
            self.n,
            self.m,
            self.problem,
            self.method,
            self.value,
            self.reference,
            self.ref_kind.name(),
            self.ratio,
            self.t_used.map(|t| t.to_string()).unwrap_or_default(),
            self.wall_ms,
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
        )
    }
}

pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// One `graph=` line: a recipe expanded over sizes and instances.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphGroup {
    pub kind: String,
    pub specs: Vec<(usize, GenSpec)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub checkpoints: Vec<PathBuf>,
    pub methods: Vec<Method>,
    pub t_max: usize,
    /// Instances with at most this many vertices are scored against the
    /// exact optimum, larger ones against the best incumbent.
    pub exact_cutoff: usize,
    pub seed: u64,
    pub budget: u64,
    pub jobs: usize,
    /// Record wall-clock time; off by default so output is reproducible.
    pub timing: bool,
    /// Add one `g2s@T=k` row per fixed sequence length.
    pub record_fixed_t: bool,
    pub graphs: Vec<GraphGroup>,
}

fn parse_kv(tokens: &[&str], line: usize) -> Result<BTreeMap<String, String>, HarnessError> {
    tokens
        .iter()
        .map(|t| {
            t.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| HarnessError::Config { line, reason: format!("expected key=value, got `{t}`") })
        })
        .collect()
}

fn parse_graph_line(value: &str, line: usize, base_seed: u64) -> Result<GraphGroup, HarnessError> {
    let err = |reason: String| HarnessError::Config { line, reason };
    let mut tokens = value.split_ascii_whitespace();
    let kind = tokens.next().ok_or_else(|| err("empty graph line".into()))?.to_string();
    let mut kv = parse_kv(&tokens.collect::<Vec<_>>(), line)?;
    let mut take = |key: &str| kv.remove(key);
    fn num<T: std::str::FromStr>(v: Option<String>, key: &str, line: usize) -> Result<T, HarnessError> {
        let v = v.ok_or_else(|| HarnessError::Config { line, reason: format!("missing `{key}`") })?;
        v.parse().map_err(|_| HarnessError::Config { line, reason: format!("bad value `{v}` for `{key}`") })
    }
    let instances: usize = match take("instances") {
        Some(v) => num(Some(v), "instances", line)?,
        None => 1,
    };
    let seed: u64 = match take("seed") {
        Some(v) => num(Some(v), "seed", line)?,
        None => base_seed,
    };
    let sizes = |v: Option<String>| -> Result<Vec<usize>, HarnessError> {
        let v = v.ok_or_else(|| err("missing `n`".into()))?;
        v.split(',').map(|s| num(Some(s.trim().to_string()), "n", line)).collect()
    };
    let inst_seed = |n: usize, i: usize| seeding::derive(seed, &[n as u64, i as u64]);
    let mut specs = Vec::new();
    match kind.as_str() {
        "er" | "bipartite" | "regular" | "tree" | "greedy-worst" => {
            let ns = sizes(take("n"))?;
            let p: Option<f64> = match kind.as_str() {
                "er" | "bipartite" => Some(num(take("p"), "p", line)?),
                _ => None,
            };
            let degree: Option<usize> = (kind == "regular").then(|| num(take("degree"), "degree", line)).transpose()?;
            for &n in &ns {
                for i in 0..instances {
                    let s = inst_seed(n, i);
                    let spec = match kind.as_str() {
                        "er" => GenSpec::ErdosRenyi { n, p: p.unwrap(), seed: s },
                        "bipartite" => GenSpec::Bipartite { n, p: p.unwrap(), seed: s },
                        "regular" => GenSpec::Regular { n, degree: degree.unwrap(), seed: s },
                        "tree" => GenSpec::Tree { n, seed: s },
                        _ => GenSpec::GreedyWorst { n },
                    };
                    specs.push((i, spec));
                }
            }
        }
        "grid" => {
            let rows: usize = num(take("rows"), "rows", line)?;
            let cols: usize = num(take("cols"), "cols", line)?;
            specs.push((0, GenSpec::Grid { rows, cols }));
        }
        "planted-cover" => {
            let k: usize = num(take("k"), "k", line)?;
            let extra: usize = num(take("extra"), "extra", line)?;
            let attach_p: f64 = num(take("attach_p"), "attach_p", line)?;
            let inner_p: f64 = num(take("inner_p"), "inner_p", line)?;
            for i in 0..instances {
                specs.push((i, GenSpec::PlantedCover { k, extra, attach_p, inner_p, seed: inst_seed(k, i) }));
            }
        }
        "fixture" => {
            let name = take("name").ok_or_else(|| err("missing `name`".into()))?;
            let f: Fixture = name.parse().map_err(|e: GraphError| err(e.to_string()))?;
            specs.push((0, GenSpec::Fixture(f)));
        }
        other => return Err(err(format!("unknown graph kind `{other}`"))),
    }
    if let Some(extra) = kv.keys().next() {
        return Err(err(format!("unknown key `{extra}` for kind `{kind}`")));
    }
    for (_, s) in &specs {
        s.validate().map_err(|e| err(e.to_string()))?;
    }
    Ok(GraphGroup { kind, specs })
}

fn parse_bool(v: &str, line: usize) -> Result<bool, HarnessError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(HarnessError::Config { line, reason: format!("bad boolean `{v}`") }),
    }
}

impl ExperimentConfig {
    /// Parses the flat `key=value` format; `#` starts a comment. Relative
    /// checkpoint paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut problem = None;
        let mut checkpoints = Vec::new();
        let mut methods = None;
        let mut t_max = 15;
        let mut exact_cutoff = None;
        let mut seed = 0u64;
        let mut budget = DEFAULT_NODE_BUDGET;
        let mut jobs = 1;
        let mut timing = false;
        let mut record_fixed_t = false;
        let mut graph_lines = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |reason: String| HarnessError::Config { line, reason };
            let (key, value) =
                content.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad integer `{v}` for `{key}`")));
            match key {
                "problem" => problem = Some(value.parse::<Problem>().map_err(err)?),
                "checkpoint" => checkpoints.push(base_dir.join(value)),
                "methods" => {
                    let ms: Result<Vec<Method>, _> = value
                        .split(',')
                        .map(|m| Method::parse(m.trim()).ok_or_else(|| err(format!("unknown method `{}`", m.trim()))))
                        .collect();
                    methods = Some(ms?);
                }
                "t_max" => t_max = int(value)? as usize,
                "exact_cutoff" => exact_cutoff = Some(int(value)? as usize),
                "seed" => seed = int(value)?,
                "budget" => budget = int(value)?,
                "jobs" => jobs = int(value)? as usize,
                "timing" => timing = parse_bool(value, line)?,
                "record_fixed_t" => record_fixed_t = parse_bool(value, line)?,
                "graph" => graph_lines.push((line, value.to_string())),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }

        let problem = problem.ok_or_else(|| HarnessError::Validation("missing `problem`".into()))?;
        let graphs =
            graph_lines.iter().map(|(line, v)| parse_graph_line(v, *line, seed)).collect::<Result<Vec<_>, _>>()?;
        let cfg = Self {
            problem,
            checkpoints,
            methods: methods.ok_or_else(|| HarnessError::Validation("missing `methods`".into()))?,
            t_max,
            exact_cutoff: exact_cutoff.unwrap_or(if problem == Problem::Mc { 24 } else { 60 }),
            seed,
            budget,
            jobs,
            timing,
            record_fixed_t,
            graphs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: String| Err(HarnessError::Validation(s));
        if self.methods.is_empty() {
            return bad("`methods` is empty".into());
        }
        if self.methods.contains(&Method::G2s) && self.checkpoints.is_empty() {
            return bad("method g2s needs at least one `checkpoint`".into());
        }
        if let Some(m) = self.methods.iter().find(|m| !m.supports(self.problem)) {
            return bad(format!("method {} does not support problem {}", m.name(), self.problem));
        }
        if self.t_max == 0 {
            return bad("`t_max` must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("`jobs` must be at least 1".into());
        }
        if self.graphs.is_empty() {
            return bad("no `graph` lines".into());
        }
        Ok(())
    }
}

/// Mean ratio per (kind, n, method), in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub kind: String,
    pub n: usize,
    pub method: String,
    pub instances: usize,
    pub mean_ratio: f64,
    pub exact_refs: usize,
}

impl Summary {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut rows: Vec<SummaryRow> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for r in records {
            let pos = rows.iter().position(|s| s.kind == r.kind && s.n == r.n && s.method == r.method);
            let i = pos.unwrap_or_else(|| {
                rows.push(SummaryRow {
                    kind: r.kind.clone(),
                    n: r.n,
                    method: r.method.clone(),
                    instances: 0,
                    mean_ratio: 0.0,
                    exact_refs: 0,
                });
                sums.push(0.0);
                rows.len() - 1
            });
            rows[i].instances += 1;
            rows[i].exact_refs += (r.ref_kind == RefKind::Exact) as usize;
            sums[i] += r.ratio;
        }
        for (row, s) in rows.iter_mut().zip(sums) {
            row.mean_ratio = s / row.instances as f64;
        }
        Self { rows }
    }

    pub fn mean_ratio(&self, kind: &str, n: usize, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.kind == kind && r.n == n && r.method == method).map(|r| r.mean_ratio)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<16} {:>6} {:<12} {:>9} {:>10} {:>11}\n",
            "kind", "n", "method", "instances", "mean_ratio", "exact_refs"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:<12} {:>9} {:>10.4} {:>11}",
                r.kind, r.n, r.method, r.instances, r.mean_ratio, r.exact_refs
            );
        }
        out
    }
}

struct Instance {
    graph_id: String,
    kind: String,
    spec: GenSpec,
}

struct MethodOutcome {
    method: String,
    value: usize,
    t_used: Option<usize>,
    wall_ms: f64,
}

fn method_label(base: &str, checkpoint: usize, checkpoints: usize) -> String {
    if checkpoints > 1 {
        format!("{base}#{checkpoint}")
    } else {
        base.to_string()
    }
}

fn evaluate_instance(
    cfg: &ExperimentConfig,
    models: &[ParamSet],
    inst: &Instance,
) -> Result<Vec<EvalRecord>, HarnessError> {
    let g = generate(&inst.spec)?;
    let problem = cfg.problem;
    let seed = inst.spec.seed();
    let mut outcomes: Vec<MethodOutcome> = Vec::new();
    let mut exact_result: Option<OptResult> = None;
    let ms = |t: Instant| if cfg.timing { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    for &method in &cfg.methods {
        match method {
            Method::G2s => {
                for (k, p) in models.iter().enumerate() {
                    let start = Instant::now();
                    let res = solve_varying_t(&g, p, problem, cfg.t_max)?;
                    let wall_ms = ms(start);
                    let label = method_label("g2s", k, models.len());
                    outcomes.push(MethodOutcome {
                        method: label.clone(),
                        value: solution_size(problem, &g, &res.solution),
                        t_used: Some(res.t_used),
                        wall_ms,
                    });
                    if cfg.record_fixed_t {
                        for (t, obj) in res.per_t.iter().enumerate() {
                            let size = if problem == Problem::Mvc { -obj } else { *obj };
                            outcomes.push(MethodOutcome {
                                method: format!("{label}@T={}", t + 1),
                                value: size as usize,
                                t_used: Some(t + 1),
                                wall_ms: 0.0,
                            });
                        }
                    }
                }
            }
            Method::Tree => {
                if g.is_tree() {
                    let start = Instant::now();
                    let (_, rounded) = baselines::tree_mvc_heuristic(&g, 4 * g.n())?;
                    outcomes.push(MethodOutcome {
                        method: "tree".into(),
                        value: rounded,
                        t_used: None,
                        wall_ms: ms(start),
                    });
                }
            }
            Method::Exact => {
                let start = Instant::now();
                let r = baselines::exact(problem, &g, cfg.budget);
                outcomes.push(MethodOutcome {
                    method: "exact".into(),
                    value: r.value,
                    t_used: None,
                    wall_ms: ms(start),
                });
                exact_result = Some(r);
            }
            Method::Greedy | Method::Matching | Method::List => {
                let start = Instant::now();
                let r = match method {
                    Method::Greedy => baselines::greedy(problem, &g),
                    Method::Matching => baselines::matching_mvc(&g),
                    _ => baselines::list_heuristic(problem, &g, seeding::derive(cfg.seed, &[seed.unwrap_or(0)]))?,
                };
                outcomes.push(MethodOutcome {
                    method: method.name().into(),
                    value: r.value,
                    t_used: None,
                    wall_ms: ms(start),
                });
            }
        }
    }

    if exact_result.is_none() && g.n() <= cfg.exact_cutoff {
        exact_result = Some(baselines::exact(problem, &g, cfg.budget));
    }
    let (reference, ref_kind) = match &exact_result {
        Some(r) if r.exact && (g.n() <= cfg.exact_cutoff || cfg.methods.contains(&Method::Exact)) => {
            (r.value, RefKind::Exact)
        }
        _ => {
            // Tree estimates are not solutions, so they never set the incumbent.
            let candidates = outcomes
                .iter()
                .filter(|o| o.method != "tree")
                .map(|o| o.value)
                .chain(exact_result.as_ref().map(|r| r.value));
            let best = if problem == Problem::Mvc { candidates.min() } else { candidates.max() };
            (best.unwrap_or(0), RefKind::Incumbent)
        }
    };

    outcomes
        .into_iter()
        .map(|o| {
            let ratio = if reference == 0 && o.value == 0 {
                1.0
            } else {
                approx_ratio(problem, o.value as f64, reference as f64)?
            };
            Ok(EvalRecord {
                graph_id: inst.graph_id.clone(),
                kind: inst.kind.clone(),
                n: g.n(),
                m: g.m(),
                problem,
                method: o.method,
                value: o.value as f64,
                reference: reference as f64,
                ref_kind,
                ratio,
                t_used: o.t_used,
                wall_ms: o.wall_ms,
                seed,
            })
        })
        .collect()
}

fn instances(cfg: &ExperimentConfig) -> Vec<Instance> {
    let mut out = Vec::new();
    for (gi, group) in cfg.graphs.iter().enumerate() {
        for (i, spec) in &group.specs {
            let size = match spec {
                GenSpec::ErdosRenyi { n, .. }
                | GenSpec::Regular { n, .. }
                | GenSpec::Bipartite { n, .. }
                | GenSpec::Tree { n, .. }
                | GenSpec::GreedyWorst { n } => format!("{n}"),
                GenSpec::Grid { rows, cols } => format!("{rows}x{cols}"),
                GenSpec::PlantedCover { k, extra, .. } => format!("{k}+{extra}"),
                GenSpec::Fixture(_) => "0".into(),
            };
            out.push(Instance {
                graph_id: format!("g{gi}-{}-{size}-{i}", group.kind),
                kind: spec.kind().to_string(),
                spec: spec.clone(),
            });
        }
    }
    out
}

/// Evaluates every configured method on every instance. Records come back in
/// config order whatever the number of worker threads.
pub fn run_records(cfg: &ExperimentConfig) -> Result<Vec<EvalRecord>, HarnessError> {
    cfg.validate()?;
    let models: Vec<ParamSet> = if cfg.methods.contains(&Method::G2s) {
        cfg.checkpoints.iter().map(|p| model::load_checkpoint(p)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let insts = instances(cfg);
    let jobs = cfg.jobs.min(insts.len()).max(1);
    let mut results: Vec<Option<Result<Vec<EvalRecord>, HarnessError>>> = (0..insts.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, inst) in results.iter_mut().zip(&insts) {
            *slot = Some(evaluate_instance(cfg, &models, inst));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= insts.len() {
                        break;
                    }
                    let r = evaluate_instance(cfg, &models, &insts[i]);
                    done.lock().expect("no worker panicked")[i] = Some(r);
                });
            }
        });
    }
    let mut records = Vec::new();
    for r in results {
        records.extend(r.expect("every instance evaluated")?);
    }
    Ok(records)
}

/// Runs the experiment, writes the CSV to `out` and returns the summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<EvalRecord>, Summary), HarnessError> {
    let records = run_records(cfg)?;
    std::fs::write(out, records_to_csv(&records))
        .map_err(|source| HarnessError::Io { path: out.display().to_string(), source })?;
    let summary = Summary::from_records(&records);
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::fixture;
    use crate::rl::is_vertex_cover;

    #[test]
    fn ratio_examples() {
        assert_eq!(approx_ratio(Problem::Mvc, 10.0, 10.0).unwrap(), 1.0);
        assert!((approx_ratio(Problem::Mvc, 12.0, 10.0).unwrap() - 1.2).abs() < 1e-15);
        assert!((approx_ratio(Problem::Mc, 40.0, 44.0).unwrap() - 1.1).abs() < 1e-15);
        assert!(matches!(approx_ratio(Problem::Mis, 3.0, 0.0), Err(HarnessError::ZeroReference)));
    }

    #[test]
    fn varying_t_dominates_each_fixed_t() {
        let g = generate(&GenSpec::ErdosRenyi { n: 20, p: 0.2, seed: 4 }).unwrap();
        for problem in Problem::ALL {
            let p = ParamSet::random(8, 5);
            let res = solve_varying_t(&g, &p, problem, 6).unwrap();
            assert_eq!(res.per_t.len(), 6);
            assert!(res.per_t.iter().all(|&o| res.objective >= o));
            assert_eq!(res.per_t[res.t_used - 1], res.objective);
            assert!(res.per_t[..res.t_used - 1].iter().all(|&o| o < res.objective));
            let single = solve_varying_t(&g, &p, problem, 1).unwrap();
            assert_eq!(single.solution, rollout(&g, &p, problem, 1).unwrap());
        }
    }

    #[test]
    fn rollout_on_r1_gives_a_cover_of_at_least_five() {
        let g = fixture(Fixture::R1);
        for seed in 0..5 {
            let res = solve_varying_t(&g, &ParamSet::random(16, seed), Problem::Mvc, 15).unwrap();
            assert!(is_vertex_cover(&g, &res.solution));
            assert!(res.solution.len() >= 5);
        }
    }

    #[test]
    fn greedy_and_exact_config_gives_ten_rows() {
        let text = "problem=mvc\nmethods=greedy,exact\ngraph=er n=12 p=0.3 instances=5 seed=3\n";
        let cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        let records = run_records(&cfg).unwrap();
        assert_eq!(records.len(), 10);
        assert!(records.iter().all(|r| r.ratio >= 1.0 - 1e-9 && r.ref_kind == RefKind::Exact));
        let csv = records_to_csv(&records);
        assert!(csv.starts_with(CSV_HEADER));
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let (value, reference, ratio): (f64, f64, f64) =
                (f[6].parse().unwrap(), f[7].parse().unwrap(), f[9].parse().unwrap());
            assert!((approx_ratio(Problem::Mvc, value, reference).unwrap() - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn g2s_without_checkpoint_is_rejected() {
        let text = "problem=mvc\nmethods=g2s\ngraph=er n=12 p=0.3 instances=1\n";
        assert!(matches!(ExperimentConfig::parse(text, Path::new(".")), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let text = "problem=mvc\nmethods=greedy\n\ngraph=er n=12 p=1.5\n";
        assert!(matches!(ExperimentConfig::parse(text, Path::new(".")), Err(HarnessError::Config { line: 4, .. })));
        let text = "problem=mvc\nmethods=greedy,magic\n";
        assert!(matches!(ExperimentConfig::parse(text, Path::new(".")), Err(HarnessError::Config { line: 2, .. })));
        let text = "problem=mc\nmethods=matching\ngraph=er n=5 p=0.3\n";
        assert!(matches!(ExperimentConfig::parse(text, Path::new(".")), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn parallel_jobs_do_not_change_output() {
        let base = "problem=mis\nmethods=greedy,list,exact\ngraph=er n=10,14 p=0.3 instances=3 seed=1\ngraph=tree n=9 instances=2\n";
        let one = records_to_csv(&run_records(&ExperimentConfig::parse(base, Path::new(".")).unwrap()).unwrap());
        let three = format!("{base}jobs=3\n");
        let many = records_to_csv(&run_records(&ExperimentConfig::parse(&three, Path::new(".")).unwrap()).unwrap());
        assert_eq!(one, many);
    }

    #[test]
    fn incumbent_reference_above_cutoff() {
        let text = "problem=mvc\nmethods=greedy,matching\nexact_cutoff=5\ngraph=er n=12 p=0.3 instances=2\n";
        let records = run_records(&ExperimentConfig::parse(text, Path::new(".")).unwrap()).unwrap();
        assert!(records.iter().all(|r| r.ref_kind == RefKind::Incumbent));
        assert!(records.iter().any(|r| r.ratio == 1.0));
    }
}
