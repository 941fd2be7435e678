//! Acceptance gate: one PASS/FAIL line per criterion, a report file under the
//! cargo target temp dir, and a non-zero exit if any criterion fails.
//!
//! Set `G2S_ACCEPT_CHECKPOINT` to a checkpoint produced by the same training
//! recipe to skip the long training run of the learning criteria.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use graph2seq::baselines::{self, DEFAULT_NODE_BUDGET};
use graph2seq::dynamics::{self, evolve, Basis, GcnnFilterParams, Normalization};
use graph2seq::graphs::{fixture, generate, Fixture, GenSpec, Graph};
use graph2seq::harness::{self, EvalRecord, ExperimentConfig, RefKind, Summary};
use graph2seq::model::{self, backward, forward, ParamSet};
use graph2seq::rl::{self, cut_value, is_independent_set, is_vertex_cover, Problem, TrainConfig};
use graph2seq::seeding;
use graph2seq::tensor::Matrix;

struct Gate {
    lines: Vec<String>,
    failed: usize,
    notes: usize,
}

impl Gate {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
        let line = format!(
            "{} criterion {id:>2} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.failed += (!pass) as usize;
        self.lines.push(line);
    }

    fn note(&mut self, id: u32, text: &str) {
        let line = format!("NOTE criterion {id:>2}: {text}");
        println!("{line}");
        self.notes += 1;
        self.lines.push(line);
    }
}

fn out_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn brute_force(problem: Problem, g: &Graph) -> usize {
    let n = g.n();
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << n) {
        let inside = |v: usize| mask >> v & 1 == 1;
        let size = mask.count_ones() as usize;
        let value = match problem {
            Problem::Mvc => g.edges().iter().all(|&(u, v)| inside(u) || inside(v)).then_some(size),
            Problem::Mis => g.edges().iter().all(|&(u, v)| !(inside(u) && inside(v))).then_some(size),
            Problem::Mc => Some(g.edges().iter().filter(|&&(u, v)| inside(u) != inside(v)).count()),
        };
        if let Some(v) = value {
            best = Some(match (problem, best) {
                (_, None) => v,
                (Problem::Mvc, Some(b)) => b.min(v),
                (_, Some(b)) => b.max(v),
            });
        }
    }
    best.unwrap()
}

fn tree_dp_mvc(g: &Graph) -> usize {
    fn visit(g: &Graph, v: usize, parent: usize) -> (usize, usize) {
        let (mut excluded, mut included) = (0, 1);
        for &u in g.neighbors(v) {
            if u != parent {
                let (ue, ui) = visit(g, u, v);
                excluded += ui;
                included += ue.min(ui);
            }
        }
        (excluded, included)
    }
    let (e, i) = visit(g, 0, usize::MAX);
    e.min(i)
}

fn dense(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..rows).map(|r| (0..cols).map(|c| f(r, c)).collect()).collect()
}

fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    dense(a.len(), b[0].len(), |r, c| (0..b.len()).map(|k| a[r][k] * b[k][c]).sum())
}

/// `σ(Σ_k P^k X W_kᵀ + b)` with `P` built as a dense matrix.
fn dense_filter(g: &Graph, x: &Matrix, p: &GcnnFilterParams) -> Vec<Vec<f64>> {
    let n = g.n();
    let scale: Vec<f64> = (0..n)
        .map(|v| match (p.normalization, g.degree(v)) {
            (Normalization::Unnormalized, _) => 1.0,
            (_, 0) => 0.0,
            (_, d) => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let adj = dense(n, n, |u, v| if g.has_edge(u, v) { scale[u] * scale[v] } else { 0.0 });
    let op = match p.basis {
        Basis::Adjacency => adj,
        Basis::Laplacian => dense(n, n, |u, v| (u == v) as u8 as f64 - adj[u][v]),
    };
    let mut power = dense(x.rows(), x.cols(), |r, c| x.row(r)[c]);
    let d_out = p.bias.len();
    let mut out = dense(n, d_out, |_, c| p.bias[c]);
    for (k, w) in p.weights.iter().enumerate() {
        if k > 0 {
            power = dense_mul(&op, &power);
        }
        let wt = dense(w.cols(), w.rows(), |r, c| w.row(c)[r]);
        let term = dense_mul(&power, &wt);
        for (o, t) in out.iter_mut().flatten().zip(term.iter().flatten()) {
            *o += t;
        }
    }
    out.iter_mut().flatten().for_each(|y| *y = y.max(0.0));
    out
}

fn max_dense_diff(m: &Matrix, d: &[Vec<f64>]) -> f64 {
    (0..m.rows())
        .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
        .map(|(r, c)| (m.row(r)[c] - d[r][c]).abs())
        .fold(0.0, f64::max)
}

fn criterion_1(gate: &mut Gate) {
    let start = Instant::now();
    let expected = [(Fixture::R1, 5), (Fixture::R2, 6), (Fixture::LgBalanced, 9), (Fixture::LgSkewed, 10)];
    let mut detail = Vec::new();
    let mut ok = true;
    for (f, want) in expected {
        let r = baselines::exact(Problem::Mvc, &fixture(f), DEFAULT_NODE_BUDGET);
        ok &= r.exact && r.value == want && is_vertex_cover(&fixture(f), &r.solution);
        detail.push(format!("{}={} (want {want})", f.name(), r.value));
    }
    let elapsed = start.elapsed();
    gate.record(1, "fixture optima", ok && elapsed < Duration::from_secs(1), detail.join(", "), elapsed);
}

fn criterion_2(gate: &mut Gate) {
    let start = Instant::now();
    let (r1, r2) = (fixture(Fixture::R1), fixture(Fixture::R2));
    let mut max_diff = 0.0f64;
    let mut ok = r1.n() == r2.n();
    for seed in 0..20 {
        let p = ParamSet::random(1 + (seed as usize % 8), seed).evolution();
        let a = evolve(&r1, &p, &vec![false; r1.n()], 15, None).unwrap();
        let b = evolve(&r2, &p, &vec![false; r2.n()], 15, None).unwrap();
        for (xa, xb) in a.states.iter().zip(&b.states) {
            max_diff = max_diff.max(xa.max_abs_diff(xb));
            for v in 0..xa.rows() {
                ok &= xa.row(v) == xa.row(0);
            }
        }
        ok &= a.states.len() == 16 && b.states.len() == 16;
    }
    let elapsed = start.elapsed();
    gate.record(
        2,
        "symmetry collapse",
        ok && max_diff == 0.0 && elapsed < Duration::from_secs(1),
        format!("max |x_R1 - x_R2| = {max_diff:e} over 20 parameter draws, T = 0..15"),
        elapsed,
    );
}

fn criterion_3(gate: &mut Gate) {
    let start = Instant::now();
    let mut rng = seeding::rng(31);
    let (mut filter_diff, mut oracle_diff, mut round_trip) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..50u64 {
        let n = rng.random_range(1..=20);
        let g = generate(&GenSpec::ErdosRenyi { n, p: rng.random_range(0.1..0.5), seed: case }).unwrap();
        let k = rng.random_range(1..=5);
        let (d_in, d_out) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let mut uniform = |r, c| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let spatial = GcnnFilterParams {
            weights: (0..k).map(|_| uniform(d_out, d_in)).collect(),
            bias: uniform(d_out, 1).as_slice().to_vec(),
            basis: Basis::Adjacency,
            normalization: if case % 2 == 0 { Normalization::Normalized } else { Normalization::Unnormalized },
            activation: dynamics::Activation::Relu,
        };
        let x = uniform(n, d_in);
        let spectral = dynamics::spatial_to_spectral(&spatial).unwrap();
        let back = dynamics::spectral_to_spatial(&spectral).unwrap();
        for (a, b) in spatial.weights.iter().zip(&back.weights) {
            round_trip = round_trip.max(a.max_abs_diff(b));
        }
        let ys = dynamics::spatial_filter(&g, &x, &spatial).unwrap();
        let yl = dynamics::spectral_filter(&g, &x, &spectral).unwrap();
        filter_diff = filter_diff.max(ys.max_abs_diff(&yl));
        oracle_diff = oracle_diff.max(max_dense_diff(&ys, &dense_filter(&g, &x, &spatial)));
        oracle_diff = oracle_diff.max(max_dense_diff(&yl, &dense_filter(&g, &x, &spectral)));
    }
    let elapsed = start.elapsed();
    gate.record(
        3,
        "spatial/spectral equivalence",
        filter_diff <= 1e-9 && oracle_diff <= 1e-9 && round_trip <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("50 cases: filter diff {filter_diff:e}, dense-oracle diff {oracle_diff:e}, round trip {round_trip:e}"),
        elapsed,
    );
}

fn criterion_4(gate: &mut Gate) {
    const H: f64 = 1e-5;
    let start = Instant::now();
    let mut rng = seeding::rng(41);
    let (mut checked, mut skipped, mut coords) = (0, 0, 0);
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    let mut draw = 0u64;
    while checked < 24 {
        draw += 1;
        let n = rng.random_range(1..=9);
        let g = generate(&GenSpec::ErdosRenyi { n, p: rng.random_range(0.2..0.6), seed: draw }).unwrap();
        let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let d = rng.random_range(1..=4);
        let steps = rng.random_range(1..=5);
        let p = ParamSet::random(d, 1000 + draw);
        let action = rng.random_range(0..n);
        let target = rng.random_range(-3.0..3.0);
        let (_, grads) = backward(&g, &flags, &p, steps, action, target).unwrap();
        let base = forward(&g, &flags, &p, steps).unwrap().activation_signature();
        let mut probe = p.clone();
        let mut kink = false;
        let mut rel = 0.0f64;
        let mut abs = 0.0f64;
        for i in 0..p.as_flat().len() {
            let mut loss = |delta: f64| {
                probe.as_flat_mut()[i] = p.as_flat()[i] + delta;
                let f = forward(&g, &flags, &probe, steps).unwrap();
                probe.as_flat_mut()[i] = p.as_flat()[i];
                kink |= f.activation_signature() != base;
                (f.q.values[action] - target).powi(2)
            };
            let numeric = (loss(H) - loss(-H)) / (2.0 * H);
            let e = (grads.as_flat()[i] - numeric).abs();
            abs = abs.max(e);
            if e > 1e-7 {
                rel = rel.max(e / grads.as_flat()[i].abs().max(numeric.abs()));
            }
        }
        if kink {
            skipped += 1;
            continue;
        }
        checked += 1;
        coords += p.as_flat().len();
        max_rel = max_rel.max(rel);
        max_abs = max_abs.max(abs);
    }
    let elapsed = start.elapsed();
    gate.record(
        4,
        "gradient correctness",
        max_rel < 1e-4 && elapsed < Duration::from_secs(30),
        format!("{checked} instances, {coords} coordinates, max rel err {max_rel:e}, max abs err {max_abs:e}, {skipped} kink draws replaced"),
        elapsed,
    );
}

fn criterion_5(gate: &mut Gate) {
    let start = Instant::now();
    let mut rng = seeding::rng(51);
    let mut mismatches = Vec::new();
    for i in 0..200u64 {
        let n = rng.random_range(1..=12);
        let g = generate(&GenSpec::ErdosRenyi { n, p: rng.random_range(0.1..0.8), seed: i }).unwrap();
        for problem in Problem::ALL {
            let r = baselines::exact(problem, &g, DEFAULT_NODE_BUDGET);
            let want = brute_force(problem, &g);
            let feasible = match problem {
                Problem::Mvc => is_vertex_cover(&g, &r.solution),
                Problem::Mis => is_independent_set(&g, &r.solution),
                Problem::Mc => {
                    let mut flags = vec![false; n];
                    r.solution.iter().for_each(|&v| flags[v] = true);
                    cut_value(&g, &flags) == r.value
                }
            };
            if !r.exact || r.value != want || !feasible {
                mismatches.push(format!("instance {i} {problem}: {} vs {want}", r.value));
            }
        }
    }
    let elapsed = start.elapsed();
    gate.record(
        5,
        "exact solver vs enumeration",
        mismatches.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "200 graphs x 3 problems, {} mismatches {:?}",
            mismatches.len(),
            mismatches.iter().take(3).collect::<Vec<_>>()
        ),
        elapsed,
    );
}

fn criterion_6(gate: &mut Gate) {
    let start = Instant::now();
    let mut rng = seeding::rng(61);
    let mut wrong = Vec::new();
    for i in 0..100u64 {
        let n = rng.random_range(1..=30);
        let g = generate(&GenSpec::Tree { n, seed: i }).unwrap();
        let (_, rounded) = baselines::tree_mvc_heuristic(&g, 4 * n).unwrap();
        let opt = tree_dp_mvc(&g);
        if rounded != opt {
            wrong.push(format!("tree {i} (n={n}): {rounded} vs {opt}"));
        }
    }
    let elapsed = start.elapsed();
    gate.record(
        6,
        "tree heuristic exactness",
        wrong.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "{}/100 trees match the DP optimum; first misses {:?}",
            100 - wrong.len(),
            wrong.iter().take(3).collect::<Vec<_>>()
        ),
        elapsed,
    );
}

fn criterion_7(gate: &mut Gate) {
    let start = Instant::now();
    let mut rng = seeding::rng(71);
    let (mut worst_matching, mut matching_ok, mut cut_ok) = (0.0f64, true, true);
    let mut worst_cut = f64::INFINITY;
    for i in 0..100u64 {
        let n = rng.random_range(1..=20);
        let g = generate(&GenSpec::ErdosRenyi { n, p: rng.random_range(0.1..0.6), seed: 2 * i }).unwrap();
        let m = baselines::matching_mvc(&g);
        let opt = baselines::exact(Problem::Mvc, &g, DEFAULT_NODE_BUDGET);
        matching_ok &= opt.exact && is_vertex_cover(&g, &m.solution) && m.value <= 2 * opt.value;
        if opt.value > 0 {
            worst_matching = worst_matching.max(m.value as f64 / opt.value as f64);
        }

        let n = rng.random_range(1..=40);
        let g = generate(&GenSpec::ErdosRenyi { n, p: rng.random_range(0.1..0.6), seed: 2 * i + 1 }).unwrap();
        let c = baselines::greedy(Problem::Mc, &g);
        let mut flags = vec![false; n];
        c.solution.iter().for_each(|&v| flags[v] = true);
        cut_ok &= cut_value(&g, &flags) == c.value && 2 * c.value >= g.m();
        if g.m() > 0 {
            worst_cut = worst_cut.min(c.value as f64 / g.m() as f64);
        }
    }
    let elapsed = start.elapsed();
    gate.record(
        7,
        "baseline guarantees",
        matching_ok && cut_ok,
        format!("worst matching/opt {worst_matching:.3} (<= 2), worst greedy cut/m {worst_cut:.3} (>= 0.5)"),
        elapsed,
    );
}

const TRAIN_EPISODES: usize = 50_000;
const SNAPSHOT_EVERY: usize = 10_000;

/// The trained checkpoint, a description of where it came from, and the
/// intermediate snapshots written during training.
fn trained_checkpoint(dir: &Path) -> (PathBuf, String, Vec<(usize, PathBuf)>) {
    if let Ok(path) = std::env::var("G2S_ACCEPT_CHECKPOINT") {
        return (PathBuf::from(&path), format!("reused checkpoint {path}"), Vec::new());
    }
    let cfg = TrainConfig::new(Problem::Mvc, GenSpec::ErdosRenyi { n: 15, p: 0.15, seed: 0 }, TRAIN_EPISODES, 7);
    let start = Instant::now();
    let mut snapshots = Vec::new();
    let (params, log) = rl::train_with_progress(&cfg, |row, p| {
        let done = row.iteration + 1;
        if done % 5000 == 0 {
            eprintln!("  training: {done} episodes, {:.0}s", start.elapsed().as_secs_f64());
        }
        if done % SNAPSHOT_EVERY == 0 && done < TRAIN_EPISODES {
            let path = dir.join(format!("mvc_er15_{done}.ckpt"));
            model::save_checkpoint(p, &path).unwrap();
            snapshots.push((done, path));
        }
    })
    .unwrap();
    let path = dir.join("mvc_er15.ckpt");
    model::save_checkpoint(&params, &path).unwrap();
    std::fs::write(dir.join("mvc_er15_train.csv"), log.to_csv()).unwrap();
    (path, format!("trained {} episodes in {:.0}s", log.rows.len(), start.elapsed().as_secs_f64()), snapshots)
}

/// Mean g2s ratios of the intermediate snapshots on the same instances.
/// Informational only; the gate scores the final checkpoint.
fn snapshot_note(dir: &Path, snapshots: &[(usize, PathBuf)]) -> Option<String> {
    if snapshots.is_empty() {
        return None;
    }
    let mut text = String::from("problem=mvc\nmethods=g2s,exact\nt_max=15\n");
    for (_, path) in snapshots {
        let _ = writeln!(text, "checkpoint={}", path.display());
    }
    text.push_str("graph=er n=25,50,100 p=0.15 instances=20 seed=801\n");
    let (_, summary) = evaluate(dir, "er_mvc_snapshots", &text);
    let parts: Vec<String> = snapshots
        .iter()
        .enumerate()
        .map(|(k, (episodes, _))| {
            let label = if snapshots.len() > 1 { format!("g2s#{k}") } else { "g2s".to_string() };
            let ratios: Vec<String> =
                [25, 50, 100].iter().map(|&n| format!("{:.4}", summary.mean_ratio("er", n, &label).unwrap())).collect();
            format!("{episodes}: [{}]", ratios.join(", "))
        })
        .collect();
    Some(format!("snapshot g2s ratios at n = 25/50/100 (not gated): {}", parts.join("; ")))
}

fn evaluate(dir: &Path, name: &str, text: &str) -> (Vec<EvalRecord>, Summary) {
    let cfg = ExperimentConfig::parse(text, dir).unwrap();
    let (records, summary) = harness::run_experiment(&cfg, &dir.join(format!("{name}.csv"))).unwrap();
    std::fs::write(dir.join(format!("{name}_summary.txt")), summary.render()).unwrap();
    (records, summary)
}

fn all_feasible(records: &[EvalRecord], solutions_ok: bool) -> bool {
    solutions_ok && records.iter().all(|r| r.ref_kind == RefKind::Exact && r.ratio >= 1.0 - 1e-9)
}

/// Independent fixed-T rollouts compared with the varying-T result.
fn check_dominance(p: &ParamSet, graphs: &[Graph], violations: &mut usize, instances: &mut usize, feasible: &mut bool) {
    for g in graphs {
        let best = harness::solve_varying_t(g, p, Problem::Mvc, 15).unwrap();
        *feasible &= is_vertex_cover(g, &best.solution);
        for t in 1..=15 {
            let sol = harness::rollout(g, p, Problem::Mvc, t).unwrap();
            *feasible &= is_vertex_cover(g, &sol);
            if best.solution.len() > sol.len() {
                *violations += 1;
            }
        }
        *instances += 1;
    }
}

fn config_graphs(text: &str, dir: &Path) -> Vec<Graph> {
    let cfg = ExperimentConfig::parse(text, dir).unwrap();
    cfg.graphs.iter().flat_map(|g| g.specs.iter().map(|(_, s)| generate(s).unwrap())).collect()
}

fn criteria_8_to_10(gate: &mut Gate) {
    let dir = out_dir();
    let start = Instant::now();
    let (ckpt, provenance, snapshots) = trained_checkpoint(&dir);
    let p = model::load_checkpoint(&ckpt).unwrap();

    let er_cfg = format!(
        "problem=mvc\ncheckpoint={}\nmethods=g2s,matching,greedy,exact\nt_max=15\ngraph=er n=25,50,100 p=0.15 instances=20 seed=801\n",
        ckpt.display()
    );
    let (er, er_summary) = evaluate(&dir, "er_mvc", &er_cfg);
    let mut ok8 = all_feasible(&er, true);
    let mut parts = Vec::new();
    for n in [25, 50, 100] {
        let g2s = er_summary.mean_ratio("er", n, "g2s").unwrap();
        let matching = er_summary.mean_ratio("er", n, "matching").unwrap();
        let greedy = er_summary.mean_ratio("er", n, "greedy").unwrap();
        ok8 &= g2s <= 1.15 && g2s <= matching;
        parts.push(format!("n={n} g2s {g2s:.4} matching {matching:.4} greedy {greedy:.4}"));
    }
    gate.record(
        8,
        "desk-scale learning (mvc, er)",
        ok8,
        format!("{provenance}; {}", parts.join("; ")),
        start.elapsed(),
    );
    if let Some(note) = snapshot_note(&dir, &snapshots) {
        gate.note(8, &note);
    }

    let start = Instant::now();
    let cross_cfg = format!(
        "problem=mvc\ncheckpoint={}\nmethods=g2s,greedy,exact\nt_max=15\ngraph=regular n=24,48,96 degree=4 instances=20 seed=901\ngraph=bipartite n=24,48,96 p=0.75 instances=20 seed=902\n",
        ckpt.display()
    );
    let (cross, cross_summary) = evaluate(&dir, "cross_mvc", &cross_cfg);
    let graphs = config_graphs(&cross_cfg, &dir);
    let mut feasible = true;
    for g in &graphs {
        feasible &= is_vertex_cover(g, &harness::solve_varying_t(g, &p, Problem::Mvc, 15).unwrap().solution);
    }
    let mut ok9 = all_feasible(&cross, feasible);
    let mut parts = Vec::new();
    for kind in ["regular", "bipartite"] {
        for n in [24, 48, 96] {
            let g2s = cross_summary.mean_ratio(kind, n, "g2s").unwrap();
            let greedy = cross_summary.mean_ratio(kind, n, "greedy").unwrap();
            ok9 &= g2s <= 1.25;
            parts.push(format!("{kind} n={n} g2s {g2s:.4} greedy {greedy:.4}"));
        }
    }
    gate.record(
        9,
        "cross-family generalization",
        ok9,
        format!("all feasible: {feasible}; {}", parts.join("; ")),
        start.elapsed(),
    );

    let start = Instant::now();
    let (mut violations, mut instances, mut feasible) = (0, 0, true);
    let er_graphs = config_graphs(&er_cfg, &dir);
    check_dominance(&p, &er_graphs, &mut violations, &mut instances, &mut feasible);
    check_dominance(&p, &graphs, &mut violations, &mut instances, &mut feasible);
    gate.record(
        10,
        "varying-T dominance",
        violations == 0 && feasible,
        format!("{instances} instances x 15 fixed-T rollouts, {violations} violations"),
        start.elapsed(),
    );
}

fn run_cli(args: &[&str], cwd: &Path) -> (i32, Vec<u8>) {
    let out =
        Command::new(env!("CARGO_BIN_EXE_g2s")).args(args).current_dir(cwd).env_remove("G2S_SEED").output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn criterion_11(gate: &mut Gate) {
    let start = Instant::now();
    let dir = out_dir().join("determinism");
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.join(format!("run{i}"))).collect();
    let mut ok = true;
    let mut compared = 0;
    for run in &runs {
        let _ = std::fs::remove_dir_all(run);
        std::fs::create_dir_all(run).unwrap();
        let cfg = "problem=mvc\ncheckpoint=model.ckpt\nmethods=g2s,greedy,matching,exact\nt_max=6\njobs=2\nrecord_fixed_t=true\ngraph=er n=12,20 p=0.2 instances=3 seed=5\ngraph=tree n=15 instances=2 seed=6\n";
        std::fs::write(run.join("exp.cfg"), cfg).unwrap();
        let commands: [&[&str]; 5] = [
            &["gen", "--kind", "er", "--n", "15", "--p", "0.15", "--seed", "1", "--out", "g.el"],
            &[
                "train",
                "--problem",
                "mvc",
                "--kind",
                "er",
                "--n",
                "12",
                "--p",
                "0.2",
                "--iters",
                "300",
                "--d",
                "8",
                "--seed",
                "7",
                "--out",
                "model.ckpt",
                "--log",
                "train.csv",
            ],
            &["eval", "--config", "exp.cfg", "--out", "results.csv"],
            &["baseline", "--method", "list", "--problem", "mvc", "--graph", "g.el", "--seed", "3"],
            &["exact", "--problem", "mis", "--graph", "g.el"],
        ];
        let mut stdout = Vec::new();
        for c in commands {
            let (code, out) = run_cli(c, run);
            ok &= code == 0;
            stdout.extend(out);
        }
        std::fs::write(run.join("stdout.txt"), stdout).unwrap();
    }
    for file in ["g.el", "model.ckpt", "train.csv", "results.csv", "stdout.txt"] {
        let a = std::fs::read(runs[0].join(file)).unwrap_or_default();
        let b = std::fs::read(runs[1].join(file)).unwrap_or_else(|_| vec![0]);
        ok &= !a.is_empty() && a == b;
        compared += 1;
    }
    gate.record(
        11,
        "CLI determinism",
        ok,
        format!("{compared} output files byte-identical across two runs"),
        start.elapsed(),
    );
}

fn main() {
    let mut gate = Gate { lines: Vec::new(), failed: 0, notes: 0 };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criteria_8_to_10(&mut gate);
    criterion_11(&mut gate);

    let mut report = String::new();
    for line in &gate.lines {
        let _ = writeln!(report, "{line}");
    }
    let criteria = gate.lines.len() - gate.notes;
    let _ = writeln!(report, "{} of {criteria} criteria passed", criteria - gate.failed);
    let path = out_dir().join("report.txt");
    std::fs::write(&path, &report).unwrap();
    println!("{} of {criteria} criteria passed; report at {}", criteria - gate.failed, path.display());
    if gate.failed > 0 {
        std::process::exit(1);
    }
}
