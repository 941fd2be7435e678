use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graph2seq::baselines;
use graph2seq::dynamics;
use graph2seq::graphs::{self, Fixture, GenSpec, Graph};
use graph2seq::harness::{self, ExperimentConfig, Summary};
use graph2seq::model::{self, GRADCHECK_REL_TOL};
use graph2seq::rl::{self, AdamConfig, Problem, TrainConfig};

const EQUIV_FILTER_TOL: f64 = 1e-9;
const EQUIV_ROUND_TRIP_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "g2s", version, about = "Graph2Seq Q-learning for vertex cover, max cut and independent set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph and write it as an edge list
    Gen {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, env = "G2S_SEED")]
        seed: Option<u64>,
        /// Output path; standard output when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network with Q-learning on random graphs
    Train(TrainArgs),
    /// Run an experiment config and write per-instance results as CSV
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's worker count
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a classical heuristic on an edge-list graph
    Baseline {
        #[arg(long)]
        method: BaselineMethod,
        #[arg(long)]
        problem: Problem,
        #[arg(long)]
        graph: PathBuf,
        /// Seed for the randomised list heuristic
        #[arg(long, env = "G2S_SEED")]
        seed: Option<u64>,
        /// Rounds for the tree heuristic (default 4n)
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Solve exactly by branch and bound
    Exact {
        #[arg(long)]
        problem: Problem,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = baselines::DEFAULT_NODE_BUDGET)]
        budget: u64,
    },
    /// Compare analytic gradients with central finite differences
    Gradcheck {
        #[arg(long, env = "G2S_SEED")]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        cases: usize,
    },
    /// Compare spatial filters with their converted spectral form
    EquivCheck {
        /// Largest filter order
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Largest graph size
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Largest feature dimension
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, env = "G2S_SEED")]
        seed: u64,
    },
    /// List the built-in fixtures, optionally checking their optimal covers
    Fixtures {
        #[arg(long)]
        verify: bool,
        /// Write every fixture as `<name>.el` into this directory
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BaselineMethod {
    Greedy,
    Matching,
    List,
    Tree,
}

#[derive(Args)]
struct GraphArgs {
    /// er, regular, bipartite, grid, tree, greedy-worst, planted-cover or fixture
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Planted cover size
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    extra: Option<usize>,
    #[arg(long)]
    attach_p: Option<f64>,
    #[arg(long)]
    inner_p: Option<f64>,
    /// Fixture name
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    problem: Problem,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    t: usize,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_start: f64,
    #[arg(long, default_value_t = 0.05)]
    eps_end: f64,
    #[arg(long, default_value_t = 10_000)]
    eps_decay: usize,
    /// Number of distinct training graphs
    #[arg(long, default_value_t = 1000)]
    pool: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 50_000)]
    replay: usize,
    #[arg(long, env = "G2S_SEED")]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV
    #[arg(long)]
    log: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Check(String),
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("--{flag} is required for kind `{kind}`")))
}

impl GraphArgs {
    fn spec(&self, seed: Option<u64>) -> Result<GenSpec, Failure> {
        let kind = self.kind.as_str();
        let seed_for = |seed: Option<u64>| need(seed, "seed", kind);
        let spec = match kind {
            "er" => {
                GenSpec::ErdosRenyi { n: need(self.n, "n", kind)?, p: need(self.p, "p", kind)?, seed: seed_for(seed)? }
            }
            "bipartite" => {
                GenSpec::Bipartite { n: need(self.n, "n", kind)?, p: need(self.p, "p", kind)?, seed: seed_for(seed)? }
            }
            "regular" => GenSpec::Regular {
                n: need(self.n, "n", kind)?,
                degree: need(self.degree, "degree", kind)?,
                seed: seed_for(seed)?,
            },
            "tree" => GenSpec::Tree { n: need(self.n, "n", kind)?, seed: seed_for(seed)? },
            "grid" => GenSpec::Grid { rows: need(self.rows, "rows", kind)?, cols: need(self.cols, "cols", kind)? },
            "greedy-worst" => GenSpec::GreedyWorst { n: need(self.n, "n", kind)? },
            "planted-cover" => GenSpec::PlantedCover {
                k: need(self.k, "k", kind)?,
                extra: need(self.extra, "extra", kind)?,
                attach_p: need(self.attach_p, "attach-p", kind)?,
                inner_p: need(self.inner_p, "inner-p", kind)?,
                seed: seed_for(seed)?,
            },
            "fixture" => GenSpec::Fixture(need(self.name.as_deref(), "name", kind)?.parse::<Fixture>().map_err(usage)?),
            other => return Err(usage(format!("unknown graph kind `{other}`"))),
        };
        spec.validate().map_err(usage)?;
        Ok(spec)
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<Graph, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    graphs::parse_edge_list(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn join(solution: &[usize]) -> String {
    solution.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_gen(stdout: &mut dyn Write, graph: &GraphArgs, seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let spec = graph.spec(seed)?;
    let g = graphs::generate(&spec).map_err(usage)?;
    let text = graphs::write_edge_list(&g);
    match out {
        Some(path) => write_file(path, &text),
        None => {
            let _ = write!(stdout, "{text}");
            Ok(())
        }
    }
}

fn cmd_train(stdout: &mut dyn Write, a: &TrainArgs) -> CmdResult {
    let spec = a.graph.spec(Some(0))?;
    let mut cfg = TrainConfig::new(a.problem, spec, a.iters, a.seed);
    cfg.t_train = a.t;
    cfg.d = a.d;
    cfg.adam = AdamConfig { lr: a.lr, ..AdamConfig::default() };
    cfg.eps_start = a.eps_start;
    cfg.eps_end = a.eps_end;
    cfg.eps_decay = a.eps_decay;
    cfg.pool_size = a.pool;
    cfg.batch_size = a.batch;
    cfg.replay_capacity = a.replay;
    cfg.validate().map_err(usage)?;
    let (params, log) = rl::train(&cfg).map_err(|e| Failure::Check(e.to_string()))?;
    model::save_checkpoint(&params, &a.out).map_err(usage)?;
    if let Some(path) = &a.log {
        write_file(path, &log.to_csv())?;
    }
    let tail = log.rows.len().saturating_sub(1000);
    let recent = &log.rows[tail..];
    let mean = recent.iter().map(|r| r.episode_objective).sum::<f64>() / recent.len().max(1) as f64;
    let _ = writeln!(
        stdout,
        "iterations={} final_epsilon={:.6} mean_objective_last_{}={mean:.6}",
        log.rows.len(),
        cfg.epsilon(a.iters),
        recent.len()
    );
    Ok(())
}

fn cmd_eval(stdout: &mut dyn Write, config: &Path, out: &Path, jobs: Option<usize>) -> CmdResult {
    let mut cfg = ExperimentConfig::load(config).map_err(usage)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
        cfg.validate().map_err(usage)?;
    }
    let (records, summary): (_, Summary) = harness::run_experiment(&cfg, out).map_err(|e| match e {
        harness::HarnessError::Validation(_) | harness::HarnessError::Config { .. } => usage(e),
        other => Failure::Check(other.to_string()),
    })?;
    let _ = writeln!(stdout, "{} records written to {}", records.len(), out.display());
    let _ = write!(stdout, "{}", summary.render());
    Ok(())
}

fn cmd_baseline(
    stdout: &mut dyn Write,
    method: BaselineMethod,
    problem: Problem,
    path: &Path,
    seed: Option<u64>,
    rounds: Option<usize>,
) -> CmdResult {
    let g = read_graph(path)?;
    let res = match method {
        BaselineMethod::Greedy => baselines::greedy(problem, &g),
        BaselineMethod::Matching => {
            if problem != Problem::Mvc {
                return Err(usage("the matching heuristic only solves mvc"));
            }
            baselines::matching_mvc(&g)
        }
        BaselineMethod::List => {
            let seed = seed.ok_or_else(|| usage("--seed is required for the list heuristic"))?;
            baselines::list_heuristic(problem, &g, seed).map_err(usage)?
        }
        BaselineMethod::Tree => {
            if problem != Problem::Mvc {
                return Err(usage("the tree heuristic only solves mvc"));
            }
            let (raw, rounded) = baselines::tree_mvc_heuristic(&g, rounds.unwrap_or(4 * g.n())).map_err(usage)?;
            let _ = writeln!(stdout, "value={rounded} raw={raw}");
            return Ok(());
        }
    };
    let _ = writeln!(stdout, "value={}", res.value);
    let _ = writeln!(stdout, "solution={}", join(&res.solution));
    Ok(())
}

fn cmd_exact(stdout: &mut dyn Write, problem: Problem, path: &Path, budget: u64) -> CmdResult {
    let g = read_graph(path)?;
    let res = baselines::exact(problem, &g, budget);
    let _ = writeln!(stdout, "value={} exact={} nodes={}", res.value, res.exact, res.nodes);
    let _ = writeln!(stdout, "solution={}", join(&res.solution));
    Ok(())
}

fn cmd_gradcheck(stdout: &mut dyn Write, seed: u64, cases: usize) -> CmdResult {
    if cases == 0 {
        return Err(usage("--cases must be positive"));
    }
    let suite = model::gradient_check_suite(seed, cases).map_err(|e| Failure::Check(e.to_string()))?;
    let _ = writeln!(
        stdout,
        "cases={} skipped_at_kinks={} coordinates={} max_rel_error={:e} max_abs_error={:e}",
        suite.cases, suite.skipped, suite.coordinates, suite.max_rel_error, suite.max_abs_error
    );
    if suite.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("max relative error {:e} >= {GRADCHECK_REL_TOL:e}", suite.max_rel_error)))
    }
}

fn cmd_equiv(stdout: &mut dyn Write, k: usize, n: usize, d: usize, cases: usize, seed: u64) -> CmdResult {
    if k == 0 || n == 0 || d == 0 || cases == 0 {
        return Err(usage("--k, --n, --d and --cases must be positive"));
    }
    let r = dynamics::equivalence_suite(seed, cases, n, k, d).map_err(|e| Failure::Check(e.to_string()))?;
    let _ = writeln!(
        stdout,
        "cases={} max_filter_diff={:e} max_round_trip_diff={:e}",
        r.cases, r.max_filter_diff, r.max_round_trip_diff
    );
    if r.max_filter_diff < EQUIV_FILTER_TOL && r.max_round_trip_diff <= EQUIV_ROUND_TRIP_TOL {
        Ok(())
    } else {
        Err(Failure::Check("spatial and spectral filters disagree".into()))
    }
}

fn cmd_fixtures(stdout: &mut dyn Write, verify: bool, out_dir: Option<&Path>) -> CmdResult {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
        for f in Fixture::ALL {
            write_file(&dir.join(format!("{}.el", f.name())), &graphs::write_edge_list(&graphs::fixture(f)))?;
        }
    }
    if !verify {
        for f in Fixture::ALL {
            let g = graphs::fixture(f);
            let _ = writeln!(stdout, "{} n={} m={}", f.name(), g.n(), g.m());
        }
        return Ok(());
    }
    let expected = [(Fixture::R1, 5), (Fixture::R2, 6), (Fixture::LgBalanced, 9), (Fixture::LgSkewed, 10)];
    let mut line = Vec::new();
    let mut ok = true;
    for (f, want) in expected {
        let res = baselines::exact(Problem::Mvc, &graphs::fixture(f), baselines::DEFAULT_NODE_BUDGET);
        ok &= res.exact && res.value == want;
        line.push(format!("{} mvc={}", f.name(), res.value));
    }
    let _ = writeln!(stdout, "{}", line.join(" "));
    if ok {
        Ok(())
    } else {
        Err(Failure::Check("fixture optimum mismatch".into()))
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                return 2;
            }
            let _ = write!(stdout, "{rendered}");
            return 0;
        }
    };
    let result = match &cli.command {
        Command::Gen { graph, seed, out } => cmd_gen(stdout, graph, *seed, out.as_deref()),
        Command::Train(a) => cmd_train(stdout, a),
        Command::Eval { config, out, jobs } => cmd_eval(stdout, config, out, *jobs),
        Command::Baseline { method, problem, graph, seed, rounds } => {
            cmd_baseline(stdout, *method, *problem, graph, *seed, *rounds)
        }
        Command::Exact { problem, graph, budget } => cmd_exact(stdout, *problem, graph, *budget),
        Command::Gradcheck { seed, cases } => cmd_gradcheck(stdout, *seed, *cases),
        Command::EquivCheck { k, n, d, cases, seed } => cmd_equiv(stdout, *k, *n, *d, *cases, *seed),
        Command::Fixtures { verify, out_dir } => cmd_fixtures(stdout, *verify, out_dir.as_deref()),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            let _ = writeln!(
                stderr,
                "usage: g2s <gen|train|eval|baseline|exact|gradcheck|equiv-check|fixtures> [flags]; see g2s --help"
            );
            2
        }
        Err(Failure::Check(msg)) => {
            let _ = writeln!(stderr, "check failed: {msg}");
            1
        }
    }
}

fn main() -> ExitCode {
    let code = run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
