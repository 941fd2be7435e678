//! Whole-pipeline checks: config runs, CSV recomputation and properties that
//! span several modules.

use std::collections::BTreeMap;

use proptest::prelude::*;

use crate::baselines::{self, DEFAULT_NODE_BUDGET};
use crate::graphs::{generate, GenSpec};
use crate::harness::{self, approx_ratio, ExperimentConfig, RefKind, CSV_HEADER};
use crate::model::{save_checkpoint, ParamSet};
use crate::rl::{Problem, ReplayBuffer, Transition};
use crate::seeding;

#[test]
fn size_grid_summary_matches_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&ParamSet::random(8, 3), &dir.path().join("m.ckpt")).unwrap();
    let text = "problem=mvc\ncheckpoint=m.ckpt\nmethods=g2s,greedy\nt_max=2\njobs=4\ngraph=er n=25,50,100,200 p=0.15 instances=20 seed=11\n";
    let cfg = ExperimentConfig::parse(text, dir.path()).unwrap();
    let out = dir.path().join("r.csv");
    let (records, summary) = harness::run_experiment(&cfg, &out).unwrap();
    assert_eq!(records.len(), 4 * 20 * 2);

    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let mut sums: BTreeMap<(usize, String), (f64, usize)> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 13);
        let n: usize = f[2].parse().unwrap();
        let (value, reference, ratio): (f64, f64, f64) =
            (f[6].parse().unwrap(), f[7].parse().unwrap(), f[9].parse().unwrap());
        assert!((value / reference - ratio).abs() <= 1e-12);
        assert_eq!(f[8], if n <= 60 { "exact" } else { "incumbent" });
        if f[8] == "exact" {
            assert!(ratio >= 1.0 - 1e-9);
        }
        let e = sums.entry((n, f[5].to_string())).or_default();
        e.0 += ratio;
        e.1 += 1;
    }
    for ((n, method), (sum, count)) in sums {
        assert_eq!(count, 20);
        let mean = summary.mean_ratio("er", n, &method).unwrap();
        assert!((mean - sum / count as f64).abs() <= 1e-12, "{n} {method}");
    }
}

#[test]
fn fixed_t_rows_never_beat_the_varying_t_row() {
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&ParamSet::random(6, 8), &dir.path().join("a.ckpt")).unwrap();
    save_checkpoint(&ParamSet::random(6, 9), &dir.path().join("b.ckpt")).unwrap();
    for problem in ["mvc", "mis", "mc"] {
        let text = format!(
            "problem={problem}\ncheckpoint=a.ckpt\ncheckpoint=b.ckpt\nmethods=g2s,greedy\nt_max=5\nrecord_fixed_t=true\ngraph=er n=14 p=0.25 instances=4 seed=1\n"
        );
        let records = harness::run_records(&ExperimentConfig::parse(&text, dir.path()).unwrap()).unwrap();
        for model in ["g2s#0", "g2s#1"] {
            for id in records.iter().map(|r| &r.graph_id) {
                let best = records.iter().find(|r| &r.graph_id == id && r.method == model).unwrap();
                let fixed: Vec<_> = records
                    .iter()
                    .filter(|r| &r.graph_id == id && r.method.starts_with(&format!("{model}@T=")))
                    .collect();
                assert_eq!(fixed.len(), 5);
                for r in fixed {
                    if problem == "mvc" {
                        assert!(best.value <= r.value);
                    } else {
                        assert!(best.value >= r.value);
                    }
                }
            }
        }
    }
}

#[test]
fn tree_rows_only_on_trees() {
    let text = "problem=mvc\nmethods=tree,matching\ngraph=tree n=12 instances=3 seed=4\ngraph=er n=12 p=0.3 instances=3 seed=4\n";
    let records = harness::run_records(&ExperimentConfig::parse(text, std::path::Path::new(".")).unwrap()).unwrap();
    assert_eq!(records.iter().filter(|r| r.method == "tree").count(), 3);
    assert!(records.iter().filter(|r| r.method == "tree").all(|r| r.kind == "tree"));
    assert_eq!(records.iter().filter(|r| r.method == "matching").count(), 6);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(40);
    for i in 0..100 {
        buf.push(Transition { graph_id: i, before: Vec::new(), action: 0, reward: -1.0, terminal: false });
    }
    assert_eq!(buf.len(), 40);
    let mut counts = vec![0usize; 40];
    let mut rng = seeding::rng(12);
    let draws = 64 * 1000;
    for _ in 0..1000 {
        for i in buf.sample_indices(&mut rng, 64) {
            counts[i] += 1;
        }
    }
    let expected = draws as f64 / 40.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 39 degrees of freedom; the 0.999 quantile is about 72.1.
    assert!(chi2 < 72.1, "chi2 = {chi2}");
    let mut ids: Vec<usize> = (0..40).map(|i| buf.get(i).graph_id).collect();
    ids.sort();
    assert_eq!(ids, (60..100).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heuristics_are_never_better_than_exact(n in 1usize..16, p in 0.05f64..0.7, seed in any::<u64>()) {
        let g = generate(&GenSpec::ErdosRenyi { n, p, seed }).unwrap();
        for problem in Problem::ALL {
            let opt = baselines::exact(problem, &g, DEFAULT_NODE_BUDGET);
            prop_assert!(opt.exact);
            let greedy = baselines::greedy(problem, &g);
            if opt.value > 0 && greedy.value > 0 {
                let ratio = approx_ratio(problem, greedy.value as f64, opt.value as f64).unwrap();
                prop_assert!(ratio >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn exact_values_survive_relabelling(n in 1usize..14, p in 0.1f64..0.6, seed in any::<u64>()) {
        let g = generate(&GenSpec::ErdosRenyi { n, p, seed }).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(seed as usize % n);
        perm.swap(0, n - 1);
        let h = g.relabel(&perm);
        for problem in Problem::ALL {
            prop_assert_eq!(
                baselines::exact(problem, &g, DEFAULT_NODE_BUDGET).value,
                baselines::exact(problem, &h, DEFAULT_NODE_BUDGET).value
            );
        }
    }

    #[test]
    fn varying_t_is_feasible_and_dominant(n in 2usize..18, seed in any::<u64>(), t_max in 1usize..6) {
        let g = generate(&GenSpec::ErdosRenyi { n, p: 0.3, seed }).unwrap();
        let p = ParamSet::random(4, seed ^ 0x5eed);
        for problem in Problem::ALL {
            let best = harness::solve_varying_t(&g, &p, problem, t_max).unwrap();
            for t in 1..=t_max {
                let sol = harness::rollout(&g, &p, problem, t).unwrap();
                prop_assert!(crate::rl::objective(problem, &g, &sol).unwrap() <= best.objective);
            }
        }
    }
}

#[test]
fn incumbent_kind_is_recorded() {
    let text = "problem=mis\nmethods=greedy,list\nexact_cutoff=10\ngraph=er n=8,30 p=0.2 instances=2 seed=2\n";
    let records = harness::run_records(&ExperimentConfig::parse(text, std::path::Path::new(".")).unwrap()).unwrap();
    for r in &records {
        assert_eq!(r.ref_kind, if r.n <= 10 { RefKind::Exact } else { RefKind::Incumbent });
        assert!(r.ratio >= 1.0 - 1e-9);
    }
}
