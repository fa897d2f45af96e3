//! Acceptance gate. Each test checks one criterion at its stated tolerance
//! and prints a single `PASS` or `FAIL` line before asserting.
//!
//! Statlog reproductions run seeds 0..20 with the monitor evaluated on a
//! stratified 20% holdout of each training partition; the sweeps behind
//! criteria 4, 6, 7 and 8 are computed once and shared.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tab_attention::data::{self, Dataset, PreprocessOptions};
use tab_attention::experiment::{self, Experiment, ExperimentConfig};
use tab_attention::metrics::{self, Aggregate};
use tab_attention::model::{Model, ModelConfig};
use tab_attention::nn::{grad_check_piecewise, softmax_rows, Matrix, Parameterized, PiecewiseCheck};
use tab_attention::par::Execution;
use tab_attention::train::{TrainConfig, TrainState};
use tab_attention::trees::{self, Node, TreeParams};
use tab_attention::views::{self, build_view_set, info_gain, pearson_importance, top_fraction, Split, ViewConfig};

const SEEDS: std::ops::Range<u64> = 0..20;
const HOLDOUT: f64 = 0.2;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    // bypasses the harness capture so passing criteria are reported too
    let _ = writeln!(std::io::stdout().lock(), "criterion {id} {tag} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).expect("workspace root").join(rel)
}

fn load(path: &PathBuf, target: &str, positive: Option<&str>) -> Dataset {
    let table = data::load_csv(path, target).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let opts = PreprocessOptions {
        positive_label: positive.map(String::from),
        ..Default::default()
    };
    data::preprocess(&table, &opts).unwrap()
}

fn protocol() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.train.holdout = Some(HOLDOUT);
    c
}

fn seeds() -> Vec<u64> {
    SEEDS.collect()
}

/// Monitor ablation (`monitor-f1`, `monitor-auc`, `monitor-acc`,
/// `tab-star`) plus the zero-view model, on Statlog.
struct Statlog {
    monitor: Vec<Experiment>,
    views0: Experiment,
}

impl Statlog {
    fn get(&self, name: &str) -> Aggregate {
        self.monitor
            .iter()
            .chain(std::iter::once(&self.views0))
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no experiment {name}"))
            .aggregate()
            .unwrap()
    }
}

fn statlog() -> &'static Statlog {
    static CELL: OnceLock<Statlog> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let d = load(&workspace_file("data/statlog_german_credit.csv"), "default", Some("1"));
        assert_eq!(d.n_samples(), 1000);
        assert_eq!(d.class_counts(), [700, 300]);
        let cfg = protocol();
        let monitor = experiment::ablate_monitor(&d, &cfg, &seeds(), Execution::Parallel).unwrap();
        let mut views0 = experiment::ablate_views(&d, &cfg, &[0], &seeds(), Execution::Parallel).unwrap();
        let _ = writeln!(std::io::stdout().lock(), "statlog sweeps: {:.1}s", start.elapsed().as_secs_f64());
        Statlog {
            monitor,
            views0: views0.remove(0),
        }
    })
}

fn synthetic_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen::<f64>()).collect());
    let y = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.4)))).collect();
    (x, y)
}

fn synthetic_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let (x, _) = synthetic_batch(rng, n, d);
    let labels: Vec<u8> = (0..n)
        .map(|i| u8::from(x.get(i, 0) + 0.5 * x.get(i, 1) + 0.3 * rng.gen::<f64>() > 0.9))
        .collect();
    Dataset {
        features: x,
        labels,
        feature_names: (0..d).map(|i| format!("x{i}")).collect(),
        target_name: "y".into(),
    }
}

#[test]
fn criterion_1_gradient_check() {
    const D: usize = 12;
    let start = Instant::now();
    let mut total = PiecewiseCheck::default();
    for seed in 0..5u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let views = build_view_set(&synthetic_dataset(&mut r, 60, D), &ViewConfig::default(), seed, Execution::Sequential)
            .unwrap();
        let mut m = Model::new(&views, ModelConfig::default(), seed).unwrap();
        // init leaves biases and norm shifts at exactly zero, which parks
        // units on a ReLU kink; the check runs at a nearby generic point
        let p: Vec<f64> = m.flat_params().iter().map(|v| v + r.gen_range(-0.05..0.05)).collect();
        m.set_flat_params(&p);
        let (x, y) = synthetic_batch(&mut r, 16, D);
        m.compute_gradients(&x, &y, None).unwrap();
        let analytic = m.flat_grads();
        let mut params = m.flat_params();
        let c = grad_check_piecewise(&mut params, &analytic, 2, |p| {
            let mut probe = m.clone();
            probe.set_flat_params(p);
            let t = probe.forward(&x).unwrap();
            (probe.loss(&t, &y).0.total, t.relu_pattern())
        });
        total.worst = total.worst.max(c.worst);
        total.checked += c.checked;
        total.refined += c.refined;
        total.straddling += c.straddling;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient check",
        total.worst < 1e-4 && total.straddling == 0 && secs < 60.0,
        &format!(
            "worst relative error {:.2e} (< 1e-4) over {} parameters, {} stencils shrunk off a ReLU kink, {} unresolved, {secs:.1}s",
            total.worst, total.checked, total.refined, total.straddling
        ),
    );
}

fn auc_pairs(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn ks_sweep(s: &[f64], y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let neg = y.len() as f64 - pos;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds
        .iter()
        .map(|&t| {
            let tp = s.iter().zip(y).filter(|(v, l)| **v >= t && **l == 1).count() as f64;
            let fp = s.iter().zip(y).filter(|(v, l)| **v >= t && **l == 0).count() as f64;
            tp / pos - fp / neg
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_2_metric_oracles() {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = r.gen_range(2..=200);
        // coarse grids on half the cases force tied scores
        let levels = if case % 2 == 0 { r.gen_range(2..12) } else { 0 };
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.35))).collect();
        y[0] = 1;
        y[1] = 0;
        let s: Vec<f64> = (0..n)
            .map(|_| {
                let u = r.gen::<f64>();
                if levels > 0 {
                    (u * levels as f64).floor() / levels as f64
                } else {
                    u
                }
            })
            .collect();
        worst = worst
            .max((metrics::auc(&s, &y) - auc_pairs(&s, &y)).abs())
            .max((metrics::ks(&s, &y) - ks_sweep(&s, &y)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "metric oracles",
        worst <= 1e-9 && secs < 60.0,
        &format!("worst |auc|,|ks| gap {worst:.1e} (<= 1e-9) over 100 sets, {secs:.2}s"),
    );
}

/// Independent exhaustive tree: every feature, every midpoint, recursive.
#[derive(Debug, PartialEq)]
enum Oracle {
    Leaf { label: u8 },
    Split { feature: usize, threshold: f64, gain: f64, left: Box<Oracle>, right: Box<Oracle> },
}

fn h2(rows: &[usize], y: &[u8]) -> f64 {
    let n = rows.len() as f64;
    let p = rows.iter().filter(|&&i| y[i] == 1).count() as f64 / n;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

fn oracle_tree(x: &[Vec<f64>], y: &[u8], rows: &[usize], depth: usize, max_depth: usize, imp: &mut [f64]) -> Oracle {
    let pos = rows.iter().filter(|&&i| y[i] == 1).count();
    let label = u8::from(2 * pos > rows.len());
    if depth >= max_depth || rows.len() < 2 || pos == 0 || pos == rows.len() {
        return Oracle::Leaf { label };
    }
    let parent = h2(rows, y);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
            let n = rows.len() as f64;
            let gain = parent - l.len() as f64 / n * h2(&l, y) - r.len() as f64 / n * h2(&r, y);
            let floor = best.map_or(0.0, |b| b.2);
            if gain > floor + trees::GAIN_TOLERANCE {
                best = Some((f, t, gain));
            }
        }
    }
    let Some((feature, threshold, gain)) = best else {
        return Oracle::Leaf { label };
    };
    imp[feature] += gain * rows.len() as f64 / x.len() as f64;
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
    Oracle::Split {
        feature,
        threshold,
        gain,
        left: Box::new(oracle_tree(x, y, &l, depth + 1, max_depth, imp)),
        right: Box::new(oracle_tree(x, y, &r, depth + 1, max_depth, imp)),
    }
}

/// Node-for-node comparison; returns the first mismatch.
fn same_tree(t: &trees::Tree, i: usize, o: &Oracle) -> Result<(), String> {
    match (&t.nodes[i], o) {
        (Node::Leaf { label, .. }, Oracle::Leaf { label: ol }) if label == ol => Ok(()),
        (
            Node::Split { feature, threshold, gain, left, right },
            Oracle::Split { feature: of, threshold: ot, gain: og, left: ol, right: or },
        ) if feature == of && threshold == ot && (gain - og).abs() < 1e-9 => {
            same_tree(t, *left, ol)?;
            same_tree(t, *right, or)
        }
        (a, b) => Err(format!("node {i}: {a:?} vs {b:?}")),
    }
}

#[test]
fn criterion_3_importance_oracle() {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let params = TreeParams::default();
    let mut failures = Vec::new();
    let mut splits = 0;
    for case in 0..20 {
        // small integer grids make gain ties common
        let x: Vec<Vec<f64>> = (0..32)
            .map(|_| {
                (0..4)
                    .map(|f| if f % 2 == 0 { f64::from(r.gen_range(0..5u8)) } else { r.gen::<f64>() })
                    .collect()
            })
            .collect();
        let y: Vec<u8> = x.iter().map(|row| u8::from(row[0] + 3.0 * row[1] + r.gen_range(0.0..2.0) > 3.5)).collect();
        let fit = trees::fit_gain_tree(&Matrix::from_rows(&x), &y, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut imp = vec![0.0; 4];
        let rows: Vec<usize> = (0..32).collect();
        let oracle = oracle_tree(&x, &y, &rows, 0, params.max_depth, &mut imp);
        splits += fit.tree.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count();
        if let Err(e) = same_tree(&fit.tree, 0, &oracle) {
            failures.push(format!("case {case}: {e}"));
        }
        let gap = fit.importances.iter().zip(&imp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-9 {
            failures.push(format!("case {case}: importance gap {gap:.1e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "importance oracle",
        failures.is_empty() && secs < 60.0,
        &format!("20 datasets, {splits} splits, {} mismatches {:?}, {secs:.2}s", failures.len(), failures.first()),
    );
}

struct Target {
    name: &'static str,
    field: &'static str,
    value: f64,
}

const fn t(name: &'static str, field: &'static str, value: f64) -> Target {
    Target { name, field, value }
}

fn within(agg: &Aggregate, targets: &[Target], tol: f64) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for tg in targets {
        let m = agg.fields().into_iter().find(|(f, _)| *f == tg.field).unwrap().1;
        let hit = (m.mean - tg.value).abs() <= tol;
        ok &= hit;
        parts.push(format!("{} {:.3} vs {:.2}{}", tg.name, m.mean, tg.value, if hit { "" } else { " (out)" }));
    }
    (ok, parts.join(", "))
}

const TOLERANCE: f64 = 0.06;

#[test]
fn criterion_4_statlog_reproduction() {
    let agg = statlog().get("monitor-f1");
    let targets = [
        t("Acc", "acc", 0.75),
        t("AUC", "auc", 0.77),
        t("KS", "ks", 0.46),
        t("P1", "precision_1", 0.60),
        t("R1", "recall_1", 0.55),
        t("f1_1", "f1_1", 0.57),
    ];
    let (ok, detail) = within(&agg, &targets, TOLERANCE);
    verdict(4, "statlog reproduction", ok, &detail);
}

#[test]
fn criterion_5_south_german_reproduction() {
    let path = std::env::var_os("SOUTH_GERMAN_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_file("data/south_german_credit.csv"));
    if !path.is_file() {
        verdict(
            5,
            "south german reproduction",
            false,
            &format!("dataset not found at {} (set SOUTH_GERMAN_CSV)", path.display()),
        );
        return;
    }
    let target = std::env::var("SOUTH_GERMAN_TARGET").unwrap_or_else(|_| "credit_risk".into());
    let positive = std::env::var("SOUTH_GERMAN_POSITIVE").unwrap_or_else(|_| "0".into());
    let d = load(&path, &target, Some(&positive));
    let runs = experiment::sweep(&d, &protocol(), &seeds(), Execution::Parallel).unwrap();
    let agg = Experiment { name: "south-german".into(), runs }.aggregate().unwrap();
    let targets = [
        t("Acc", "acc", 0.75),
        t("AUC", "auc", 0.75),
        t("KS", "ks", 0.43),
        t("P1", "precision_1", 0.60),
        t("R1", "recall_1", 0.50),
        t("f1_1", "f1_1", 0.54),
    ];
    let (ok, detail) = within(&agg, &targets, TOLERANCE);
    verdict(5, "south german reproduction", ok, &detail);
}

#[test]
fn criterion_6_monitor_ablation() {
    let s = statlog();
    let f1 = s.get("monitor-f1").epochs.mean;
    let acc = s.get("monitor-acc").epochs.mean;
    let reduction = 1.0 - f1 / acc;
    verdict(
        6,
        "monitor ablation",
        reduction >= 0.25,
        &format!("mean epochs f1 {f1:.1} vs acc {acc:.1}, reduction {:.1}% (>= 25%)", 100.0 * reduction),
    );
}

#[test]
fn criterion_7_view_ablation() {
    let s = statlog();
    let six = s.get("monitor-f1").ks.mean;
    let zero = s.get("views-0").ks.mean;
    verdict(
        7,
        "view ablation",
        six > zero,
        &format!("mean KS 6 views {six:.4} vs 0 views {zero:.4}, delta {:+.4} (> 0)", six - zero),
    );
}

#[test]
fn criterion_8_attention_ablation() {
    let s = statlog();
    let full = s.get("monitor-f1").recall_1.mean;
    let star = s.get("tab-star").recall_1.mean;
    verdict(
        8,
        "attention ablation",
        full >= star,
        &format!("mean Recall1 full {full:.4} vs tab* {star:.4}, delta {:+.4} (>= 0)", full - star),
    );
}

fn dataset_of(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
    let d = rows[0].len();
    Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        feature_names: (0..d).map(|i| format!("x{i}")).collect(),
        target_name: "y".into(),
    }
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn labelled_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
    (2usize..6, 4usize..40).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

#[test]
fn criterion_9_invariant_suite() {
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut record = |r: Result<(), String>| {
        checked += 1;
        if let Err(e) = r {
            failures.push(e);
        }
    };

    record(run_property(
        "pearson selection is affine invariant",
        (labelled_rows(), prop::collection::vec((0.1f64..10.0, -5.0f64..5.0, any::<bool>()), 6)),
        |((rows, labels), maps)| {
            let base = dataset_of(rows.clone(), labels.clone());
            let moved: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(&maps)
                        .map(|(v, (a, b, flip))| if *flip { -a * v + b } else { a * v + b })
                        .collect()
                })
                .collect();
            let a = pearson_importance(&base);
            let b = pearson_importance(&dataset_of(moved, labels));
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
            // selection is compared only when scores are well separated
            let mut sorted = a.scores.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > 1e-6) {
                prop_assert_eq!(top_fraction(&a, 0.3).indices, top_fraction(&b, 0.3).indices);
            }
            Ok(())
        },
    ));

    record(run_property(
        "softmax rows sum to one",
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |v| (r, c, v))),
        |(r, c, v)| {
            let s = softmax_rows(&Matrix::from_vec(r, c, v));
            for i in 0..r {
                let row = s.row(i);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            Ok(())
        },
    ));

    record(run_property(
        "learning rate only steps down by 0.1",
        prop::collection::vec(0.0f64..1.0, 1..300),
        |scores| {
            let cfg = TrainConfig::default();
            let mut s = TrainState::new(cfg.initial_lr);
            let mut prev_lr = s.learning_rate;
            let mut prev_best = f64::NEG_INFINITY;
            for score in scores {
                let (_, stop) = s.observe(score, &cfg);
                let ratio = s.learning_rate / prev_lr;
                prop_assert!(ratio == 1.0 || (ratio - 0.1).abs() < 1e-12, "lr ratio {ratio}");
                prop_assert!(s.best_score >= prev_best);
                prev_lr = s.learning_rate;
                prev_best = s.best_score;
                if stop.is_some() {
                    break;
                }
            }
            Ok(())
        },
    ));

    record(run_property(
        "entropy and gain bounds",
        (prop::collection::vec((0.0f64..1.0, 0u8..2), 1..60), 0.0f64..1.0),
        |(pairs, t)| {
            let (x, y): (Vec<f64>, Vec<u8>) = pairs.into_iter().unzip();
            let h = views::entropy(&y);
            prop_assert!((0.0..=1.0).contains(&h));
            for split in [Split::Threshold(t), Split::Categories] {
                let g = info_gain(&x, &y, &split);
                prop_assert!(g >= 0.0 && g <= h + 1e-12, "gain {g} entropy {h}");
            }
            Ok(())
        },
    ));

    record(run_property(
        "auc complement identity",
        prop::collection::vec((0u8..20, 0u8..2), 2..120),
        |pairs| {
            let (s, y): (Vec<f64>, Vec<u8>) = pairs.into_iter().map(|(v, l)| (f64::from(v) / 20.0, l)).unzip();
            let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
            let negated: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((metrics::auc(&s, &y) + metrics::auc(&s, &flipped) - 1.0).abs() < 1e-12);
            prop_assert!((metrics::auc(&s, &y) + metrics::auc(&negated, &y) - 1.0).abs() < 1e-12);
            Ok(())
        },
    ));

    verdict(
        9,
        "invariant suite",
        failures.is_empty(),
        &format!("{checked} properties x 200 cases, failures {failures:?}"),
    );
}
