//! Binary threshold trees.
//!
//! Classification trees split on information gain (entropy, base 2) and
//! accumulate `gain * node_weight / root_weight` per feature. Regression
//! trees split on squared-error reduction and accumulate the raw reduction.
//!
//! Candidate thresholds are midpoints between consecutive distinct values.
//! Features are scanned in ascending index order and thresholds in ascending
//! order; a candidate replaces the incumbent only if its gain is larger by
//! more than [`GAIN_TOLERANCE`], so near-ties resolve to the lower feature
//! index and then the lower threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Minimum improvement for a split to count as better, and minimum gain for
/// a split to be made at all.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum number of splits on any root-to-leaf path.
    pub max_depth: usize,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    /// Random candidate features per node; `None` uses every feature.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Positive weight fraction (classification) or mean target.
        value: f64,
        label: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict_label(&self, row: &[f64]) -> u8 {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { label, .. } => *label,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn set_leaf_value(&mut self, leaf: usize, v: f64) {
        if let Node::Leaf { value, .. } = &mut self.nodes[leaf] {
            *value = v;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// A training row and its weight. Bootstrap samples repeat rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub row: usize,
    pub weight: f64,
}

pub fn unit_samples(n: usize) -> Vec<Sample> {
    (0..n).map(|row| Sample { row, weight: 1.0 }).collect()
}

/// Entropy in bits of the class weights `[w0, w1]`.
pub fn entropy_of_weights(w0: f64, w1: f64) -> f64 {
    let total = w0 + w1;
    if total <= 0.0 {
        return 0.0;
    }
    [w0, w1]
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum()
}

#[derive(Clone, Copy)]
enum Target<'a> {
    Class(&'a [u8]),
    Value(&'a [f64]),
}

/// Sufficient statistics of a node: for classification `(w0, w1)`, for
/// regression `(sum w, sum w*y, sum w*y^2)`.
#[derive(Clone, Copy, Default)]
struct Stats {
    a: f64,
    b: f64,
    c: f64,
}

impl Target<'_> {
    fn add(&self, s: &mut Stats, row: usize, w: f64) {
        match self {
            Target::Class(y) => {
                if y[row] == 1 {
                    s.b += w
                } else {
                    s.a += w
                }
            }
            Target::Value(y) => {
                s.a += w;
                s.b += w * y[row];
                s.c += w * y[row] * y[row];
            }
        }
    }

    fn weight(&self, s: &Stats) -> f64 {
        match self {
            Target::Class(_) => s.a + s.b,
            Target::Value(_) => s.a,
        }
    }

    fn pure(&self, s: &Stats) -> bool {
        match self {
            Target::Class(_) => s.a == 0.0 || s.b == 0.0,
            Target::Value(_) => self.impurity(s) <= 0.0,
        }
    }

    /// Entropy (classification) or weighted SSE (regression).
    fn impurity(&self, s: &Stats) -> f64 {
        match self {
            Target::Class(_) => entropy_of_weights(s.a, s.b),
            Target::Value(_) => {
                if s.a <= 0.0 {
                    0.0
                } else {
                    (s.c - s.b * s.b / s.a).max(0.0)
                }
            }
        }
    }

    fn gain(&self, parent: &Stats, left: &Stats, right: &Stats) -> f64 {
        match self {
            Target::Class(_) => {
                let w = self.weight(parent);
                self.impurity(parent)
                    - self.weight(left) / w * self.impurity(left)
                    - self.weight(right) / w * self.impurity(right)
            }
            // SSE reduction written in sums to avoid cancellation on the c term
            Target::Value(_) => {
                left.b * left.b / left.a + right.b * right.b / right.a - parent.b * parent.b / parent.a
            }
        }
    }

    fn leaf(&self, s: &Stats) -> Node {
        match self {
            Target::Class(_) => {
                let w = s.a + s.b;
                Node::Leaf {
                    value: if w > 0.0 { s.b / w } else { 0.0 },
                    label: u8::from(s.b > s.a),
                }
            }
            Target::Value(_) => Node::Leaf {
                value: if s.a > 0.0 { s.b / s.a } else { 0.0 },
                label: 0,
            },
        }
    }

    /// Importance credited for a split of a node holding `node_w` out of `root_w`.
    fn credit(&self, gain: f64, node_w: f64, root_w: f64) -> f64 {
        match self {
            Target::Class(_) => gain * node_w / root_w,
            Target::Value(_) => gain,
        }
    }
}

/// Tree plus per-feature accumulated split gain.
#[derive(Clone, Debug)]
pub struct FittedTree {
    pub tree: Tree,
    pub importances: Vec<f64>,
}

/// Entropy-gain classification tree on every row with unit weight.
pub fn fit_gain_tree<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[u8],
    params: &TreeParams,
    rng: &mut R,
) -> Result<FittedTree> {
    fit_gain_tree_weighted(features, labels, &unit_samples(labels.len()), params, rng)
}

pub fn fit_gain_tree_weighted<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[u8],
    samples: &[Sample],
    params: &TreeParams,
    rng: &mut R,
) -> Result<FittedTree> {
    if labels.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            features.rows()
        )));
    }
    build(features, Target::Class(labels), samples, params, rng)
}

/// Squared-error regression tree.
pub fn fit_regression_tree<R: Rng + ?Sized>(
    features: &Matrix,
    targets: &[f64],
    samples: &[Sample],
    params: &TreeParams,
    rng: &mut R,
) -> Result<FittedTree> {
    if targets.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            features.rows()
        )));
    }
    build(features, Target::Value(targets), samples, params, rng)
}

struct Builder<'a, R: ?Sized> {
    x: &'a Matrix,
    target: Target<'a>,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    importances: Vec<f64>,
    root_weight: f64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn build<R: Rng + ?Sized>(
    x: &Matrix,
    target: Target<'_>,
    samples: &[Sample],
    params: &TreeParams,
    rng: &mut R,
) -> Result<FittedTree> {
    if samples.is_empty() {
        return Err(Error::Empty("tree training set"));
    }
    let mut root = Stats::default();
    for s in samples {
        target.add(&mut root, s.row, s.weight);
    }
    let mut b = Builder {
        x,
        target,
        params,
        rng,
        nodes: Vec::new(),
        importances: vec![0.0; x.cols()],
        root_weight: target.weight(&root),
    };
    let mut owned = samples.to_vec();
    b.grow(&mut owned, root, 0);
    Ok(FittedTree {
        tree: Tree { nodes: b.nodes },
        importances: b.importances,
    })
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn grow(&mut self, samples: &mut [Sample], stats: Stats, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(self.target.leaf(&stats));
        if depth >= self.params.max_depth
            || samples.len() < self.params.min_samples_split
            || self.target.pure(&stats)
        {
            return id;
        }
        let Some(best) = self.best_split(samples, &stats) else {
            return id;
        };
        self.importances[best.feature] +=
            self.target
                .credit(best.gain, self.target.weight(&stats), self.root_weight);

        let f = best.feature;
        let x = self.x;
        let mid = partition(samples, |s| x.get(s.row, f) <= best.threshold);
        let (left, right) = samples.split_at_mut(mid);
        let (mut ls, mut rs) = (Stats::default(), Stats::default());
        for s in left.iter() {
            self.target.add(&mut ls, s.row, s.weight);
        }
        for s in right.iter() {
            self.target.add(&mut rs, s.row, s.weight);
        }
        let l = self.grow(left, ls, depth + 1);
        let r = self.grow(right, rs, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold: best.threshold,
            gain: best.gain,
            left: l,
            right: r,
        };
        id
    }

    fn candidates(&mut self) -> Vec<usize> {
        let n = self.x.cols();
        match self.params.max_features {
            Some(k) if k < n => {
                let mut c = rand::seq::index::sample(self.rng, n, k.max(1)).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        }
    }

    fn best_split(&mut self, samples: &[Sample], parent: &Stats) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, usize, f64)> = Vec::with_capacity(samples.len());
        for f in self.candidates() {
            column.clear();
            column.extend(samples.iter().map(|s| (self.x.get(s.row, f), s.row, s.weight)));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = Stats::default();
            for i in 0..column.len() - 1 {
                let (v, row, w) = column[i];
                self.target.add(&mut left, row, w);
                let next = column[i + 1].0;
                if next == v {
                    continue;
                }
                let right = Stats {
                    a: parent.a - left.a,
                    b: parent.b - left.b,
                    c: parent.c - left.c,
                };
                if self.target.weight(&left) <= 0.0 || self.target.weight(&right) <= 0.0 {
                    continue;
                }
                let gain = self.target.gain(parent, &left, &right);
                let better = match &best {
                    None => gain > GAIN_TOLERANCE,
                    Some(b) => gain > b.gain + GAIN_TOLERANCE,
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: 0.5 * (v + next),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Stable-enough in-place partition; returns the count satisfying `pred`.
fn partition<T, F: Fn(&T) -> bool>(items: &mut [T], pred: F) -> usize {
    let mut mid = 0;
    for i in 0..items.len() {
        if pred(&items[i]) {
            items.swap(mid, i);
            mid += 1;
        }
    }
    mid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_of_weights(5.0, 5.0), 1.0);
        assert_eq!(entropy_of_weights(0.0, 4.0), 0.0);
        assert!((entropy_of_weights(2.0, 3.0) - 0.970_950_594_454_668_5).abs() < 1e-12);
    }

    #[test]
    fn perfect_feature_at_depth_one() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.3],
            vec![0.1, 0.9],
            vec![0.8, 0.2],
            vec![0.9, 0.7],
            vec![1.0, 0.1],
        ]);
        let y = [0, 0, 1, 1, 1];
        let params = TreeParams {
            max_depth: 1,
            ..TreeParams::default()
        };
        let fit = fit_gain_tree(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((fit.importances[0] - entropy_of_weights(2.0, 3.0)).abs() < 1e-12);
        assert_eq!(fit.importances[1], 0.0);
        assert_eq!(fit.tree.depth(), 1);
        for r in 0..5 {
            assert_eq!(fit.tree.predict_label(x.row(r)), y[r]);
        }
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.5], vec![1.0]]);
        let fit = fit_gain_tree(&x, &[1, 1, 1], &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(fit.tree.nodes.len(), 1);
        assert_eq!(fit.importances, vec![0.0]);
    }

    #[test]
    fn leaf_label_ties_go_to_class_zero() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.0]]);
        let fit = fit_gain_tree(&x, &[0, 1], &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(fit.tree.predict_label(&[0.0]), 0);
        assert_eq!(fit.tree.predict_value(&[0.0]), 0.5);
    }

    #[test]
    fn empty_samples_fail() {
        let x = Matrix::zeros(0, 2);
        assert!(fit_gain_tree(&x, &[], &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn regression_gain_is_sse_reduction() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let y = [1.0, 1.0, 3.0, 5.0];
        let params = TreeParams {
            max_depth: 1,
            ..TreeParams::default()
        };
        let fit = fit_regression_tree(&x, &y, &unit_samples(4), &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
        };
        let expected = sse(&y) - sse(&[1.0, 1.0]) - sse(&[3.0, 5.0]);
        assert!((fit.importances[0] - expected).abs() < 1e-12);
    }
}
