//! Tree ensembles: bagged forests, logistic gradient boosting and discrete
//! AdaBoost. All three reuse the builders in [`crate::trees`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid_scalar, Matrix};
use crate::par::{self, Execution};
use crate::rng;
use crate::trees::{self, Sample, Tree, TreeParams};

const FOREST_STREAM: u64 = 101;
const BOOST_STREAM: u64 = 102;
const ADABOOST_STREAM: u64 = 103;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    /// Candidate features per node; `None` means `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 10,
            min_samples_split: 2,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Mean of per-tree accumulated gains.
    pub importances: Vec<f64>,
}

impl Forest {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_value(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    seed: u64,
    exec: Execution,
) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let n = y.len();
    let d = x.cols();
    let max_features = params
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: Some(max_features),
    };
    let fits = par::map_range(exec, params.n_trees, |t| {
        let mut rng = rng::derive(seed, FOREST_STREAM, t as u64);
        let samples: Vec<Sample> = if params.bootstrap {
            (0..n)
                .map(|_| Sample {
                    row: rng.gen_range(0..n),
                    weight: 1.0,
                })
                .collect()
        } else {
            trees::unit_samples(n)
        };
        trees::fit_gain_tree_weighted(x, y, &samples, &tree_params, &mut rng)
    });
    let mut importances = vec![0.0; d];
    let mut out = Vec::with_capacity(params.n_trees);
    for fit in fits {
        let fit = fit?;
        for (acc, g) in importances.iter_mut().zip(&fit.importances) {
            *acc += g;
        }
        out.push(fit.tree);
    }
    for v in &mut importances {
        *v /= params.n_trees as f64;
    }
    Ok(Forest {
        trees: out,
        importances,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub shrinkage: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 50,
            max_depth: 10,
            min_samples_split: 2,
            shrinkage: 0.1,
        }
    }
}

/// Gradient-boosted trees under logistic loss.
#[derive(Clone, Debug)]
pub struct Gbdt {
    /// Prior log-odds.
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    /// Total squared-error reduction per feature over all trees.
    pub importances: Vec<f64>,
    /// Mean training log-loss after each stage; entry 0 is the prior.
    pub stage_losses: Vec<f64>,
}

impl Gbdt {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict_value(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid_scalar(self.decision(row))
    }
}

fn log_loss(f: &[f64], y: &[u8]) -> f64 {
    // log(1 + e^-m) with margin m = +-f, computed stably
    let sum: f64 = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| {
            let m = if y == 1 { f } else { -f };
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum();
    sum / y.len() as f64
}

pub fn fit_gbdt(x: &Matrix, y: &[u8], params: &BoostParams, seed: u64) -> Result<Gbdt> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("boosting training set"));
    }
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    if pos == 0.0 || pos == n as f64 {
        return Err(Error::MissingClass {
            partition: "boosting training",
            class: if pos == 0.0 { 1 } else { 0 },
        });
    }
    let base_score = (pos / (n as f64 - pos)).ln();
    let mut f = vec![base_score; n];
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: None,
    };
    let samples = trees::unit_samples(n);
    let mut rng = rng::derive(seed, BOOST_STREAM, 0);
    let mut importances = vec![0.0; x.cols()];
    let mut stage_losses = vec![log_loss(&f, y)];
    let mut fitted = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid_scalar(v)).collect();
        let residual: Vec<f64> = p.iter().zip(y).map(|(&p, &y)| f64::from(y) - p).collect();
        let fit = trees::fit_regression_tree(x, &residual, &samples, &tree_params, &mut rng)?;
        let mut tree = fit.tree;
        for (acc, g) in importances.iter_mut().zip(&fit.importances) {
            *acc += g;
        }
        // Newton step per leaf: sum(r) / sum(p(1-p))
        let leaves: Vec<usize> = (0..n).map(|i| tree.leaf_index(x.row(i))).collect();
        let mut num = vec![0.0; tree.nodes.len()];
        let mut den = vec![0.0; tree.nodes.len()];
        for i in 0..n {
            num[leaves[i]] += residual[i];
            den[leaves[i]] += p[i] * (1.0 - p[i]);
        }
        for leaf in 0..tree.nodes.len() {
            if den[leaf] > 0.0 || num[leaf] != 0.0 {
                let v = if den[leaf] < 1e-12 { 0.0 } else { num[leaf] / den[leaf] };
                tree.set_leaf_value(leaf, v);
            }
        }
        for i in 0..n {
            f[i] += params.shrinkage * tree.predict_value(x.row(i));
        }
        stage_losses.push(log_loss(&f, y));
        fitted.push(tree);
    }
    Ok(Gbdt {
        base_score,
        shrinkage: params.shrinkage,
        trees: fitted,
        importances,
        stage_losses,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        AdaBoostParams {
            n_estimators: 50,
            max_depth: 10,
            min_samples_split: 2,
        }
    }
}

/// Discrete two-class AdaBoost.
#[derive(Clone, Debug)]
pub struct AdaBoost {
    pub learners: Vec<(f64, Tree)>,
    /// Sample-weight vector after each stage.
    pub weight_history: Vec<Vec<f64>>,
}

impl AdaBoost {
    /// Alpha-weighted vote share for class 1, in `[0, 1]`.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let total: f64 = self.learners.iter().map(|(a, _)| a).sum();
        let pos: f64 = self
            .learners
            .iter()
            .filter(|(_, t)| t.predict_label(row) == 1)
            .map(|(a, _)| a)
            .sum();
        pos / total
    }
}

pub fn fit_adaboost(x: &Matrix, y: &[u8], params: &AdaBoostParams, seed: u64) -> Result<AdaBoost> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("adaboost training set"));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: None,
    };
    let mut rng = rng::derive(seed, ADABOOST_STREAM, 0);
    let mut w = vec![1.0 / n as f64; n];
    let mut learners = Vec::new();
    let mut weight_history = Vec::new();
    for _ in 0..params.n_estimators {
        let samples: Vec<Sample> = w
            .iter()
            .enumerate()
            .map(|(row, &weight)| Sample { row, weight })
            .collect();
        let tree = trees::fit_gain_tree_weighted(x, y, &samples, &tree_params, &mut rng)?.tree;
        let wrong: Vec<bool> = (0..n).map(|i| tree.predict_label(x.row(i)) != y[i]).collect();
        let err: f64 = w.iter().zip(&wrong).filter(|(_, &m)| m).map(|(w, _)| w).sum();
        if err <= 0.0 {
            // perfect learner: keep it with unit weight and stop
            learners.push((1.0, tree));
            weight_history.push(w.clone());
            break;
        }
        if err >= 0.5 {
            if learners.is_empty() {
                learners.push((1.0, tree));
                weight_history.push(w.clone());
            }
            break;
        }
        let alpha = ((1.0 - err) / err).ln();
        for (wi, &m) in w.iter_mut().zip(&wrong) {
            if m {
                *wi *= alpha.exp();
            }
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        learners.push((alpha, tree));
        weight_history.push(w.clone());
    }
    Ok(AdaBoost {
        learners,
        weight_history,
    })
}
