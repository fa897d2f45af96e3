//! Multi-view feature spaces.
//!
//! Six local views are built from the training partition, each keeping the
//! top 30% of features under one ranking, plus the global view of every
//! feature:
//!
//! | order | strategy | ranking |
//! |-------|----------|---------|
//! | 0 | DT | accumulated information gain of one entropy tree |
//! | 1 | GBDT | squared-error gain summed over a logistic boosting run |
//! | 2 | RF | mean accumulated gain over a bagged forest |
//! | 3 | LR | absolute L2 logistic-regression coefficients |
//! | 4 | KMEANS | largest of four k-means clusters of the feature columns |
//! | 5 | PEARSON | absolute Pearson correlation with the label |
//!
//! The local order is fixed; view-count ablations take a prefix of it.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{kmeans, KMeansParams};
use crate::data::Dataset;
use crate::ensemble::{fit_forest, fit_gbdt, BoostParams, ForestParams};
use crate::error::{Error, Result};
use crate::linear::{fit_logistic, LogisticParams};
use crate::par::Execution;
use crate::rng::{self, stream};
use crate::trees::{self, entropy_of_weights, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Dt,
    Gbdt,
    Rf,
    Lr,
    Kmeans,
    Pearson,
    Global,
}

impl Strategy {
    /// Local strategies in view order.
    pub const LOCAL_ORDER: [Strategy; 6] = [
        Strategy::Dt,
        Strategy::Gbdt,
        Strategy::Rf,
        Strategy::Lr,
        Strategy::Kmeans,
        Strategy::Pearson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dt => "DT",
            Strategy::Gbdt => "GBDT",
            Strategy::Rf => "RF",
            Strategy::Lr => "LR",
            Strategy::Kmeans => "KMEANS",
            Strategy::Pearson => "PEARSON",
            Strategy::Global => "GLOBAL",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub strategy: Strategy,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureView {
    pub strategy: Strategy,
    /// Strictly increasing feature indices.
    pub indices: Vec<usize>,
}

impl FeatureView {
    pub fn global(n_features: usize) -> Self {
        FeatureView {
            strategy: Strategy::Global,
            indices: (0..n_features).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Global view plus ordered local views.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewSet {
    pub global: FeatureView,
    pub locals: Vec<FeatureView>,
}

#[derive(Serialize, Deserialize)]
struct ViewSetJson {
    global: Vec<usize>,
    locals: Vec<FeatureView>,
}

impl ViewSet {
    /// The first `k` local views.
    pub fn prefix(&self, k: usize) -> ViewSet {
        ViewSet {
            global: self.global.clone(),
            locals: self.locals[..k.min(self.locals.len())].to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.global.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ViewSetJson {
            global: self.global.indices.clone(),
            locals: self.locals.clone(),
        })
        .expect("view set serializes")
    }

    pub fn from_json(s: &str) -> Result<ViewSet> {
        let j: ViewSetJson = serde_json::from_str(s)?;
        let vs = ViewSet {
            global: FeatureView {
                strategy: Strategy::Global,
                indices: j.global,
            },
            locals: j.locals,
        };
        vs.validate()?;
        Ok(vs)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.global.len();
        if self.global.indices != (0..n).collect::<Vec<_>>() {
            return Err(Error::format("view set", "global view must be 0..n"));
        }
        for v in &self.locals {
            if v.indices.is_empty() {
                return Err(Error::format("view set", format!("{} view is empty", v.strategy)));
            }
            if v.indices.windows(2).any(|w| w[0] >= w[1]) || v.indices.iter().any(|&i| i >= n) {
                return Err(Error::format(
                    "view set",
                    format!("{} view indices must be increasing and < {n}", v.strategy),
                ));
            }
        }
        Ok(())
    }
}

/// Entropy in bits of a binary label vector.
pub fn entropy(labels: &[u8]) -> f64 {
    assert!(!labels.is_empty(), "entropy of empty labels");
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    entropy_of_weights(labels.len() as f64 - pos, pos)
}

/// How `info_gain` partitions a feature column.
#[derive(Clone, Debug, PartialEq)]
pub enum Split {
    /// `x <= t` versus `x > t`.
    Threshold(f64),
    /// One branch per distinct value.
    Categories,
}

/// Label entropy minus the size-weighted entropy of each branch.
pub fn info_gain(feature: &[f64], labels: &[u8], split: &Split) -> f64 {
    assert_eq!(feature.len(), labels.len());
    let branches: Vec<Vec<u8>> = match split {
        Split::Threshold(t) => {
            let (l, r): (Vec<_>, Vec<_>) = feature.iter().zip(labels).partition(|(x, _)| **x <= *t);
            vec![l.into_iter().map(|(_, &y)| y).collect(), r.into_iter().map(|(_, &y)| y).collect()]
        }
        Split::Categories => {
            let mut keys: Vec<f64> = feature.to_vec();
            keys.sort_by(f64::total_cmp);
            keys.dedup();
            keys.iter()
                .map(|k| {
                    feature
                        .iter()
                        .zip(labels)
                        .filter(|(x, _)| *x == k)
                        .map(|(_, &y)| y)
                        .collect()
                })
                .collect()
        }
    };
    let l = labels.len() as f64;
    let conditional: f64 = branches
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| b.len() as f64 / l * entropy(b))
        .sum();
    (entropy(labels) - conditional).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub fraction: f64,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub logistic: LogisticParams,
    pub kmeans_k: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            fraction: 0.3,
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            logistic: LogisticParams::default(),
            kmeans_k: 4,
        }
    }
}

pub fn dt_importance(data: &Dataset, params: &TreeParams, seed: u64) -> Result<ImportanceVector> {
    let mut rng = rng::derive(seed, stream::VIEWS, 0);
    let fit = trees::fit_gain_tree(&data.features, &data.labels, params, &mut rng)?;
    Ok(ImportanceVector {
        strategy: Strategy::Dt,
        scores: fit.importances,
    })
}

pub fn rf_importance(data: &Dataset, params: &ForestParams, seed: u64, exec: Execution) -> Result<ImportanceVector> {
    let forest = fit_forest(&data.features, &data.labels, params, seed, exec)?;
    Ok(ImportanceVector {
        strategy: Strategy::Rf,
        scores: forest.importances,
    })
}

pub fn gbdt_importance(data: &Dataset, params: &BoostParams, seed: u64) -> Result<ImportanceVector> {
    let model = fit_gbdt(&data.features, &data.labels, params, seed)?;
    Ok(ImportanceVector {
        strategy: Strategy::Gbdt,
        scores: model.importances,
    })
}

pub fn lr_importance(data: &Dataset, params: &LogisticParams) -> Result<ImportanceVector> {
    let model = fit_logistic(&data.features, &data.labels, params)?;
    Ok(ImportanceVector {
        strategy: Strategy::Lr,
        scores: model.coef.iter().map(|b| b.abs()).collect(),
    })
}

/// `|corr(x_i, y)|`; zero-variance columns score 0.
pub fn pearson_importance(data: &Dataset) -> ImportanceVector {
    let y: Vec<f64> = data.labels_f64();
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let vy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let scores = (0..data.n_features())
        .map(|c| {
            let x = data.features.column(c);
            let mx = x.iter().sum::<f64>() / n;
            let vx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
            if vx <= 0.0 || vy <= 0.0 {
                return 0.0;
            }
            let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            (cov / (vx.sqrt() * vy.sqrt())).abs()
        })
        .collect();
    ImportanceVector {
        strategy: Strategy::Pearson,
        scores,
    }
}

/// Clusters feature columns (never the label) and returns the most
/// populous cluster; ties go to the cluster holding the smallest index.
pub fn kmeans_view(data: &Dataset, k: usize, seed: u64) -> Result<FeatureView> {
    let d = data.n_features();
    if d < k {
        return Err(Error::Config(format!("{d} features cannot form {k} clusters")));
    }
    let points = data.features.transpose();
    let mut rng = rng::derive(seed, stream::VIEWS, 1);
    let fit = kmeans(&points, &KMeansParams { k, ..Default::default() }, &mut rng)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (f, &c) in fit.assignments.iter().enumerate() {
        members[c].push(f);
    }
    let best = members
        .into_iter()
        .filter(|m| !m.is_empty())
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("at least one non-empty cluster");
    Ok(FeatureView {
        strategy: Strategy::Kmeans,
        indices: best,
    })
}

/// Top `ceil(fraction * n)` indices by score, ties to the lower index,
/// returned ascending.
pub fn top_fraction(scores: &ImportanceVector, fraction: f64) -> FeatureView {
    let n = scores.scores.len();
    let keep = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
    let mut indices: Vec<usize> = order.into_iter().take(keep).collect();
    indices.sort_unstable();
    FeatureView {
        strategy: scores.strategy,
        indices,
    }
}

/// All six local views plus the global view, computed on `data` (the
/// training partition).
///
/// With fewer features than k-means clusters, k drops to the feature count.
pub fn build_view_set(data: &Dataset, config: &ViewConfig, seed: u64, exec: Execution) -> Result<ViewSet> {
    let d = data.n_features();
    let mut locals = Vec::with_capacity(6);
    for strategy in Strategy::LOCAL_ORDER {
        let view = match strategy {
            Strategy::Dt => top_fraction(&dt_importance(data, &config.tree, seed)?, config.fraction),
            Strategy::Gbdt => top_fraction(&gbdt_importance(data, &config.boost, seed)?, config.fraction),
            Strategy::Rf => top_fraction(&rf_importance(data, &config.forest, seed, exec)?, config.fraction),
            Strategy::Lr => top_fraction(&lr_importance(data, &config.logistic)?, config.fraction),
            Strategy::Kmeans => kmeans_view(data, config.kmeans_k.min(d), seed)?,
            Strategy::Pearson => top_fraction(&pearson_importance(data), config.fraction),
            Strategy::Global => unreachable!(),
        };
        locals.push(view);
    }
    Ok(ViewSet {
        global: FeatureView::global(d),
        locals,
    })
}
