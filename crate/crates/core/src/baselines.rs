//! Comparison models: logistic regression, one entropy tree, a bagged
//! forest, logistic gradient boosting, discrete AdaBoost and the plain MLP.
//!
//! The boosting baseline stands in for XGBoost: first-order splits and no
//! column sampling, so it is GBDT-style rather than a faithful port.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{fit_adaboost, fit_forest, fit_gbdt, AdaBoostParams, BoostParams, ForestParams};
use crate::error::{Error, Result};
use crate::linear::{fit_logistic, LogisticParams};
use crate::metrics::{self, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::par::Execution;
use crate::rng::{self, stream};
use crate::train::{train_baseline_dnn, MonitorMetric, TrainConfig};
use crate::trees::{fit_gain_tree, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaselineKind {
    Lr,
    Dt,
    Rf,
    Gbdt,
    AdaBoost,
    Dnn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::Lr,
        BaselineKind::Dt,
        BaselineKind::Rf,
        BaselineKind::Gbdt,
        BaselineKind::AdaBoost,
        BaselineKind::Dnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Lr => "LR",
            BaselineKind::Dt => "DT",
            BaselineKind::Rf => "RF",
            BaselineKind::Gbdt => "GBDT",
            BaselineKind::AdaBoost => "ADABOOST",
            BaselineKind::Dnn => "DNN",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?} (lr|dt|rf|gbdt|adaboost|dnn)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub logistic: LogisticParams,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub adaboost: AdaBoostParams,
    pub dnn: ModelConfig,
    pub dnn_monitor: MonitorMetric,
    pub dnn_train: TrainConfig,
    pub seed: u64,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind, seed: u64) -> Self {
        BaselineSpec {
            kind,
            logistic: LogisticParams::default(),
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            adaboost: AdaBoostParams::default(),
            dnn: ModelConfig::default(),
            dnn_monitor: MonitorMetric::F1Default,
            dnn_train: TrainConfig::default(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutput {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub report: MetricsReport,
}

/// Fits on `train`, scores `test`. Labels are the model's own decision rule
/// (majority leaf for DT, `score >= 0.5` otherwise).
pub fn fit_predict(spec: &BaselineSpec, train: &Dataset, test: &Dataset, exec: Execution) -> Result<BaselineOutput> {
    let [neg, pos] = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::MissingClass {
            partition: "training",
            class: u8::from(pos == 0),
        });
    }
    let (x, y) = (&train.features, &train.labels);
    let rows = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { (0..test.n_samples()).map(|r| f(test.features.row(r))).collect() };
    let mut epochs = (0, 0);
    let (scores, labels) = match spec.kind {
        BaselineKind::Lr => {
            let m = fit_logistic(x, y, &spec.logistic)?;
            threshold(rows(&|r| m.predict_proba(r)))
        }
        BaselineKind::Dt => {
            let mut r = rng::derive(spec.seed, stream::BASELINE, 0);
            let t = fit_gain_tree(x, y, &spec.tree, &mut r)?.tree;
            let labels = (0..test.n_samples()).map(|i| t.predict_label(test.features.row(i))).collect();
            (rows(&|r| t.predict_value(r)), labels)
        }
        BaselineKind::Rf => {
            let f = fit_forest(x, y, &spec.forest, spec.seed, exec)?;
            threshold(rows(&|r| f.predict_proba(r)))
        }
        BaselineKind::Gbdt => {
            let g = fit_gbdt(x, y, &spec.boost, spec.seed)?;
            threshold(rows(&|r| g.predict_proba(r)))
        }
        BaselineKind::AdaBoost => {
            let a = fit_adaboost(x, y, &spec.adaboost, spec.seed)?;
            threshold(rows(&|r| a.predict_proba(r)))
        }
        BaselineKind::Dnn => {
            let cfg = TrainConfig {
                seed: spec.seed,
                ..spec.dnn_train
            };
            let (model, report): (Model, _) = train_baseline_dnn(train, spec.dnn, spec.dnn_monitor, &cfg)?;
            epochs = (report.epochs_run, report.best_epoch);
            threshold(model.predict_proba(&test.features)?)
        }
    };
    let report = metrics::evaluate_labels(&scores, &test.labels, &labels).with_epochs(epochs.0, epochs.1);
    Ok(BaselineOutput { scores, labels, report })
}

fn threshold(scores: Vec<f64>) -> (Vec<f64>, Vec<u8>) {
    let labels = metrics::threshold_labels(&scores, 0.5);
    (scores, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn separable() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0, ((i * 7) % 40) as f64 / 39.0]).collect();
        Dataset {
            features: Matrix::from_rows(&rows),
            labels: (0..40).map(|i| u8::from(i >= 25)).collect(),
            feature_names: vec!["a".into(), "b".into()],
            target_name: "y".into(),
        }
    }

    #[test]
    fn dt_fits_separable_training_data() {
        let d = separable();
        let out = fit_predict(&BaselineSpec::new(BaselineKind::Dt, 0), &d, &d, Execution::Sequential).unwrap();
        assert_eq!(out.report.acc, 1.0);
    }

    #[test]
    fn single_unbagged_tree_forest_matches_dt() {
        let d = separable();
        let mut spec = BaselineSpec::new(BaselineKind::Rf, 0);
        spec.forest = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(2),
            ..ForestParams::default()
        };
        let rf = fit_predict(&spec, &d, &d, Execution::Sequential).unwrap();
        let dt = fit_predict(&BaselineSpec::new(BaselineKind::Dt, 0), &d, &d, Execution::Sequential).unwrap();
        assert_eq!(rf.scores, dt.scores);
    }

    #[test]
    fn every_kind_is_deterministic() {
        let d = separable();
        for kind in BaselineKind::ALL {
            let mut spec = BaselineSpec::new(kind, 3);
            spec.dnn_train.max_epochs = 5;
            let a = fit_predict(&spec, &d, &d, Execution::Parallel).unwrap();
            let b = fit_predict(&spec, &d, &d, Execution::Sequential).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn single_class_training_fails() {
        let mut d = separable();
        d.labels.iter_mut().for_each(|y| *y = 0);
        assert!(fit_predict(&BaselineSpec::new(BaselineKind::Lr, 0), &d, &d, Execution::Sequential).is_err());
    }

    #[test]
    fn kind_names_parse() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().to_lowercase().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
