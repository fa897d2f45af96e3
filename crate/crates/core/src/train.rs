//! Adam training with a monitored learning-rate schedule and early stop.
//!
//! After every epoch the monitor metric is evaluated at threshold 0.5. A
//! strictly higher score becomes the new best and resets the stagnation
//! count; otherwise the count grows. The learning rate is multiplied by 0.1
//! when the count reaches `patience_lr`, and training stops when it reaches
//! `patience_stop` or at `max_epochs`. The parameters of the best epoch are
//! restored before returning.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, threshold_labels};
use crate::model::{Model, ModelConfig};
use crate::nn::{AdamConfig, AdamState, Parameterized};
use crate::rng::{self, stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MonitorMetric {
    /// f1 of the default class.
    #[default]
    #[serde(rename = "f1")]
    F1Default,
    #[serde(rename = "auc")]
    Auc,
    #[serde(rename = "acc")]
    Acc,
}

impl MonitorMetric {
    pub const ALL: [MonitorMetric; 3] = [MonitorMetric::F1Default, MonitorMetric::Auc, MonitorMetric::Acc];

    pub fn name(self) -> &'static str {
        match self {
            MonitorMetric::F1Default => "f1",
            MonitorMetric::Auc => "auc",
            MonitorMetric::Acc => "acc",
        }
    }

    pub fn score(self, scores: &[f64], labels: &[u8]) -> f64 {
        match self {
            MonitorMetric::Auc => metrics::auc(scores, labels),
            MonitorMetric::F1Default | MonitorMetric::Acc => {
                let c = metrics::confusion(labels, &threshold_labels(scores, 0.5));
                if self == MonitorMetric::Acc {
                    c.accuracy()
                } else {
                    metrics::precision_recall_f1(&c, 1).2
                }
            }
        }
    }
}

impl std::str::FromStr for MonitorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(MonitorMetric::F1Default),
            "auc" => Ok(MonitorMetric::Auc),
            "acc" => Ok(MonitorMetric::Acc),
            other => Err(Error::Config(format!("unknown monitor {other:?} (f1|auc|acc)"))),
        }
    }
}

impl std::fmt::Display for MonitorMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub patience_lr: usize,
    pub patience_stop: usize,
    pub max_epochs: usize,
    /// Fraction of the training set held out (stratified) for the monitor;
    /// `None` monitors the training set itself.
    pub holdout: Option<f64>,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 30,
            initial_lr: 0.01,
            lr_decay: 0.1,
            patience_lr: 10,
            patience_stop: 20,
            max_epochs: 500,
            holdout: None,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1)".into()));
        }
        if self.patience_stop <= self.patience_lr {
            return Err(Error::Config("patience_stop must exceed patience_lr".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if let Some(h) = self.holdout {
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::Config("holdout must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

/// Schedule state, advanced once per epoch by [`TrainState::observe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub learning_rate: f64,
    pub best_score: f64,
    pub best_epoch: usize,
    pub stagnation_epochs: usize,
    /// Epochs completed.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(initial_lr: f64) -> Self {
        TrainState {
            learning_rate: initial_lr,
            best_score: f64::NEG_INFINITY,
            best_epoch: 0,
            stagnation_epochs: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's monitor score. Returns whether it improved and
    /// the stop reason if training should end.
    pub fn observe(&mut self, score: f64, config: &TrainConfig) -> (bool, Option<StopReason>) {
        self.epoch += 1;
        let improved = score > self.best_score;
        if improved {
            self.best_score = score;
            self.best_epoch = self.epoch;
            self.stagnation_epochs = 0;
        } else {
            self.stagnation_epochs += 1;
            if self.stagnation_epochs == config.patience_lr {
                self.learning_rate *= config.lr_decay;
            }
        }
        let stop = if self.stagnation_epochs >= config.patience_stop {
            Some(StopReason::Patience)
        } else if self.epoch >= config.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        (improved, stop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub monitor_metric: MonitorMetric,
    /// Mean training loss per epoch.
    pub loss: Vec<f64>,
    pub monitor: Vec<f64>,
    /// Learning rate used during each epoch.
    pub lr: Vec<f64>,
    pub stop_reason: StopReason,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_score: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trains `model` in place and leaves it at the best epoch's parameters.
pub fn train(model: &mut Model, data: &Dataset, monitor: MonitorMetric, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let [neg, pos] = data.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::MissingClass {
            partition: "training",
            class: u8::from(pos == 0),
        });
    }
    let (fit, watch) = match config.holdout {
        Some(h) => {
            let spec = SplitSpec {
                seed: config.seed,
                train_fraction: 1.0 - h,
                stratified: true,
            };
            let (a, b) = data::split_indices_stream(&data.labels, &spec, stream::HOLDOUT)?;
            (data.subset(&a), data.subset(&b))
        }
        None => (data.clone(), data.clone()),
    };

    let mut adam = AdamState::new(AdamConfig {
        learning_rate: config.initial_lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let mut state = TrainState::new(config.initial_lr);
    let mut best_params = model.flat_params();
    let mut report = TrainReport {
        monitor_metric: monitor,
        loss: Vec::new(),
        monitor: Vec::new(),
        lr: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        epochs_run: 0,
        best_epoch: 0,
        best_score: f64::NEG_INFINITY,
    };
    let n = fit.n_samples() as f64;
    loop {
        let epoch = state.epoch as u64;
        adam.learning_rate = state.learning_rate;
        let mut dropout_rng = rng::derive(config.seed, stream::DROPOUT, epoch);
        let mut epoch_loss = 0.0;
        for batch in data::batches(&fit, config.batch_size, config.seed, epoch) {
            let value = model.compute_gradients(&batch.features, &batch.labels, Some(&mut dropout_rng))?;
            adam.step(model);
            epoch_loss += value.total * batch.labels.len() as f64;
        }
        let score = monitor.score(&model.predict_proba(&watch.features)?, &watch.labels);
        report.loss.push(epoch_loss / n);
        report.monitor.push(score);
        report.lr.push(state.learning_rate);
        let (improved, stop) = state.observe(score, config);
        if improved {
            best_params = model.flat_params();
        }
        if let Some(reason) = stop {
            report.stop_reason = reason;
            break;
        }
    }
    model.set_flat_params(&best_params);
    report.epochs_run = state.epoch;
    report.best_epoch = state.best_epoch;
    report.best_score = state.best_score;
    Ok(report)
}

/// The same schedule applied to a global-view MLP.
pub fn train_baseline_dnn(
    data: &Dataset,
    model_config: ModelConfig,
    monitor: MonitorMetric,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let mut model = Model::dnn(data.n_features(), model_config, config.seed)?;
    let report = train(&mut model, data, monitor, config)?;
    Ok((model, report))
}
