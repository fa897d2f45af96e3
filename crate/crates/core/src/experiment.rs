//! Seed sweeps: split, build views on the training partition, train and
//! evaluate on the test partition.
//!
//! Every per-seed result is a function of `(data, config, seed)` alone, so
//! a seed produces the same numbers whether it runs by itself or inside a
//! parallel sweep.

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_predict, BaselineSpec};
use crate::data::{self, Dataset, SplitSpec};
use crate::error::Result;
use crate::metrics::{self, Aggregate, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::par::{self, Execution};
use crate::train::{train, MonitorMetric, TrainConfig, TrainReport};
use crate::views::{build_view_set, ViewConfig, ViewSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub views: ViewConfig,
    /// Number of local views used, a prefix of the fixed view order.
    pub n_views: usize,
    pub monitor: MonitorMetric,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            views: ViewConfig::default(),
            n_views: 6,
            monitor: MonitorMetric::F1Default,
            train_fraction: 0.8,
            stratified: true,
        }
    }
}

impl ExperimentConfig {
    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            seed,
            train_fraction: self.train_fraction,
            stratified: self.stratified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Absent for non-iterative baselines.
    pub training: Option<TrainReport>,
    /// Digest of the view set used; absent for baselines.
    pub view_digest: Option<String>,
}

/// Named group of per-seed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub runs: Vec<RunResult>,
}

impl Experiment {
    pub fn aggregate(&self) -> Result<Aggregate> {
        metrics::aggregate(&self.runs.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>())
    }
}

/// Trains one model on the first `config.n_views` local views.
/// Zero views means the global-view MLP without attention.
pub fn run_with_views(
    train_set: &Dataset,
    test_set: &Dataset,
    views: &ViewSet,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunResult> {
    let views = views.prefix(config.n_views);
    let mut model = if views.locals.is_empty() {
        Model::dnn(train_set.n_features(), config.model, seed)?
    } else {
        Model::new(&views, config.model, seed)?
    };
    let tc = TrainConfig { seed, ..config.train };
    let report = train(&mut model, train_set, config.monitor, &tc)?;
    let scores = model.predict_proba(&test_set.features)?;
    let metrics = metrics::evaluate(&scores, &test_set.labels, 0.5).with_epochs(report.epochs_run, report.best_epoch);
    Ok(RunResult {
        seed,
        metrics,
        training: Some(report),
        view_digest: Some(views.digest()),
    })
}

pub fn run_seed(data: &Dataset, config: &ExperimentConfig, seed: u64, exec: Execution) -> Result<RunResult> {
    let (train_set, test_set) = data::split(data, &config.split_spec(seed))?;
    let views = build_view_set(&train_set, &config.views, seed, exec)?;
    run_with_views(&train_set, &test_set, &views, config, seed)
}

pub fn sweep(data: &Dataset, config: &ExperimentConfig, seeds: &[u64], exec: Execution) -> Result<Vec<RunResult>> {
    par::map(exec, seeds, |&s| run_seed(data, config, s, exec))
        .into_iter()
        .collect()
}

/// Runs every view count in `counts` per seed, building the view set once
/// per seed. Returns one experiment per count, named `views-<k>`.
pub fn ablate_views(
    data: &Dataset,
    config: &ExperimentConfig,
    counts: &[usize],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<Experiment>> {
    let per_seed: Vec<Result<Vec<RunResult>>> = par::map(exec, seeds, |&seed| {
        let (train_set, test_set) = data::split(data, &config.split_spec(seed))?;
        let views = build_view_set(&train_set, &config.views, seed, exec)?;
        counts
            .iter()
            .map(|&k| {
                let cfg = ExperimentConfig { n_views: k, ..*config };
                run_with_views(&train_set, &test_set, &views, &cfg, seed)
            })
            .collect()
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, k)| Experiment {
            name: format!("views-{k}"),
            runs: per_seed.iter().map(|runs| runs[i].clone()).collect(),
        })
        .collect())
}

/// The four monitor-ablation configurations: f1, AUC and Acc monitors with
/// attention, and the f1 monitor without attention (`tab-star`).
pub fn monitor_configs(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut out: Vec<(String, ExperimentConfig)> = MonitorMetric::ALL
        .iter()
        .map(|&m| {
            (
                format!("monitor-{}", m.name()),
                ExperimentConfig {
                    monitor: m,
                    model: ModelConfig {
                        attention: true,
                        ..base.model
                    },
                    ..*base
                },
            )
        })
        .collect();
    out.push((
        "tab-star".into(),
        ExperimentConfig {
            monitor: MonitorMetric::F1Default,
            model: ModelConfig {
                attention: false,
                ..base.model
            },
            ..*base
        },
    ));
    out
}

pub fn ablate_monitor(data: &Dataset, base: &ExperimentConfig, seeds: &[u64], exec: Execution) -> Result<Vec<Experiment>> {
    let configs = monitor_configs(base);
    let per_seed: Vec<Result<Vec<RunResult>>> = par::map(exec, seeds, |&seed| {
        let (train_set, test_set) = data::split(data, &base.split_spec(seed))?;
        let views = build_view_set(&train_set, &base.views, seed, exec)?;
        configs
            .iter()
            .map(|(_, cfg)| run_with_views(&train_set, &test_set, &views, cfg, seed))
            .collect()
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(configs
        .iter()
        .enumerate()
        .map(|(i, (name, _))| Experiment {
            name: name.clone(),
            runs: per_seed.iter().map(|runs| runs[i].clone()).collect(),
        })
        .collect())
}

pub fn baseline_sweep(
    data: &Dataset,
    spec: &BaselineSpec,
    split: impl Fn(u64) -> SplitSpec + Sync,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<RunResult>> {
    par::map(exec, seeds, |&seed| {
        let (train_set, test_set) = data::split(data, &split(seed))?;
        let spec = BaselineSpec { seed, ..*spec };
        let out = fit_predict(&spec, &train_set, &test_set, exec)?;
        Ok(RunResult {
            seed,
            metrics: out.report,
            training: None,
            view_digest: None,
        })
    })
    .into_iter()
    .collect()
}
