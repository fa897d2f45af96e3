//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tab_attention::experiment::ExperimentConfig;
use tab_attention::model::Variant;
use tab_attention::train::MonitorMetric;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub dataset: Option<PathBuf>,
    pub target: String,
    pub id_columns: Vec<String>,
    pub positive_label: Option<String>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub name: Option<String>,
    pub sequential: bool,
    pub experiment: ExperimentConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            dataset: None,
            target: "default".into(),
            id_columns: Vec::new(),
            positive_label: None,
            seeds: (0..20).collect(),
            out: PathBuf::from("results"),
            name: None,
            sequential: false,
            experiment: ExperimentConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "target",
    "id_columns",
    "positive_label",
    "seeds",
    "out",
    "name",
    "batch_size",
    "initial_lr",
    "max_epochs",
    "patience_lr",
    "patience_stop",
    "monitor",
    "views",
    "attention",
    "holdout",
    "variant",
    "lambda",
    "dropout",
    "weight_decay",
    "train_fraction",
    "stratified",
    "sequential",
];

/// `0..20`, `0..=19` or a comma list such as `0,3,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (a.trim().parse()?..=b.trim().parse()?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse()?..b.trim().parse()?).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed {t:?}")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        bail!("seed list {s:?} is empty");
    }
    Ok(seeds)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected true or false, got {v:?}"),
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let e = &mut self.experiment;
        let num = |what: &str| -> Result<f64> { v.parse::<f64>().with_context(|| format!("{what}: bad number {v:?}")) };
        let int = |what: &str| -> Result<usize> { v.parse::<usize>().with_context(|| format!("{what}: bad integer {v:?}")) };
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "target" => self.target = v.to_string(),
            "id_columns" => {
                self.id_columns = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "positive_label" => self.positive_label = Some(v.to_string()),
            "seeds" => self.seeds = parse_seeds(v)?,
            "out" => self.out = PathBuf::from(v),
            "name" => self.name = Some(v.to_string()),
            "batch_size" => e.train.batch_size = int(key)?,
            "initial_lr" => e.train.initial_lr = num(key)?,
            "max_epochs" => e.train.max_epochs = int(key)?,
            "patience_lr" => e.train.patience_lr = int(key)?,
            "patience_stop" => e.train.patience_stop = int(key)?,
            "monitor" => e.monitor = v.parse::<MonitorMetric>()?,
            "views" => {
                let k = int(key)?;
                if k > 6 {
                    bail!("views: at most 6 local views, got {k}");
                }
                e.n_views = k;
            }
            "attention" => e.model.attention = parse_bool(key, v)?,
            "holdout" => {
                e.train.holdout = match v {
                    "none" | "off" | "0" => None,
                    _ => Some(num(key)?),
                }
            }
            "variant" => e.model.variant = v.parse::<Variant>()?,
            "lambda" => e.model.aux_loss_weight = num(key)?,
            "dropout" => e.model.dropout = num(key)?,
            "weight_decay" => e.train.weight_decay = num(key)?,
            "train_fraction" => e.train_fraction = num(key)?,
            "stratified" => e.stratified = parse_bool(key, v)?,
            "sequential" => self.sequential = parse_bool(key, v)?,
            other => bail!("unknown configuration key {other:?}; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), i + 1);
            };
            self.set(k.trim(), v).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .context("no dataset given (use --dataset or `dataset = ...` in the config file)")
    }
}
