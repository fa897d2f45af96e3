mod config;
mod output;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tab_attention::baselines::{BaselineKind, BaselineSpec};
use tab_attention::data::{self, Dataset, PreprocessOptions};
use tab_attention::experiment::{self, Experiment};
use tab_attention::par::Execution;

use config::Settings;

/// Multi-view self-attention stacking for credit default prediction.
#[derive(Parser)]
#[command(name = "tab-attention", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file, or a `.tads` cache written by `prepare`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Target column of a CSV dataset.
    #[arg(long)]
    target: Option<String>,
    /// `0..20`, `0..=19` or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// f1, auc or acc.
    #[arg(long)]
    monitor: Option<String>,
    /// Number of local views (0 to 6).
    #[arg(long)]
    views: Option<usize>,
    /// Feed the concatenated features straight to the output head.
    #[arg(long)]
    no_attention: bool,
    /// Monitor on a stratified holdout slice of the training set.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.2", value_name = "FRACTION")]
    holdout: Option<f64>,
    /// small or large.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment directory name.
    #[arg(long)]
    name: Option<String>,
    /// Run seeds one after another.
    #[arg(long)]
    sequential: bool,
    /// Any configuration key, e.g. `--set max_epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a CSV and write a binary dataset cache.
    Prepare(Common),
    /// Train and evaluate the model for every seed.
    Train(Common),
    /// Sweep the number of local views from 0 to 6.
    AblateViews(Common),
    /// Compare f1, AUC and Acc monitors and the model without attention.
    AblateMonitor(Common),
    /// Train comparison models.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// lr, dt, rf, gbdt, adaboost, dnn; all when omitted.
        #[arg(long, value_delimiter = ',')]
        kind: Vec<String>,
    },
    /// Render every experiment under a results directory as one table.
    Report {
        dir: PathBuf,
    },
}

fn settings(c: &Common) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &c.config {
        s.apply_file(path)?;
    }
    let flags: [(&str, Option<String>); 7] = [
        ("dataset", c.dataset.as_ref().map(|p| p.display().to_string())),
        ("target", c.target.clone()),
        ("seeds", c.seeds.clone()),
        ("monitor", c.monitor.clone()),
        ("views", c.views.map(|v| v.to_string())),
        ("variant", c.variant.clone()),
        ("name", c.name.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s.set(k, &v)?;
        }
    }
    if let Some(out) = &c.out {
        s.out = out.clone();
    }
    if c.no_attention {
        s.experiment.model.attention = false;
    }
    if let Some(h) = c.holdout {
        s.set("holdout", &h.to_string())?;
    }
    if c.sequential {
        s.sequential = true;
    }
    for kv in &c.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
        s.set(k.trim(), v)?;
    }
    Ok(s)
}

fn execution(s: &Settings) -> Execution {
    if s.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn load_dataset(s: &Settings) -> Result<Dataset> {
    let path = s.dataset()?;
    if path.extension().is_some_and(|e| e == "tads") {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        return Ok(data::read_cache(BufReader::new(f))?);
    }
    let table = data::load_csv(path, &s.target)?;
    let opts = PreprocessOptions {
        id_columns: s.id_columns.clone(),
        positive_label: s.positive_label.clone(),
    };
    Ok(data::preprocess(&table, &opts)?)
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    source: String,
    rows: usize,
    features: usize,
    class_counts: [usize; 2],
    imbalance_ratio: f64,
    feature_names: &'a [String],
    target: &'a str,
}

fn prepare(s: &Settings) -> Result<()> {
    let d = load_dataset(s)?;
    let src = s.dataset()?;
    let stem = src.file_stem().context("dataset path has no file name")?.to_string_lossy();
    let mut cache = Vec::new();
    data::write_cache(&d, &mut cache)?;
    let cache_path = s.out.join(format!("{stem}.tads"));
    output::write_atomic(&cache_path, &cache)?;
    let summary = DatasetSummary {
        source: src.display().to_string(),
        rows: d.n_samples(),
        features: d.n_features(),
        class_counts: d.class_counts(),
        imbalance_ratio: data::imbalance_ratio(&d)?,
        feature_names: &d.feature_names,
        target: &d.target_name,
    };
    output::write_atomic(&s.out.join(format!("{stem}.json")), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "{}: {} rows, {} features, IR 1:{:.2}",
        cache_path.display(),
        summary.rows,
        summary.features,
        summary.imbalance_ratio
    );
    Ok(())
}

fn finish(out: &Path, experiments: &[Experiment]) -> Result<()> {
    let mut columns = Vec::new();
    for e in experiments {
        let dir = output::write_experiment(out, e)?;
        eprintln!("wrote {}", dir.display());
        columns.push((e.name.clone(), e.aggregate()?));
    }
    print!("{}", output::render_table(&columns));
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(c) => prepare(&settings(&c)?),
        Command::Train(c) => {
            let s = settings(&c)?;
            let d = load_dataset(&s)?;
            let runs = experiment::sweep(&d, &s.experiment, &s.seeds, execution(&s))?;
            let name = s.name.clone().unwrap_or_else(|| "tab-attention".into());
            finish(&s.out, &[Experiment { name, runs }])
        }
        Command::AblateViews(c) => {
            let s = settings(&c)?;
            let d = load_dataset(&s)?;
            let counts: Vec<usize> = (0..=6).collect();
            let exps = experiment::ablate_views(&d, &s.experiment, &counts, &s.seeds, execution(&s))?;
            finish(&s.out, &exps)
        }
        Command::AblateMonitor(c) => {
            let s = settings(&c)?;
            let d = load_dataset(&s)?;
            let exps = experiment::ablate_monitor(&d, &s.experiment, &s.seeds, execution(&s))?;
            finish(&s.out, &exps)
        }
        Command::Baseline { common, kind } => {
            let s = settings(&common)?;
            let d = load_dataset(&s)?;
            let kinds: Vec<BaselineKind> = if kind.is_empty() {
                BaselineKind::ALL.to_vec()
            } else {
                kind.iter().map(|k| k.parse()).collect::<Result<_, _>>()?
            };
            let mut exps = Vec::new();
            for k in kinds {
                let mut spec = BaselineSpec::new(k, 0);
                spec.dnn = s.experiment.model;
                spec.dnn_train = s.experiment.train;
                spec.dnn_monitor = s.experiment.monitor;
                let e = &s.experiment;
                let runs = experiment::baseline_sweep(&d, &spec, |seed| e.split_spec(seed), &s.seeds, execution(&s))?;
                exps.push(Experiment {
                    name: format!("baseline-{}", k.name().to_lowercase()),
                    runs,
                });
            }
            finish(&s.out, &exps)
        }
        Command::Report { dir } => {
            let columns = output::collect_aggregates(&dir)?;
            let table = output::render_table(&columns);
            output::write_atomic(&dir.join("report.md"), table.as_bytes())?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
