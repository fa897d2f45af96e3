//! Result files and report tables.
//!
//! Layout per experiment: `<out>/<experiment>/<seed>.json`,
//! `aggregate.csv` (one row per seed, then `mean` and `std`),
//! `aggregate.json` and `report.md`. Every file is written to a temporary
//! sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tab_attention::experiment::Experiment;
use tab_attention::metrics::{Aggregate, MetricsReport};

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn aggregate_csv(experiment: &Experiment, agg: &Aggregate) -> String {
    let mut s = MetricsReport::csv_header();
    s.push('\n');
    for r in &experiment.runs {
        s.push_str(&r.metrics.csv_row(r.seed));
        s.push('\n');
    }
    for (label, pick) in [("mean", 0), ("std", 1)] {
        s.push_str(label);
        for (_, m) in agg.fields() {
            let v = if pick == 0 { m.mean } else { m.std };
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Writes every file of one experiment and returns its directory.
pub fn write_experiment(out: &Path, experiment: &Experiment) -> Result<PathBuf> {
    let dir = out.join(&experiment.name);
    for run in &experiment.runs {
        write_atomic(&dir.join(format!("{}.json", run.seed)), serde_json::to_string_pretty(run)?.as_bytes())?;
    }
    let agg = experiment.aggregate()?;
    write_atomic(&dir.join("aggregate.csv"), aggregate_csv(experiment, &agg).as_bytes())?;
    write_atomic(&dir.join("aggregate.json"), serde_json::to_string_pretty(&agg)?.as_bytes())?;
    let table = render_table(&[(experiment.name.clone(), agg)]);
    write_atomic(&dir.join("report.md"), table.as_bytes())?;
    Ok(dir)
}

const ROWS: [(&str, &str); 10] = [
    ("Acc", "acc"),
    ("AUC", "auc"),
    ("KS", "ks"),
    ("Precision_0", "precision_0"),
    ("Recall_0", "recall_0"),
    ("f1_0", "f1_0"),
    ("Precision_1", "precision_1"),
    ("Recall_1", "recall_1"),
    ("f1_1", "f1_1"),
    ("epoch", "epochs"),
];

/// Metric rows by configuration columns, `mean±std` cells.
pub fn render_table(columns: &[(String, Aggregate)]) -> String {
    let mut s = String::from("| metric |");
    for (name, _) in columns {
        let _ = write!(s, " {name} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(columns.len()));
    s.push('\n');
    for (label, field) in ROWS {
        let _ = write!(s, "| {label} |");
        for (_, agg) in columns {
            let m = agg.fields().into_iter().find(|(f, _)| *f == field).expect("known field").1;
            if field == "epochs" {
                let _ = write!(s, " {:.0}±{:.0} |", m.mean, m.std);
            } else {
                let _ = write!(s, " {m:.2} |");
            }
        }
        s.push('\n');
    }
    s
}

/// Collects `<dir>/*/aggregate.json` sorted by experiment name.
pub fn collect_aggregates(dir: &Path) -> Result<Vec<(String, Aggregate)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading results directory {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let agg_path = path.join("aggregate.json");
        if path.is_dir() && agg_path.is_file() {
            let text = fs::read_to_string(&agg_path)?;
            let agg: Aggregate =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", agg_path.display()))?;
            let name = path.file_name().expect("directory entry").to_string_lossy().into_owned();
            out.push((name, agg));
        }
    }
    if out.is_empty() {
        bail!("no experiment results (*/aggregate.json) found in {}", dir.display());
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
