//! CSV ingestion, preprocessing, seeded splits and mini-batches.
//!
//! Preprocessing order: drop id columns, drop columns with more than 60%
//! missing cells, integer-encode categorical columns by first appearance,
//! impute missing cells with the column mode, then min-max scale every
//! feature to `[0, 1]`.
//!
//! Scaling runs on the full table before any split, so test rows influence
//! the scaling range.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{self, stream};

/// Columns with a strictly larger missing fraction are dropped.
pub const MAX_MISSING_FRACTION: f64 = 0.6;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn parse(raw: &str) -> Cell {
        let t = raw.trim();
        if t.is_empty() {
            Cell::Missing
        } else if let Ok(v) = t.parse::<f64>() {
            if v.is_finite() {
                Cell::Num(v)
            } else {
                Cell::Text(t.to_string())
            }
        } else {
            Cell::Text(t.to_string())
        }
    }

    fn key(&self) -> Option<String> {
        match self {
            Cell::Num(v) => Some(format!("{v}")),
            Cell::Text(s) => Some(s.clone()),
            Cell::Missing => None,
        }
    }
}

/// Column-oriented raw table with a marked target column.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub columns: Vec<Vec<Cell>>,
    pub target: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn target_name(&self) -> &str {
        &self.column_names[self.target]
    }
}

pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target_column).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_csv<R: Read>(input: R, target_column: &str) -> Result<RawTable> {
    let csv_err = |source| Error::Csv {
        path: "<reader>".into(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let column_names: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target = column_names
        .iter()
        .position(|c| c == target_column)
        .ok_or_else(|| Error::MissingTarget(target_column.to_string()))?;
    let mut columns: Vec<Vec<Cell>> = vec![Vec::new(); column_names.len()];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        for (col, raw) in columns.iter_mut().zip(record.iter()) {
            col.push(Cell::parse(raw));
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Empty("csv has a header but no rows"));
    }
    Ok(RawTable {
        column_names,
        columns,
        target,
    })
}

/// Numeric features scaled to `[0, 1]` plus binary labels (1 = default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

#[derive(Clone, Debug, Default)]
pub struct PreprocessOptions {
    /// Columns removed before anything else.
    pub id_columns: Vec<String>,
    /// Target value mapped to label 1. When unset, numeric targets map their
    /// larger value to 1 and text targets their lexicographically larger one.
    pub positive_label: Option<String>,
}

impl PreprocessOptions {
    pub fn with_id_columns<S: AsRef<str>>(ids: &[S]) -> Self {
        PreprocessOptions {
            id_columns: ids.iter().map(|s| s.as_ref().to_string()).collect(),
            positive_label: None,
        }
    }
}

pub fn preprocess(table: &RawTable, options: &PreprocessOptions) -> Result<Dataset> {
    let labels = encode_target(table, options.positive_label.as_deref())?;
    let n = table.n_rows();

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (c, (name, cells)) in table.column_names.iter().zip(&table.columns).enumerate() {
        if c == table.target || options.id_columns.iter().any(|id| id == name) {
            continue;
        }
        let missing = cells.iter().filter(|v| matches!(v, Cell::Missing)).count();
        if missing as f64 > MAX_MISSING_FRACTION * n as f64 {
            continue;
        }
        let mut values = encode_column(cells);
        if let Some(mode) = mode(values.iter().flatten().copied()) {
            names.push(name.clone());
            cols.push(values.iter_mut().map(|v| v.unwrap_or(mode)).collect());
        }
    }
    if cols.is_empty() {
        return Err(Error::NoFeatures);
    }
    for col in &mut cols {
        min_max_scale(col);
    }

    let width = cols.len();
    let mut data = Vec::with_capacity(n * width);
    for r in 0..n {
        data.extend(cols.iter().map(|c| c[r]));
    }
    Ok(Dataset {
        features: Matrix::from_vec(n, width, data),
        labels,
        feature_names: names,
        target_name: table.target_name().to_string(),
    })
}

fn encode_target(table: &RawTable, positive: Option<&str>) -> Result<Vec<u8>> {
    let name = table.target_name().to_string();
    let cells = &table.columns[table.target];
    if cells.iter().any(|c| matches!(c, Cell::Missing)) {
        return Err(Error::TargetHasMissing(name));
    }
    let mut distinct: Vec<&Cell> = Vec::new();
    for c in cells {
        if !distinct.contains(&c) {
            distinct.push(c);
        }
    }
    if distinct.len() != 2 {
        return Err(Error::TargetNotBinary {
            column: name,
            found: distinct.len(),
        });
    }
    let positive_cell = match positive {
        Some(label) => {
            let wanted = Cell::parse(label);
            let hit = distinct
                .iter()
                .find(|c| ***c == wanted || c.key().as_deref() == Some(label.trim()));
            (*hit.ok_or_else(|| Error::UnknownPositiveLabel {
                column: name.clone(),
                label: label.to_string(),
            })?)
            .clone()
        }
        None => match (distinct[0], distinct[1]) {
            (Cell::Num(a), Cell::Num(b)) => Cell::Num(a.max(*b)),
            (a, b) => {
                let (ka, kb) = (a.key().unwrap(), b.key().unwrap());
                if ka > kb {
                    a.clone()
                } else {
                    b.clone()
                }
            }
        },
    };
    Ok(cells.iter().map(|c| u8::from(*c == positive_cell)).collect())
}

/// Numeric columns pass through; any column with a text cell is encoded as
/// integer codes in first-appearance order.
fn encode_column(cells: &[Cell]) -> Vec<Option<f64>> {
    let categorical = cells.iter().any(|c| matches!(c, Cell::Text(_)));
    if !categorical {
        return cells
            .iter()
            .map(|c| match c {
                Cell::Num(v) => Some(*v),
                _ => None,
            })
            .collect();
    }
    let mut codes: HashMap<String, usize> = HashMap::new();
    cells
        .iter()
        .map(|c| {
            c.key().map(|k| {
                let next = codes.len();
                *codes.entry(k).or_insert(next) as f64
            })
        })
        .collect()
}

/// Most frequent value; ties go to the smaller value.
fn mode(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sorted: Vec<f64> = values.collect();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if best.map_or(true, |(_, n)| j - i > n) {
            best = Some((sorted[i], j - i));
        }
        i = j;
    }
    best.map(|(v, _)| v)
}

fn min_max_scale(col: &mut [f64]) {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for v in col.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| f64::from(y)).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Copy restricted to the given feature columns.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_cols(cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            target_name: self.target_name.clone(),
        }
    }

    /// Writes features and target as CSV with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: "<writer>".into(),
            source,
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..self.n_samples() {
            let mut rec: Vec<String> = self.features.row(r).iter().map(|v| format!("{v}")).collect();
            rec.push(self.labels[r].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

/// Minority-to-majority imbalance expressed as `r` in `1:r`.
pub fn imbalance_ratio(data: &Dataset) -> Result<f64> {
    let [neg, pos] = data.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::MissingClass {
            partition: "dataset",
            class: if neg == 0 { 0 } else { 1 },
        });
    }
    Ok(neg.max(pos) as f64 / neg.min(pos) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl SplitSpec {
    pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

    pub fn new(seed: u64) -> Self {
        SplitSpec {
            seed,
            train_fraction: Self::DEFAULT_TRAIN_FRACTION,
            stratified: true,
        }
    }
}

/// Row indices of the two partitions, each sorted ascending.
pub fn split_indices(labels: &[u8], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices_stream(labels, spec, stream::SPLIT)
}

pub(crate) fn split_indices_stream(
    labels: &[u8],
    spec: &SplitSpec,
    stream_tag: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n = labels.len();
    let total_train = (spec.train_fraction * n as f64).round() as usize;
    let mut rng = rng::derive(spec.seed, stream_tag, 0);
    let mut train = Vec::with_capacity(total_train);
    let mut test = Vec::with_capacity(n - total_train);
    if spec.stratified {
        let groups: [Vec<usize>; 2] = [0u8, 1].map(|c| (0..n).filter(|&i| labels[i] == c).collect());
        let quotas = allocate(&[groups[0].len(), groups[1].len()], total_train, spec.train_fraction);
        for (mut g, q) in groups.into_iter().zip(quotas) {
            g.shuffle(&mut rng);
            train.extend_from_slice(&g[..q]);
            test.extend_from_slice(&g[q..]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train.extend_from_slice(&all[..total_train]);
        test.extend_from_slice(&all[total_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for (part, idx) in [("train", &train), ("test", &test)] {
        for class in [0u8, 1] {
            if !idx.iter().any(|&i| labels[i] == class) {
                return Err(Error::MissingClass { partition: part, class });
            }
        }
    }
    Ok((train, test))
}

/// Largest-remainder allocation of `total` across groups in proportion to
/// `fraction`; each quota is within one of `fraction * size`. Remainders
/// prefer groups that still leave a sample for the other partition.
fn allocate(sizes: &[usize], total: usize, fraction: f64) -> Vec<usize> {
    let ideal: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quota: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // earlier passes never take a group's last sample from the other
    // partition, going one past the ideal ceiling before they would
    for (keep, slack) in [(1, 0), (1, 1), (0, 0)] {
        for &g in &order {
            if assigned < total && quota[g] < ideal[g].ceil() as usize + slack && quota[g] + keep < sizes[g] {
                quota[g] += 1;
                assigned += 1;
            }
        }
    }
    quota
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(&data.labels, spec)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// A mini-batch of rows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

/// Row indices for each batch of one epoch; the permutation is a function
/// of `(seed, epoch)` only.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive(seed, stream::BATCHES, epoch));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batches(data: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Vec<Batch> {
    batch_indices(data.n_samples(), batch_size, seed, epoch)
        .into_iter()
        .map(|idx| Batch {
            features: data.features.select_rows(&idx),
            labels: idx.iter().map(|&i| f64::from(data.labels[i])).collect(),
        })
        .collect()
}

// Binary dataset cache, little endian:
//   b"TADS", u32 version, u64 rows, u64 cols,
//   cols+1 names (u32 byte length + utf8; the target name last),
//   column-major f64 features, then one u8 label per row.
const CACHE_MAGIC: &[u8; 4] = b"TADS";
const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(data.n_samples() as u64).to_le_bytes())?;
    out.write_all(&(data.n_features() as u64).to_le_bytes())?;
    for name in data.feature_names.iter().chain(std::iter::once(&data.target_name)) {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    for c in 0..data.n_features() {
        for r in 0..data.n_samples() {
            out.write_all(&data.features.get(r, c).to_le_bytes())?;
        }
    }
    out.write_all(&data.labels)?;
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<Dataset> {
    let bad = |d: &str| Error::format("dataset cache", d);
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<dataset cache>", e))?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(bad("unsupported version"));
    }
    let rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut names = Vec::with_capacity(cols + 1);
    for _ in 0..=cols {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let s = std::str::from_utf8(take(len)?).map_err(|_| bad("name is not utf8"))?;
        names.push(s.to_string());
    }
    let target_name = names.pop().unwrap();
    let mut features = Matrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            features.set(r, c, f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
    }
    let labels = take(rows)?.to_vec();
    if labels.iter().any(|&y| y > 1) {
        return Err(bad("label outside {0, 1}"));
    }
    Ok(Dataset {
        features,
        labels,
        feature_names: names,
        target_name,
    })
}
