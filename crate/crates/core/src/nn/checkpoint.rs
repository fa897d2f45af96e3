//! Text parameter checkpoints.
//!
//! ```text
//! tab-attention-params v1
//! blocks <count>
//! <name> <rows> <cols>
//! <rows*cols values, space separated, shortest round-trip exponent form>
//! ...
//! ```
//!
//! Values are written with `{:e}`, which Rust guarantees to parse back to
//! the identical `f64`.

use std::io::{BufRead, Write};

use super::Parameterized;
use crate::error::{Error, Result};

const MAGIC: &str = "tab-attention-params v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub shape: (usize, usize),
    pub values: Vec<f64>,
}

pub fn write_params<W: Write, P: Parameterized + ?Sized>(out: &mut W, params: &mut P) -> std::io::Result<()> {
    let mut records = Vec::new();
    params.visit_params(&mut |b| {
        records.push(ParamRecord {
            name: b.name,
            shape: b.shape,
            values: b.values.to_vec(),
        })
    });
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "blocks {}", records.len())?;
    for r in &records {
        writeln!(out, "{} {} {}", r.name, r.shape.0, r.shape.1)?;
        let line: Vec<String> = r.values.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_params<R: BufRead>(input: R) -> Result<Vec<ParamRecord>> {
    let bad = |d: String| Error::format("parameter checkpoint", d);
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file".into()))?
            .map_err(|e| bad(e.to_string()))
    };
    if next()? != MAGIC {
        return Err(bad("missing header".into()));
    }
    let count: usize = next()?
        .strip_prefix("blocks ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("missing block count".into()))?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let head = next()?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(bad(format!("bad block header `{head}`")));
        };
        let rows: usize = rows.parse().map_err(|_| bad(format!("bad rows in `{head}`")))?;
        let cols: usize = cols.parse().map_err(|_| bad(format!("bad cols in `{head}`")))?;
        let body = next()?;
        let values = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad value `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != rows * cols {
            return Err(bad(format!("block {name}: expected {} values, got {}", rows * cols, values.len())));
        }
        records.push(ParamRecord {
            name: name.to_string(),
            shape: (rows, cols),
            values,
        });
    }
    Ok(records)
}

/// Copies records into `params`, checking names and shapes block by block.
pub fn load_params<P: Parameterized + ?Sized>(params: &mut P, records: &[ParamRecord]) -> Result<()> {
    let mut idx = 0;
    let mut err = None;
    params.visit_params(&mut |b| {
        if err.is_some() {
            return;
        }
        match records.get(idx) {
            Some(r) if r.name == b.name && r.shape == b.shape => b.values.copy_from_slice(&r.values),
            Some(r) => err = Some(format!("block {idx}: expected {} {:?}, found {} {:?}", b.name, b.shape, r.name, r.shape)),
            None => err = Some(format!("missing block {}", b.name)),
        }
        idx += 1;
    });
    if let Some(e) = err {
        return Err(Error::format("parameter checkpoint", e));
    }
    if idx != records.len() {
        return Err(Error::format("parameter checkpoint", format!("{} extra blocks", records.len() - idx)));
    }
    Ok(())
}
