// SPDX-License-Identifier: Apache-2.0

//! File formats: network specs (JSON), binary datasets, regression data and
//! parameter grids (CSV), plus the CSV writers used by the CLI.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::CoefficientSet;
use crate::graph::{BayesNetGraph, BetaParams, Dataset, EntryParams, ParentConfig, PerEntry};
use crate::laplace::PerturbedUpdates;
use crate::map::GridSpec;

/// One prior entry that differs from the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOverride {
    pub node: usize,
    pub config: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default = "uniform_pair")]
    pub default: [f64; 2],
    #[serde(default)]
    pub overrides: Vec<PriorOverride>,
}

fn uniform_pair() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            default: uniform_pair(),
            overrides: Vec::new(),
        }
    }
}

/// `{"nodes": N, "parents": [[...], ...], "priors": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: usize,
    pub parents: Vec<Vec<usize>>,
    #[serde(default)]
    pub priors: PriorSpec,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("network spec: {e}")))
    }

    pub fn graph(&self) -> Result<BayesNetGraph> {
        BayesNetGraph::new(self.nodes, self.parents.clone())
    }

    pub fn priors(&self, graph: &BayesNetGraph) -> Result<EntryParams> {
        let [a, b] = self.priors.default;
        let mut priors = EntryParams::filled(graph, BetaParams::new(a, b)?);
        for o in &self.priors.overrides {
            let slot = priors.get_mut(o.node, ParentConfig(o.config)).ok_or(Error::MissingPriorEntry {
                node: o.node,
                config: o.config,
            })?;
            *slot = BetaParams::new(o.alpha, o.beta)?;
        }
        Ok(priors)
    }

    /// Graph and priors together.
    pub fn build(&self) -> Result<(BayesNetGraph, EntryParams)> {
        let g = self.graph()?;
        let p = self.priors(&g)?;
        Ok((g, p))
    }
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Headerless 0/1 CSV, one record per line, column `c` is node `c`.
pub fn read_dataset_csv(input: impl Read) -> Result<Dataset> {
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (line, rec) in reader(input).records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| match f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Parse(format!("line {}: value {other:?} is not 0 or 1", line + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let width = rows.first().map(Vec::len).ok_or(Error::Parse("dataset is empty".into()))?;
    Dataset::from_rows(width, &rows)
}

pub fn write_dataset_csv(data: &Dataset, mut out: impl Write) -> Result<()> {
    for r in 0..data.len() {
        let line: Vec<&str> = (0..data.node_count())
            .map(|c| if data.value(r, c) { "1" } else { "0" })
            .collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn numeric_rows(input: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (line, rec) in reader(input).records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            // A non-numeric first line is a header.
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        }
    }
    if let Some(first) = rows.first() {
        let width = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: bad.len(),
            });
        }
    }
    Ok(rows)
}

/// Numeric CSV whose last column is the target; an optional header line is
/// skipped.
pub fn read_regression_csv(input: impl Read) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let rows = numeric_rows(input)?;
    let width = rows.first().map(Vec::len).ok_or(Error::Parse("regression data is empty".into()))?;
    if width < 2 {
        return Err(Error::Parse("need at least one feature column and a target".into()));
    }
    let d = width - 1;
    let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    let y = DVector::from_fn(rows.len(), |r, _| rows[r][d]);
    Ok((x, y))
}

/// Grid CSV: `θ components..., prior mass` per line.
pub fn read_grid_csv(input: impl Read) -> Result<GridSpec> {
    let rows = numeric_rows(input)?;
    if rows.is_empty() {
        return Err(Error::Parse("grid is empty".into()));
    }
    let (points, masses) = rows
        .into_iter()
        .map(|mut r| {
            let m = r.pop().unwrap_or(f64::NAN);
            (r, m)
        })
        .unzip();
    GridSpec::new(points, masses)
}

/// `node,config,z1,z2` per entry.
pub fn write_updates_csv(updates: &PerturbedUpdates, mut out: impl Write) -> Result<()> {
    writeln!(out, "node,config,z1,z2")?;
    for (i, j, c) in updates.entries.iter() {
        writeln!(out, "{i},{},{},{}", j.0, c.alpha, c.beta)?;
    }
    Ok(())
}

/// `gamma,value` with `gamma` in hexadecimal.
pub fn write_coefficients_csv(coeffs: &CoefficientSet, mut out: impl Write) -> Result<()> {
    writeln!(out, "gamma,value")?;
    for (g, v) in coeffs.iter() {
        writeln!(out, "{},{v}", g.to_hex())?;
    }
    Ok(())
}

/// `node,config,alpha,beta` per entry.
pub fn write_params_csv(params: &EntryParams, mut out: impl Write) -> Result<()> {
    writeln!(out, "node,config,alpha,beta")?;
    for (i, j, p) in params.iter() {
        writeln!(out, "{i},{},{},{}", j.0, p.alpha, p.beta)?;
    }
    Ok(())
}

/// `sample,node,config,theta` for a sequence of parameter draws.
pub fn write_draws_csv(draws: &[PerEntry<f64>], mut out: impl Write) -> Result<()> {
    writeln!(out, "sample,node,config,theta")?;
    for (s, d) in draws.iter().enumerate() {
        for (i, j, t) in d.iter() {
            writeln!(out, "{s},{i},{},{t}", j.0)?;
        }
    }
    Ok(())
}
