//! Balance-sheet ingestion and stability scans.
//!
//! A scan fixes the interbank fraction `theta` and a shock severity `f`, sets
//! `sigma = f * mu_E`, and solves the mean-field map with
//! `a = (theta mu_A - mu_E) / sigma` and `b = theta mu_A / sigma`.

use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::LocationScaleDistribution;
use crate::error::{Error, Result};
use crate::meanfield::{equilibrium, MeanFieldParams};

pub const HEADER: [&str; 5] = ["bank_id", "country", "year", "total_assets", "tier1_capital"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSheetRecord {
    pub bank_id: String,
    pub country: String,
    pub year: i32,
    pub total_assets: f64,
    /// `None` when the field was blank.
    pub tier1_capital: Option<f64>,
    /// Set for missing or nonpositive Tier 1 capital.
    pub excluded: bool,
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("cannot parse {name} from `{raw}`"),
    })
}

/// Reads records from CSV with header
/// `bank_id,country,year,total_assets,tier1_capital`.
pub fn load_balance_sheets<R: Read>(source: R) -> Result<Vec<BalanceSheetRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != HEADER {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header `{}`, found `{}`", HEADER.join(","), cols.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let total_assets: f64 = parse_field(&row[3], "total_assets", line)?;
        if !(total_assets > 0.0) || !total_assets.is_finite() {
            return Err(Error::Parse {
                line,
                reason: format!("total_assets must be positive, got {total_assets}"),
            });
        }
        let tier1_capital = match row[4].trim() {
            "" => None,
            raw => Some(parse_field::<f64>(raw, "tier1_capital", line)?),
        };
        out.push(BalanceSheetRecord {
            bank_id: row[0].trim().to_string(),
            country: row[1].trim().to_string(),
            year: parse_field(&row[2], "year", line)?,
            total_assets,
            tier1_capital,
            excluded: !tier1_capital.is_some_and(|e| e > 0.0),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub mu_a: f64,
    pub std_a: f64,
    pub mu_e: f64,
    pub std_e: f64,
    /// `mu_E / mu_A`.
    pub leverage: f64,
    pub n_banks: usize,
    /// True when fewer than two banks were included; the stds are then 0.
    pub std_undefined: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Means and sample standard deviations over the included records of one
/// country and year.
pub fn summarize(records: &[BalanceSheetRecord], country: &str, year: i32) -> Result<CalibrationSummary> {
    let (assets, capital): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| !r.excluded && r.country == country && r.year == year)
        .map(|r| (r.total_assets, r.tier1_capital.unwrap_or(0.0)))
        .unzip();
    if assets.is_empty() {
        return Err(Error::EmptySelection {
            country: country.to_string(),
            year,
        });
    }
    let (mu_a, std_a) = mean_std(&assets);
    let (mu_e, std_e) = mean_std(&capital);
    Ok(CalibrationSummary {
        mu_a,
        std_a,
        mu_e,
        std_e,
        leverage: mu_e / mu_a,
        n_banks: assets.len(),
        std_undefined: assets.len() < 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub theta: f64,
    pub f: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMatrix {
    pub theta_grid: Vec<f64>,
    pub f_grid: Vec<f64>,
    pub p0: f64,
    /// `cells[i][j]` belongs to `(theta_grid[i], f_grid[j])`.
    pub cells: Vec<Vec<ScanCell>>,
}

impl ScanMatrix {
    pub fn get(&self, i: usize, j: usize) -> &ScanCell {
        &self.cells[i][j]
    }

    /// The row for an exact `theta` value, if present.
    pub fn row(&self, theta: f64) -> Option<&[ScanCell]> {
        self.theta_grid
            .iter()
            .position(|t| *t == theta)
            .map(|i| self.cells[i].as_slice())
    }

    /// Row-major iteration over all cells.
    pub fn iter(&self) -> impl Iterator<Item = &ScanCell> {
        self.cells.iter().flatten()
    }
}

impl CalibrationSummary {
    /// Mean-field coordinates for one `(theta, f)` pair.
    pub fn coordinates(&self, theta: f64, f: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid("theta", format!("must lie in [0, 1], got {theta}")));
        }
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::invalid("f", format!("must be positive, got {f}")));
        }
        let sigma = f * self.mu_e;
        let b = theta * self.mu_a / sigma;
        Ok((b - 1.0 / f, b))
    }

    fn cell(&self, theta: f64, f: f64, p0: f64, dist: &LocationScaleDistribution) -> Result<ScanCell> {
        let (a, b) = self.coordinates(theta, f)?;
        let p = equilibrium(&MeanFieldParams::new(a, b, *dist)?, p0)?;
        Ok(ScanCell { theta, f, a, b, p })
    }
}

/// Equilibrium surviving fraction over a `(theta, f)` grid.
pub fn stability_scan(
    summary: &CalibrationSummary,
    theta_grid: &[f64],
    f_grid: &[f64],
    dist: &LocationScaleDistribution,
    p0: f64,
) -> Result<ScanMatrix> {
    if theta_grid.is_empty() || f_grid.is_empty() {
        return Err(Error::invalid("grid", "theta and f grids must be nonempty"));
    }
    let cells = theta_grid
        .par_iter()
        .map(|&theta| {
            f_grid
                .iter()
                .map(|&f| summary.cell(theta, f, p0, dist))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanMatrix {
        theta_grid: theta_grid.to_vec(),
        f_grid: f_grid.to_vec(),
        p0,
        cells,
    })
}

/// The `(a, b)` path traced by varying `f` at fixed `theta`, with the
/// equilibrium at each point.
pub fn trajectory_overlay(
    summary: &CalibrationSummary,
    theta: f64,
    f_list: &[f64],
    dist: &LocationScaleDistribution,
    p0: f64,
) -> Result<Vec<ScanCell>> {
    f_list.iter().map(|&f| summary.cell(theta, f, p0, dist)).collect()
}

/// First `f` along the row at which `p` falls below `threshold`.
pub fn jump_location(row: &[ScanCell], threshold: f64) -> Option<f64> {
    row.iter().find(|c| c.p < threshold).map(|c| c.f)
}
