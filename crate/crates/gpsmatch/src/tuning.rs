//! Data-driven selection of the scale parameter and caliper by grid
//! search on a covariate-balance utility, without outcome access.
//!
//! Outcome blindness is structural: the search takes [`DesignData`],
//! which carries no outcome column.

use crate::balance::{absolute_correlation, blocked_std_bias, orthogonalize, WeightedBlocks};
use crate::data::{make_grid, DesignData};
use crate::error::{Error, Result};
use crate::gps::GpsSurface;
use crate::matching::{match_design, MatchConfig, Metric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Balance utility minimized by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    AvgAbsCorrelation,
    AvgBlockedStdBias,
}

/// Candidate grids for the scale parameter and caliper.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub utility: UtilityKind,
}

impl TuningGrid {
    /// Default candidates: lambda on a 0.1 grid over [0, 1]; calipers that
    /// split the exposure range into 10, 20, 50 and 100 blocks.
    pub fn default_for(design: &DesignData) -> Self {
        let (w0, w1) = design.exposure_range();
        let span = w1 - w0;
        TuningGrid {
            lambdas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            deltas: [10.0, 20.0, 50.0, 100.0]
                .iter()
                .map(|blocks| span / (2.0 * blocks))
                .collect(),
            utility: UtilityKind::AvgAbsCorrelation,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.deltas.is_empty() {
            return Err(Error::invalid("tuning grid has no candidates".to_string()));
        }
        Ok(())
    }
}

/// One evaluated candidate; `utility` is `None` when the pair produced no
/// usable matched set.
#[derive(Debug, Clone, Serialize)]
pub struct TuningEntry {
    pub lambda: f64,
    pub delta: f64,
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningResult {
    pub lambda: f64,
    pub delta: f64,
    pub utility: f64,
    pub table: Vec<TuningEntry>,
}

/// Evaluates the balance utility of one matched design.
pub fn matched_utility(
    design: &DesignData,
    matched: &crate::matching::MatchedDesign,
    utility: UtilityKind,
) -> Result<f64> {
    let orth = orthogonalize(&WeightedBlocks::matched(design, matched))?;
    Ok(match utility {
        UtilityKind::AvgAbsCorrelation => {
            let corr = absolute_correlation(&orth);
            corr.iter().sum::<f64>() / corr.len() as f64
        }
        UtilityKind::AvgBlockedStdBias => {
            let bias = blocked_std_bias(&orth)?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for row in bias.iter().flatten() {
                sum += row.iter().sum::<f64>();
                count += row.len();
            }
            if count == 0 {
                return Err(Error::degenerate("no nonempty blocks".to_string()));
            }
            sum / count as f64
        }
    })
}

/// Grid search over (lambda, delta) minimizing the balance utility.
///
/// Ties break toward larger lambda, then smaller caliper. Candidates whose
/// matched set is empty or whose balance computation degenerates are kept
/// in the table without a utility.
pub fn tune(
    design: &DesignData,
    surface: &GpsSurface,
    grid: &TuningGrid,
    metric: Metric,
) -> Result<TuningResult> {
    grid.validate()?;
    let mut pairs = Vec::new();
    for &lambda in &grid.lambdas {
        for &delta in &grid.deltas {
            pairs.push((lambda, delta));
        }
    }
    let table: Vec<TuningEntry> = pairs
        .par_iter()
        .map(|&(lambda, delta)| {
            let utility = evaluate_pair(design, surface, lambda, delta, metric, grid.utility);
            TuningEntry {
                lambda,
                delta,
                utility,
            }
        })
        .collect();

    // smaller utility wins; ties break to larger lambda, then smaller delta
    let mut best: Option<(f64, f64, f64)> = None;
    for entry in &table {
        let Some(u) = entry.utility else { continue };
        let better = match best {
            None => true,
            Some((bu, bl, bd)) => {
                u < bu
                    || (u == bu
                        && (entry.lambda > bl || (entry.lambda == bl && entry.delta < bd)))
            }
        };
        if better {
            best = Some((u, entry.lambda, entry.delta));
        }
    }
    match best {
        Some((utility, lambda, delta)) => Ok(TuningResult {
            lambda,
            delta,
            utility,
            table,
        }),
        None => Err(Error::NoMatches(
            "every tuning candidate produced an empty or degenerate matched set".to_string(),
        )),
    }
}

fn evaluate_pair(
    design: &DesignData,
    surface: &GpsSurface,
    lambda: f64,
    delta: f64,
    metric: Metric,
    utility: UtilityKind,
) -> Option<f64> {
    let grid = make_grid(design, delta).ok()?;
    let config = MatchConfig::new(lambda, delta, metric);
    let matched = match_design(design, surface, &grid, &config).ok()?;
    matched_utility(design, &matched, utility).ok()
}

/// Writes the audit table as CSV (infeasible candidates keep an empty
/// utility cell).
pub fn export_tuning_csv(path: &std::path::Path, result: &TuningResult) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "lambda,delta,utility")?;
    for entry in &result.table {
        match entry.utility {
            Some(u) => writeln!(file, "{},{},{}", entry.lambda, entry.delta, u)?,
            None => writeln!(file, "{},{},", entry.lambda, entry.delta)?,
        }
    }
    Ok(())
}
