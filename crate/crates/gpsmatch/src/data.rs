//! Core domain types, dataset validation and tabular ingestion.
//!
//! The observational table is split into two layers: [`DesignData`] holds
//! everything the design stage is allowed to see (exposures, covariates,
//! unit ids) and [`Dataset`] adds the outcome column plus optional
//! person-time offsets. Operations that must stay outcome-blind (GPS
//! fitting, matching, balance, tuning) take a `DesignData`, so the
//! separation is enforced by the type system rather than by convention.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Exposure and covariate table without outcome information.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    exposures: Vec<f64>,
    /// Row-major N x q covariate matrix.
    covariates: Vec<f64>,
    n_covariates: usize,
    unit_ids: Vec<String>,
}

impl DesignData {
    /// Validates and builds the design table.
    ///
    /// `covariates` is row-major with `n_covariates` columns. Fails when
    /// fewer than two units are supplied, when any value is non-finite,
    /// when the exposure range collapses, or when a covariate column has
    /// zero sample variance.
    pub fn new(
        exposures: Vec<f64>,
        covariates: Vec<f64>,
        n_covariates: usize,
        unit_ids: Vec<String>,
    ) -> Result<Self> {
        let n = exposures.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 units, got {n}")));
        }
        if covariates.len() != n * n_covariates {
            return Err(Error::invalid(format!(
                "covariate matrix has {} entries, expected {} x {}",
                covariates.len(),
                n,
                n_covariates
            )));
        }
        if unit_ids.len() != n {
            return Err(Error::invalid("unit id vector length mismatch".to_string()));
        }
        if let Some(j) = exposures.iter().position(|w| !w.is_finite()) {
            return Err(Error::invalid(format!("non-finite exposure at unit {j}")));
        }
        if let Some(j) = covariates.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite covariate at unit {}, column {}",
                j / n_covariates.max(1),
                j % n_covariates.max(1)
            )));
        }
        let (w0, w1) = min_max(&exposures);
        if w1 <= w0 {
            return Err(Error::degenerate(
                "exposure range is empty (all exposures equal)".to_string(),
            ));
        }
        let data = DesignData {
            exposures,
            covariates,
            n_covariates,
            unit_ids,
        };
        for k in 0..n_covariates {
            if data.column_variance(k) <= 0.0 {
                return Err(Error::degenerate(format!(
                    "covariate column {k} has zero sample variance"
                )));
            }
        }
        Ok(data)
    }

    pub fn n_units(&self) -> usize {
        self.exposures.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    /// Covariate row of one unit.
    pub fn covariate_row(&self, unit: usize) -> &[f64] {
        let q = self.n_covariates;
        &self.covariates[unit * q..(unit + 1) * q]
    }

    /// Empirical exposure range `[w0, w1]`.
    pub fn exposure_range(&self) -> (f64, f64) {
        min_max(&self.exposures)
    }

    fn column_variance(&self, k: usize) -> f64 {
        let n = self.n_units() as f64;
        let mean = (0..self.n_units())
            .map(|j| self.covariate_row(j)[k])
            .sum::<f64>()
            / n;
        (0..self.n_units())
            .map(|j| (self.covariate_row(j)[k] - mean).powi(2))
            .sum::<f64>()
            / n
    }
}

/// Full observational table: design data plus outcomes and optional
/// person-time offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: DesignData,
    pub outcomes: Vec<f64>,
    pub offsets: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(design: DesignData, outcomes: Vec<f64>, offsets: Option<Vec<f64>>) -> Result<Self> {
        if outcomes.len() != design.n_units() {
            return Err(Error::invalid("outcome vector length mismatch".to_string()));
        }
        if let Some(j) = outcomes.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite outcome at unit {j}")));
        }
        if let Some(offsets) = &offsets {
            if offsets.len() != design.n_units() {
                return Err(Error::invalid("offset vector length mismatch".to_string()));
            }
            if let Some(j) = offsets.iter().position(|o| !o.is_finite() || *o <= 0.0) {
                return Err(Error::invalid(format!("non-positive offset at unit {j}")));
            }
        }
        Ok(Dataset {
            design,
            outcomes,
            offsets,
        })
    }

    pub fn n_units(&self) -> usize {
        self.design.n_units()
    }
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Schema {
    pub exposure: String,
    /// Absent for design-only loads (balance and tuning runs).
    pub outcome: Option<String>,
    pub covariates: Vec<String>,
    pub offset: Option<String>,
    /// Unit id column; row numbers are used when absent.
    pub id: Option<String>,
}

impl Schema {
    pub fn new(exposure: &str, outcome: &str, covariates: &[&str]) -> Self {
        Schema {
            exposure: exposure.to_string(),
            outcome: Some(outcome.to_string()),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            offset: None,
            id: None,
        }
    }
}

/// Ordered equidistant exposure levels with their shared caliper.
///
/// Levels sit at `w0 + (2i - 1) * delta` for `i = 1..=count`, so
/// consecutive levels are `2 * delta` apart and the blocks
/// `[w_i - delta, w_i + delta]` tile the exposure range.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExposureGrid {
    levels: Vec<f64>,
    caliper: f64,
    origin: f64,
}

impl ExposureGrid {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn caliper(&self) -> f64 {
        self.caliper
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Number of levels (= number of blocks).
    pub fn count(&self) -> usize {
        self.levels.len()
    }

    /// Block index of an observed exposure.
    ///
    /// Blocks are half-open `[w_i - delta, w_i + delta)` except the last,
    /// which is closed; exposures beyond the tiled range are assigned to
    /// the nearest boundary block so no observation is dropped.
    pub fn block_index(&self, w: f64) -> usize {
        let i = ((w - self.origin) / (2.0 * self.caliper)).floor() as isize;
        i.clamp(0, self.levels.len() as isize - 1) as usize
    }
}

/// Builds the exposure grid for a caliper `delta`.
///
/// The number of blocks is `floor((w1 - w0) / (2 delta) + 1/2)` over the
/// empirical exposure range of the data.
pub fn make_grid(design: &DesignData, delta: f64) -> Result<ExposureGrid> {
    let (w0, w1) = design.exposure_range();
    make_grid_for_range(w0, w1, delta)
}

pub fn make_grid_for_range(w0: f64, w1: f64, delta: f64) -> Result<ExposureGrid> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::invalid(format!("caliper must be positive, got {delta}")));
    }
    if delta >= (w1 - w0) / 2.0 {
        return Err(Error::invalid(format!(
            "caliper {delta} too large for exposure range [{w0}, {w1}]"
        )));
    }
    let count = ((w1 - w0) / (2.0 * delta) + 0.5).floor() as usize;
    let levels = (1..=count)
        .map(|i| w0 + (2 * i - 1) as f64 * delta)
        .collect();
    Ok(ExposureGrid {
        levels,
        caliper: delta,
        origin: w0,
    })
}

/// Empirical positivity diagnostics.
///
/// Overlap cannot be verified on a continuous scale, so estimated GPS
/// values below a floor inside a block are surfaced as flags instead of
/// hard failures. Levels with no caliper candidates at all are listed as
/// unmatched.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    /// Per grid level: any estimated GPS below the floor within the block.
    pub overlap_flags: Vec<bool>,
    pub gps_floor: f64,
    /// Grid level indices with zero caliper candidates.
    pub unmatched_levels: Vec<usize>,
}

/// Default positivity floor for estimated GPS values.
pub const DEFAULT_GPS_FLOOR: f64 = 1e-10;

impl AssumptionReport {
    pub fn new(
        design: &DesignData,
        grid: &ExposureGrid,
        observed_gps: &[f64],
        unmatched_levels: Vec<usize>,
        gps_floor: f64,
    ) -> Self {
        let mut overlap_flags = vec![false; grid.count()];
        for (j, &w) in design.exposures().iter().enumerate() {
            if observed_gps[j] < gps_floor {
                overlap_flags[grid.block_index(w)] = true;
            }
        }
        AssumptionReport {
            overlap_flags,
            gps_floor,
            unmatched_levels,
        }
    }
}

/// Loads a dataset (with outcome) from a CSV file.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let outcome_col = schema
        .outcome
        .as_deref()
        .ok_or_else(|| Error::Schema {
            column: "<outcome>".to_string(),
        })?
        .to_string();
    let raw = read_csv(path, schema, Some(&outcome_col))?;
    let design = DesignData::new(raw.exposures, raw.covariates, schema.covariates.len(), raw.ids)?;
    Dataset::new(design, raw.outcomes, raw.offsets)
}

/// Loads design data only; the outcome column (if any) is never read.
pub fn load_design(path: &Path, schema: &Schema) -> Result<DesignData> {
    let raw = read_csv(path, schema, None)?;
    DesignData::new(raw.exposures, raw.covariates, schema.covariates.len(), raw.ids)
}

struct RawColumns {
    exposures: Vec<f64>,
    covariates: Vec<f64>,
    outcomes: Vec<f64>,
    offsets: Option<Vec<f64>>,
    ids: Vec<String>,
}

fn read_csv(path: &Path, schema: &Schema, outcome_col: Option<&str>) -> Result<RawColumns> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let w_idx = col(&schema.exposure)?;
    let y_idx = outcome_col.map(col).transpose()?;
    let c_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let o_idx = schema.offset.as_deref().map(col).transpose()?;
    let id_idx = schema.id.as_deref().map(col).transpose()?;

    let mut out = RawColumns {
        exposures: Vec::new(),
        covariates: Vec::new(),
        outcomes: Vec::new(),
        offsets: o_idx.map(|_| Vec::new()),
        ids: Vec::new(),
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: row + 1,
            column: "<record>".to_string(),
            message: e.to_string(),
        })?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: name.to_string(),
                message: format!("cannot parse '{raw}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row + 1,
                    column: name.to_string(),
                    message: "non-finite value".to_string(),
                });
            }
            Ok(value)
        };
        out.exposures.push(cell(w_idx, &schema.exposure)?);
        if let Some(y_idx) = y_idx {
            out.outcomes.push(cell(y_idx, outcome_col.unwrap())?);
        }
        for (k, &idx) in c_idx.iter().enumerate() {
            out.covariates.push(cell(idx, &schema.covariates[k])?);
        }
        if let (Some(o_idx), Some(offsets)) = (o_idx, out.offsets.as_mut()) {
            offsets.push(cell(o_idx, schema.offset.as_deref().unwrap())?);
        }
        out.ids.push(match id_idx {
            Some(idx) => record.get(idx).unwrap_or("").to_string(),
            None => row.to_string(),
        });
    }
    Ok(out)
}

/// Writes a dataset as CSV with shortest round-trip float formatting, so
/// saving and re-loading reproduces values bit-for-bit.
pub fn save_dataset(path: &Path, dataset: &Dataset, schema: &Schema) -> Result<()> {
    let outcome_col = schema.outcome.as_deref().ok_or_else(|| Error::Schema {
        column: "<outcome>".to_string(),
    })?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec![schema.exposure.clone(), outcome_col.to_string()];
    header.extend(schema.covariates.iter().cloned());
    if let Some(offset) = &schema.offset {
        header.push(offset.clone());
    }
    if let Some(id) = &schema.id {
        header.push(id.clone());
    }
    writeln!(file, "{}", header.join(","))?;
    for j in 0..dataset.n_units() {
        let mut row = vec![
            format!("{}", dataset.design.exposures()[j]),
            format!("{}", dataset.outcomes[j]),
        ];
        row.extend(dataset.design.covariate_row(j).iter().map(|c| format!("{c}")));
        if let (Some(_), Some(offsets)) = (&schema.offset, &dataset.offsets) {
            row.push(format!("{}", offsets[j]));
        }
        if schema.id.is_some() {
            row.push(dataset.design.unit_ids()[j].clone());
        }
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
