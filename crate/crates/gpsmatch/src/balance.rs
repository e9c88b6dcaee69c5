//! Design-stage covariate-balance diagnostics.
//!
//! Two measures over multiplicity-weighted, whitened data: the global
//! absolute correlation between exposure and each covariate, and the local
//! blocked absolute standardized bias comparing a covariate's mass inside
//! an exposure block against the rest of the grid. Both are computed on
//! the raw data (unit weights) and on the matched data (replacement
//! multiplicities) over the same block structure so pre/post are directly
//! comparable.

use crate::data::{DesignData, ExposureGrid};
use crate::error::{Error, Result};
use crate::matching::MatchedDesign;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Units with matched-data multiplicities, grouped into grid blocks.
#[derive(Debug, Clone)]
pub struct WeightedBlocks<'a> {
    design: &'a DesignData,
    weights: Vec<f64>,
    block_of: Vec<usize>,
    n_blocks: usize,
}

impl<'a> WeightedBlocks<'a> {
    /// Raw data: every unit appears once.
    pub fn raw(design: &'a DesignData, grid: &ExposureGrid) -> Self {
        WeightedBlocks {
            design,
            weights: vec![1.0; design.n_units()],
            block_of: block_assignment(design, grid),
            n_blocks: grid.count(),
        }
    }

    /// Matched data: units weighted by how often they were used as a match.
    pub fn matched(design: &'a DesignData, matched: &MatchedDesign) -> Self {
        WeightedBlocks {
            design,
            weights: matched
                .total_multiplicity()
                .iter()
                .map(|&k| k as f64)
                .collect(),
            block_of: block_assignment(design, &matched.grid),
            n_blocks: matched.grid.count(),
        }
    }

    /// Explicit weights, for tests and custom reweighting.
    pub fn with_weights(
        design: &'a DesignData,
        grid: &ExposureGrid,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != design.n_units() {
            return Err(Error::invalid("weight vector length mismatch".to_string()));
        }
        Ok(WeightedBlocks {
            design,
            weights,
            block_of: block_assignment(design, grid),
            n_blocks: grid.count(),
        })
    }
}

fn block_assignment(design: &DesignData, grid: &ExposureGrid) -> Vec<usize> {
    design
        .exposures()
        .iter()
        .map(|&w| grid.block_index(w))
        .collect()
}

/// Centered and whitened covariates and exposure, with the weights and
/// block structure carried along for the balance measures.
#[derive(Debug, Clone)]
pub struct Orthogonalized {
    /// Row-major n x q whitened covariates.
    pub covariates: Vec<f64>,
    pub exposures: Vec<f64>,
    pub weights: Vec<f64>,
    pub block_of: Vec<usize>,
    pub n_blocks: usize,
    pub n_units: usize,
    pub n_covariates: usize,
}

impl Orthogonalized {
    fn covariate(&self, unit: usize, k: usize) -> f64 {
        self.covariates[unit * self.n_covariates + k]
    }
}

const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Centers and whitens covariates and exposure under the multiplicity
/// weights, using the symmetric (eigendecomposition) inverse square root
/// of the weighted covariance.
pub fn orthogonalize(input: &WeightedBlocks) -> Result<Orthogonalized> {
    let design = input.design;
    let n = design.n_units();
    let q = design.n_covariates();
    let total: f64 = input.weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("total weight must be positive".to_string()));
    }

    let mut c_mean = vec![0.0; q];
    let mut w_mean = 0.0;
    for j in 0..n {
        let wt = input.weights[j];
        w_mean += wt * design.exposures()[j];
        for (k, &c) in design.covariate_row(j).iter().enumerate() {
            c_mean[k] += wt * c;
        }
    }
    for m in c_mean.iter_mut() {
        *m /= total;
    }
    w_mean /= total;

    let mut cov = DMatrix::zeros(q, q);
    let mut w_var = 0.0;
    for j in 0..n {
        let wt = input.weights[j];
        if wt == 0.0 {
            continue;
        }
        let row = design.covariate_row(j);
        for a in 0..q {
            let da = row[a] - c_mean[a];
            for b in a..q {
                let v = wt * da * (row[b] - c_mean[b]);
                cov[(a, b)] += v;
                if a != b {
                    cov[(b, a)] += v;
                }
            }
        }
        let dw = design.exposures()[j] - w_mean;
        w_var += wt * dw * dw;
    }
    cov /= total;
    w_var /= total;
    if w_var <= 0.0 {
        return Err(Error::degenerate(
            "weighted exposure variance is zero".to_string(),
        ));
    }

    let eigen = nalgebra::SymmetricEigen::new(cov);
    let max_ev = eigen.eigenvalues.max();
    let min_ev = eigen.eigenvalues.min();
    if min_ev <= 0.0 || max_ev / min_ev > MAX_CONDITION_NUMBER {
        // name the covariates loading on the null direction
        let (weakest, _) = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let v = eigen.eigenvectors.column(weakest);
        let peak = v.amax();
        let offenders: Vec<String> = (0..q)
            .filter(|&k| v[k].abs() > 0.3 * peak)
            .map(|k| format!("c{}", k + 1))
            .collect();
        return Err(Error::Singular(format!(
            "weighted covariate covariance is singular or ill-conditioned \
             (condition number > {MAX_CONDITION_NUMBER:.0e}); null direction loads on [{}]",
            offenders.join(", ")
        )));
    }
    let inv_sqrt_ev = DVector::from_iterator(q, eigen.eigenvalues.iter().map(|&l| 1.0 / l.sqrt()));
    let whitener =
        &eigen.eigenvectors * DMatrix::from_diagonal(&inv_sqrt_ev) * eigen.eigenvectors.transpose();

    let w_scale = 1.0 / w_var.sqrt();
    let mut covariates = vec![0.0; n * q];
    let mut exposures = vec![0.0; n];
    for j in 0..n {
        let row = design.covariate_row(j);
        for a in 0..q {
            let mut v = 0.0;
            for b in 0..q {
                v += whitener[(a, b)] * (row[b] - c_mean[b]);
            }
            covariates[j * q + a] = v;
        }
        exposures[j] = (design.exposures()[j] - w_mean) * w_scale;
    }
    Ok(Orthogonalized {
        covariates,
        exposures,
        weights: input.weights.clone(),
        block_of: input.block_of.clone(),
        n_blocks: input.n_blocks,
        n_units: n,
        n_covariates: q,
    })
}

/// Weighted absolute correlation between the exposure and each covariate,
/// on whitened data; equals the absolute weighted Pearson correlation.
pub fn absolute_correlation(orth: &Orthogonalized) -> Vec<f64> {
    let total: f64 = orth.weights.iter().sum();
    (0..orth.n_covariates)
        .map(|k| {
            let sum: f64 = (0..orth.n_units)
                .map(|j| orth.weights[j] * orth.covariate(j, k) * orth.exposures[j])
                .sum();
            (sum / total).abs()
        })
        .collect()
}

/// Blocked absolute standardized bias: per block and covariate,
/// `|sum_in / N - sum_out / (N (I - 1))|` of the weighted whitened
/// covariate mass. Blocks with no weight are reported as missing rows.
pub fn blocked_std_bias(orth: &Orthogonalized) -> Result<Vec<Option<Vec<f64>>>> {
    let blocks = orth.n_blocks;
    if blocks < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 blocks for the local balance measure, got {blocks}"
        )));
    }
    let q = orth.n_covariates;
    let mut in_block = vec![0.0; blocks * q];
    let mut block_weight = vec![0.0; blocks];
    let mut total = vec![0.0; q];
    for j in 0..orth.n_units {
        let wt = orth.weights[j];
        if wt == 0.0 {
            continue;
        }
        let b = orth.block_of[j];
        block_weight[b] += wt;
        for k in 0..q {
            let v = wt * orth.covariate(j, k);
            in_block[b * q + k] += v;
            total[k] += v;
        }
    }
    let n = orth.n_units as f64;
    let out_scale = n * (blocks as f64 - 1.0);
    Ok((0..blocks)
        .map(|b| {
            if block_weight[b] == 0.0 {
                return None;
            }
            Some(
                (0..q)
                    .map(|k| {
                        let inside = in_block[b * q + k];
                        let outside = total[k] - inside;
                        (inside / n - outside / out_scale).abs()
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Balance pass thresholds (correlation and blocked bias).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BalanceThresholds {
    pub correlation: f64,
    pub blocked_bias: f64,
}

impl Default for BalanceThresholds {
    fn default() -> Self {
        BalanceThresholds {
            correlation: 0.1,
            blocked_bias: 0.2,
        }
    }
}

/// One side (raw or matched) of a balance report.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceSide {
    pub per_covariate_abs_corr: Vec<f64>,
    pub avg_abs_corr: f64,
    /// I x q matrix; empty blocks are missing rows.
    pub blocked_std_bias: Vec<Option<Vec<f64>>>,
    pub avg_blocked_std_bias: f64,
    pub corr_pass: Vec<bool>,
    pub block_pass: Vec<Option<bool>>,
}

/// Pre/post covariate balance over a common block structure.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub thresholds: BalanceThresholds,
    pub pre: BalanceSide,
    pub post: BalanceSide,
}

/// Computes correlations, blocked biases, averages and pass flags for one
/// weighted view of the data.
pub fn balance_side(input: &WeightedBlocks, thresholds: BalanceThresholds) -> Result<BalanceSide> {
    let orth = orthogonalize(input)?;
    let per_covariate_abs_corr = absolute_correlation(&orth);
    let avg_abs_corr =
        per_covariate_abs_corr.iter().sum::<f64>() / per_covariate_abs_corr.len() as f64;
    let blocked = blocked_std_bias(&orth)?;
    let mut entry_sum = 0.0;
    let mut entry_count = 0usize;
    for row in blocked.iter().flatten() {
        entry_sum += row.iter().sum::<f64>();
        entry_count += row.len();
    }
    let avg_blocked_std_bias = if entry_count > 0 {
        entry_sum / entry_count as f64
    } else {
        f64::NAN
    };
    let corr_pass = per_covariate_abs_corr
        .iter()
        .map(|&c| c < thresholds.correlation)
        .collect();
    let block_pass = blocked
        .iter()
        .map(|row| {
            row.as_ref()
                .map(|r| r.iter().all(|&b| b < thresholds.blocked_bias))
        })
        .collect();
    Ok(BalanceSide {
        per_covariate_abs_corr,
        avg_abs_corr,
        blocked_std_bias: blocked,
        avg_blocked_std_bias,
        corr_pass,
        block_pass,
    })
}

/// Pre/post balance report: raw data with unit weights and matched data
/// with replacement multiplicities, over the matched grid's blocks.
pub fn balance_report(
    design: &DesignData,
    matched: &MatchedDesign,
    thresholds: BalanceThresholds,
) -> Result<BalanceReport> {
    let pre = balance_side(&WeightedBlocks::raw(design, &matched.grid), thresholds)?;
    let post = balance_side(&WeightedBlocks::matched(design, matched), thresholds)?;
    Ok(BalanceReport {
        thresholds,
        pre,
        post,
    })
}

/// Flat CSV for plotting: covariate, pre and post absolute correlation.
pub fn export_balance_csv(path: &std::path::Path, report: &BalanceReport) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "covariate,pre_abs_corr,post_abs_corr")?;
    for (k, (pre, post)) in report
        .pre
        .per_covariate_abs_corr
        .iter()
        .zip(&report.post.per_covariate_abs_corr)
        .enumerate()
    {
        writeln!(file, "c{},{},{}", k + 1, pre, post)?;
    }
    Ok(())
}
