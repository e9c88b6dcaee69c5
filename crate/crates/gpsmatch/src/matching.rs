//! One-to-M nearest-neighbor caliper matching with replacement, jointly on
//! standardized exposure and standardized GPS.
//!
//! For every grid level `w` and every target unit, the counterfactual GPS
//! `e(w, c)` is standardized against the observed surface and the nearest
//! caliper candidates under the lambda-weighted metric are selected. The
//! matched structure keeps the full replacement ledger `K_i(j)` so that
//! the estimator and its variance can be computed from multiplicities.

use crate::data::{DesignData, ExposureGrid};
use crate::error::{Error, Result};
use crate::gps::GpsSurface;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Two-dimensional distance used on the weighted standardized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
}

/// Matching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Scale parameter trading GPS distance against exposure distance.
    pub lambda: f64,
    /// Caliper: maximum exposure distance between level and candidate.
    pub delta: f64,
    pub metric: Metric,
    /// Number of nearest candidates averaged per target (M).
    pub matches_per_unit: usize,
    /// Optional extra caliper on the standardized GPS distance.
    pub gps_caliper: Option<f64>,
}

impl MatchConfig {
    pub fn new(lambda: f64, delta: f64, metric: Metric) -> Self {
        MatchConfig {
            lambda,
            delta,
            metric,
            matches_per_unit: 1,
            gps_caliper: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid(format!(
                "caliper must be positive, got {}",
                self.delta
            )));
        }
        if self.matches_per_unit == 0 {
            return Err(Error::invalid("matches per unit must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Maps a vector onto `[0, 1]` by its own min/max.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot standardize an empty vector".to_string()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::degenerate(
            "cannot standardize a constant vector".to_string(),
        ));
    }
    let span = max - min;
    Ok(values.iter().map(|v| (v - min) / span).collect())
}

/// Sentinel for "target has no match at this level".
const NO_MATCH: u32 = u32::MAX;

/// Matches selected at one grid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMatches {
    pub level_index: usize,
    pub level: f64,
    /// Flat `n_targets x M` candidate indices (`u32::MAX` where absent).
    matches: Vec<u32>,
    /// Replacement ledger `K_i(j)`: times unit j is used as a match here.
    pub multiplicity: Vec<u32>,
    /// Targets that received at least one match.
    pub matched_targets: usize,
    matches_per_unit: usize,
}

impl LevelMatches {
    /// Matched unit indices for one target (empty when unmatched).
    pub fn matches_for(&self, target: usize) -> impl Iterator<Item = usize> + '_ {
        let m = self.matches_per_unit;
        self.matches[target * m..(target + 1) * m]
            .iter()
            .filter(|&&v| v != NO_MATCH)
            .map(|&v| v as usize)
    }

    pub fn n_targets(&self) -> usize {
        self.matches.len() / self.matches_per_unit
    }
}

/// Outcome-free matched structure over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedDesign {
    pub grid: ExposureGrid,
    pub levels: Vec<LevelMatches>,
    /// Grid level indices with no caliper candidate at all.
    pub unmatched_levels: Vec<usize>,
    pub n_units: usize,
    pub matches_per_unit: usize,
}

impl MatchedDesign {
    /// Total times each unit appears in the matched data (summed over levels).
    pub fn total_multiplicity(&self) -> Vec<u32> {
        let mut total = vec![0u32; self.n_units];
        for level in &self.levels {
            for (t, k) in level.multiplicity.iter().enumerate() {
                total[t] += k;
            }
        }
        total
    }
}

/// Matched structure with imputed counterfactual outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet {
    pub design: MatchedDesign,
    /// Per matched level, per target: mean outcome of the M matched units.
    pub imputed: Vec<Vec<Option<f64>>>,
}

impl MatchedSet {
    pub fn from_design(design: MatchedDesign, outcomes: &[f64]) -> Self {
        let imputed = design
            .levels
            .iter()
            .map(|level| {
                (0..level.n_targets())
                    .map(|t| {
                        let mut sum = 0.0;
                        let mut count = 0usize;
                        for j in level.matches_for(t) {
                            sum += outcomes[j];
                            count += 1;
                        }
                        (count > 0).then(|| sum / count as f64)
                    })
                    .collect()
            })
            .collect();
        MatchedSet { design, imputed }
    }
}

/// Precomputed standardized coordinates shared across levels.
struct MatchContext<'a> {
    design: &'a DesignData,
    surface: &'a GpsSurface,
    config: &'a MatchConfig,
    w_min: f64,
    w_span: f64,
    std_exposure: Vec<f64>,
    std_gps: Vec<f64>,
    /// Unit indices sorted by exposure, plus the sorted exposures.
    order: Vec<u32>,
    sorted_w: Vec<f64>,
}

impl<'a> MatchContext<'a> {
    fn new(
        design: &'a DesignData,
        surface: &'a GpsSurface,
        config: &'a MatchConfig,
    ) -> Result<Self> {
        config.validate()?;
        if surface.is_degenerate() {
            return Err(Error::degenerate(
                "GPS surface is constant; cannot standardize for matching".to_string(),
            ));
        }
        if surface.observed().len() != design.n_units() {
            return Err(Error::invalid(
                "GPS surface and data have different unit counts".to_string(),
            ));
        }
        let exposures = design.exposures();
        let std_exposure = standardize(exposures)?;
        let std_gps = surface
            .observed()
            .iter()
            .map(|&g| surface.standardize_clamped(g))
            .collect();
        let mut order: Vec<u32> = (0..design.n_units() as u32).collect();
        order.sort_by(|&a, &b| {
            exposures[a as usize]
                .partial_cmp(&exposures[b as usize])
                .unwrap()
        });
        let sorted_w = order.iter().map(|&j| exposures[j as usize]).collect();
        let (w_min, w_max) = design.exposure_range();
        Ok(MatchContext {
            design,
            surface,
            config,
            w_min,
            w_span: w_max - w_min,
            std_exposure,
            std_gps,
            order,
            sorted_w,
        })
    }

    fn match_level(&self, level_index: usize, level: f64) -> Option<LevelMatches> {
        let delta = self.config.delta;
        let lo = self.sorted_w.partition_point(|&w| w < level - delta);
        let hi = self.sorted_w.partition_point(|&w| w <= level + delta);
        if lo >= hi {
            return None;
        }
        let window = &self.order[lo..hi];
        let cand_w: Vec<f64> = window
            .iter()
            .map(|&j| self.std_exposure[j as usize])
            .collect();
        let cand_e: Vec<f64> = window.iter().map(|&j| self.std_gps[j as usize]).collect();

        let n = self.design.n_units();
        let m = self.config.matches_per_unit;
        let lambda = self.config.lambda;
        let w_target = ((level - self.w_min) / self.w_span).clamp(0.0, 1.0);
        let mut matches = vec![NO_MATCH; n * m];
        let mut multiplicity = vec![0u32; n];
        let mut matched_targets = 0usize;
        let mut top = TopM::new(m);

        for target in 0..n {
            let gps_cf = self
                .surface
                .model()
                .density_unchecked(level, self.design.covariate_row(target));
            let e_target = self.surface.standardize_clamped(gps_cf);
            top.clear();
            for (c, &orig) in window.iter().enumerate() {
                let de = (cand_e[c] - e_target).abs();
                if let Some(max_de) = self.config.gps_caliper {
                    if de > max_de {
                        continue;
                    }
                }
                let dw = (cand_w[c] - w_target).abs();
                top.push(weighted_distance(self.config.metric, lambda, de, dw), orig);
            }
            let selected = top.selected();
            if !selected.is_empty() {
                matched_targets += 1;
            }
            for (slot, &(_, idx)) in selected.iter().enumerate() {
                matches[target * m + slot] = idx;
                multiplicity[idx as usize] += 1;
            }
        }
        if matched_targets == 0 {
            return None;
        }
        Some(LevelMatches {
            level_index,
            level,
            matches,
            multiplicity,
            matched_targets,
            matches_per_unit: m,
        })
    }
}

/// Distance on lambda-weighted standardized coordinates.
fn weighted_distance(metric: Metric, lambda: f64, de: f64, dw: f64) -> f64 {
    let e = lambda * de;
    let w = (1.0 - lambda) * dw;
    match metric {
        Metric::L1 => e + w,
        Metric::L2 => (e * e + w * w).sqrt(),
    }
}

/// Keeps the M smallest (distance, index) pairs; ties break to the lowest
/// original index.
struct TopM {
    m: usize,
    entries: Vec<(f64, u32)>,
}

impl TopM {
    fn new(m: usize) -> Self {
        TopM {
            m,
            entries: Vec::with_capacity(m + 1),
        }
    }

    fn clear(&mut self) {
        self.entries.clear();
    }

    fn push(&mut self, dist: f64, idx: u32) {
        let pos = self
            .entries
            .partition_point(|&(d, i)| d < dist || (d == dist && i < idx));
        if pos < self.m {
            self.entries.insert(pos, (dist, idx));
            self.entries.truncate(self.m);
        }
    }

    fn selected(&self) -> &[(f64, u32)] {
        &self.entries
    }
}

/// Matches all targets at a single grid level.
///
/// Returns `None` when the caliper around `level` contains no candidate.
pub fn match_at_level(
    level: f64,
    design: &DesignData,
    surface: &GpsSurface,
    config: &MatchConfig,
) -> Result<Option<LevelMatches>> {
    let ctx = MatchContext::new(design, surface, config)?;
    Ok(ctx.match_level(0, level))
}

/// Matches every grid level; levels run in parallel and the result is
/// schedule-independent.
pub fn match_design(
    design: &DesignData,
    surface: &GpsSurface,
    grid: &ExposureGrid,
    config: &MatchConfig,
) -> Result<MatchedDesign> {
    let ctx = MatchContext::new(design, surface, config)?;
    let per_level: Vec<Option<LevelMatches>> = grid
        .levels()
        .par_iter()
        .enumerate()
        .map(|(i, &level)| ctx.match_level(i, level))
        .collect();

    let mut levels = Vec::new();
    let mut unmatched_levels = Vec::new();
    for (i, entry) in per_level.into_iter().enumerate() {
        match entry {
            Some(matches) => levels.push(matches),
            None => unmatched_levels.push(i),
        }
    }
    if levels.is_empty() {
        return Err(Error::NoMatches(
            "every grid level has an empty caliper; nothing is estimable".to_string(),
        ));
    }
    Ok(MatchedDesign {
        grid: grid.clone(),
        levels,
        unmatched_levels,
        n_units: design.n_units(),
        matches_per_unit: config.matches_per_unit,
    })
}

/// Full matched dataset: matched indices, the K(j) ledger and imputed
/// counterfactual outcomes at every matched level.
pub fn build_matched_set(
    dataset: &crate::data::Dataset,
    surface: &GpsSurface,
    grid: &ExposureGrid,
    config: &MatchConfig,
) -> Result<MatchedSet> {
    let design = match_design(&dataset.design, surface, grid, config)?;
    Ok(MatchedSet::from_design(design, &dataset.outcomes))
}

/// Writes the matched set as CSV, one row per (level, target, match).
pub fn export_matched_csv(
    path: &std::path::Path,
    matched: &MatchedSet,
    dataset: &crate::data::Dataset,
) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        file,
        "level,target_id,matched_id,matched_exposure,imputed_outcome,multiplicity"
    )?;
    let ids = dataset.design.unit_ids();
    let exposures = dataset.design.exposures();
    for (level, imputed) in matched.design.levels.iter().zip(&matched.imputed) {
        for target in 0..level.n_targets() {
            for j in level.matches_for(target) {
                writeln!(
                    file,
                    "{},{},{},{},{},{}",
                    level.level,
                    ids[target],
                    ids[j],
                    exposures[j],
                    imputed[target].unwrap_or(f64::NAN),
                    level.multiplicity[j]
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_grid, DesignData};
    use crate::gps::{GpsModel, GpsSurface};
    use crate::learners::LearnerKind;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design_from(exposures: Vec<f64>, covariates: Vec<f64>) -> DesignData {
        let ids = (0..exposures.len()).map(|j| j.to_string()).collect();
        DesignData::new(exposures, covariates, 1, ids).unwrap()
    }

    fn fitted_surface(design: &DesignData) -> GpsSurface {
        let model = GpsModel::fit(design, LearnerKind::NormalLinear).unwrap();
        GpsSurface::new(&model, design).unwrap()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize) -> DesignData {
        let covariates: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let exposures: Vec<f64> = covariates
            .iter()
            .map(|c| 2.0 * c + 5.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        design_from(exposures, covariates)
    }

    #[test]
    fn standardize_maps_endpoints() {
        assert_eq!(standardize(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(matches!(
            standardize(&[5.0, 5.0, 5.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn standardize_matches_elementwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..10).map(|_| rng.random_range(-4.0..9.0)).collect();
        let out = standardize(&values).unwrap();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (o, v) in out.iter().zip(&values) {
            assert_abs_diff_eq!(*o, (v - min) / (max - min), epsilon = 1e-15);
        }
    }

    #[test]
    fn lambda_zero_collapses_to_nearest_exposure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let design = random_design(&mut rng, 40);
        let surface = fitted_surface(&design);
        let config = MatchConfig::new(0.0, 2.0, Metric::L2);
        let level = 5.0;
        let matches = match_at_level(level, &design, &surface, &config)
            .unwrap()
            .expect("caliper not empty");
        // independent one-dimensional nearest-exposure scan
        let w_std = standardize(design.exposures()).unwrap();
        let (w_min, w_max) = design.exposure_range();
        let target = (level - w_min) / (w_max - w_min);
        let mut best: Option<(f64, usize)> = None;
        for (j, &w) in design.exposures().iter().enumerate() {
            if (w - level).abs() > config.delta {
                continue;
            }
            let d = (w_std[j] - target).abs();
            let better = match best {
                Some((bd, bj)) => d < bd || (d == bd && j < bj),
                None => true,
            };
            if better {
                best = Some((d, j));
            }
        }
        let expected = best.unwrap().1;
        for t in 0..design.n_units() {
            assert_eq!(matches.matches_for(t).next().unwrap(), expected);
        }
    }

    #[test]
    fn exact_coordinate_match_is_selected_with_zero_distance() {
        // candidate 2 sits exactly at the target coordinates for targets
        // whose covariate equals its own
        let design = design_from(
            vec![0.0, 2.0, 4.0, 6.0, 10.0],
            vec![-1.0, 0.5, 1.0, -0.5, 2.0],
        );
        let surface = fitted_surface(&design);
        let config = MatchConfig::new(0.7, 10.0, Metric::L2);
        let level = design.exposures()[2];
        let matches = match_at_level(level, &design, &surface, &config)
            .unwrap()
            .unwrap();
        // target 2's counterfactual GPS at its own exposure equals its
        // observed GPS, so unit 2 is a zero-distance match for itself
        assert_eq!(matches.matches_for(2).next().unwrap(), 2);
    }

    /// Exhaustive brute-force scan with independently recomputed
    /// standardization, for oracle comparisons.
    fn brute_force_level(
        level: f64,
        design: &DesignData,
        surface: &GpsSurface,
        config: &MatchConfig,
    ) -> Vec<Option<usize>> {
        let exposures = design.exposures();
        let w_min = exposures.iter().copied().fold(f64::INFINITY, f64::min);
        let w_max = exposures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g_min = surface.observed().iter().copied().fold(f64::INFINITY, f64::min);
        let g_max = surface
            .observed()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let std_w = |w: f64| ((w - w_min) / (w_max - w_min)).clamp(0.0, 1.0);
        let std_g = |g: f64| ((g - g_min) / (g_max - g_min)).clamp(0.0, 1.0);
        (0..design.n_units())
            .map(|t| {
                let gps = surface
                    .model()
                    .density(level, design.covariate_row(t))
                    .unwrap();
                let (et, wt) = (std_g(gps), std_w(level));
                let mut best: Option<(f64, usize)> = None;
                for j in 0..design.n_units() {
                    if (exposures[j] - level).abs() > config.delta {
                        continue;
                    }
                    let de = (std_g(surface.observed()[j]) - et).abs();
                    let dw = (std_w(exposures[j]) - wt).abs();
                    let e = config.lambda * de;
                    let w = (1.0 - config.lambda) * dw;
                    let dist = match config.metric {
                        Metric::L1 => e + w,
                        Metric::L2 => (e * e + w * w).sqrt(),
                    };
                    let better = match best {
                        Some((bd, bj)) => dist < bd || (dist == bd && j < bj),
                        None => true,
                    };
                    if better {
                        best = Some((dist, j));
                    }
                }
                best.map(|(_, j)| j)
            })
            .collect()
    }

    #[test]
    fn six_unit_match_equals_exhaustive_scan() {
        let design = design_from(
            vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
            vec![0.3, -1.0, 0.8, 0.1, -0.4, 1.2],
        );
        let surface = fitted_surface(&design);
        let config = MatchConfig::new(0.7, 1.0, Metric::L2);
        let level = 2.2;
        let matches = match_at_level(level, &design, &surface, &config)
            .unwrap()
            .unwrap();
        let oracle = brute_force_level(level, &design, &surface, &config);
        for t in 0..design.n_units() {
            assert_eq!(matches.matches_for(t).next(), oracle[t]);
        }
    }

    #[test]
    fn matched_set_equals_levelwise_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let design = random_design(&mut rng, 50);
        let surface = fitted_surface(&design);
        let grid = make_grid(&design, 0.8).unwrap();
        let config = MatchConfig::new(0.5, 0.8, Metric::L1);
        let matched = match_design(&design, &surface, &grid, &config).unwrap();
        for level in &matched.levels {
            let alone = match_at_level(level.level, &design, &surface, &config)
                .unwrap()
                .unwrap();
            assert_eq!(level.matches, alone.matches);
            assert_eq!(level.multiplicity, alone.multiplicity);
        }
    }

    #[test]
    fn multiplicity_is_conserved_at_matched_levels() {
        let design = design_from(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![0.5, -0.5, 1.0, 0.0, -1.0],
        );
        let surface = fitted_surface(&design);
        let grid = make_grid(&design, 1.0).unwrap();
        let config = MatchConfig::new(0.5, 1.0, Metric::L2);
        let matched = match_design(&design, &surface, &grid, &config).unwrap();
        assert!(matched.unmatched_levels.is_empty());
        for level in &matched.levels {
            let total: u32 = level.multiplicity.iter().sum();
            assert_eq!(total as usize, design.n_units() * config.matches_per_unit);
        }
    }

    #[test]
    fn caliper_respected_and_isolated_levels_reported() {
        // a hole in the exposure distribution around 5
        let design = design_from(
            vec![0.0, 0.5, 1.0, 1.5, 2.0, 8.0, 8.5, 9.0, 9.5, 10.0],
            vec![0.1, -0.2, 0.3, 0.5, -0.7, 1.0, -1.1, 0.9, 0.2, -0.3],
        );
        let surface = fitted_surface(&design);
        let grid = make_grid(&design, 1.0).unwrap();
        let config = MatchConfig::new(1.0, 1.0, Metric::L1);
        let matched = match_design(&design, &surface, &grid, &config).unwrap();
        // level at 5.0 (index 2) has no exposure within +-1
        assert!(matched.unmatched_levels.contains(&2));
        for level in &matched.levels {
            for t in 0..level.n_targets() {
                for j in level.matches_for(t) {
                    assert!((design.exposures()[j] - level.level).abs() <= config.delta);
                }
            }
        }
    }

    #[test]
    fn all_levels_unmatched_is_an_error() {
        let design = design_from(vec![0.0, 0.1, 9.9, 10.0], vec![0.1, -0.2, 0.3, 0.5]);
        let surface = fitted_surface(&design);
        let grid = crate::data::make_grid_for_range(3.0, 8.0, 1.0).unwrap();
        let config = MatchConfig::new(0.5, 1.0, Metric::L2);
        assert!(matches!(
            match_design(&design, &surface, &grid, &config),
            Err(Error::NoMatches(_))
        ));
    }

    #[test]
    fn argmin_is_invariant_under_common_rescaling() {
        // scaling both weighted coordinates by a positive constant must not
        // change the selected index
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = 12;
            let de: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let dw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            for metric in [Metric::L1, Metric::L2] {
                let lambda = rng.random_range(0.0..=1.0);
                let scale = rng.random_range(0.01..100.0);
                let argmin = |s: f64| {
                    (0..n)
                        .map(|j| {
                            (
                                weighted_distance(metric, lambda, s * de[j], s * dw[j]),
                                j,
                            )
                        })
                        .min_by(|a, b| a.partial_cmp(b).unwrap())
                        .unwrap()
                        .1
                };
                assert_eq!(argmin(1.0), argmin(scale));
            }
        }
    }

    #[test]
    fn matching_is_deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let design = random_design(&mut rng, 120);
        let surface = fitted_surface(&design);
        let grid = make_grid(&design, 0.5).unwrap();
        let config = MatchConfig::new(0.6, 0.5, Metric::L2);
        let a = match_design(&design, &surface, &grid, &config).unwrap();
        let b = match_design(&design, &surface, &grid, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multiple_matches_average_outcomes() {
        let design = design_from(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.5, -0.5, 1.0, 0.0, -1.0, 0.7],
        );
        let outcomes = vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let dataset = crate::data::Dataset::new(design.clone(), outcomes.clone(), None).unwrap();
        let surface = fitted_surface(&design);
        let grid = make_grid(&design, 1.0).unwrap();
        let mut config = MatchConfig::new(0.5, 1.0, Metric::L2);
        config.matches_per_unit = 2;
        let matched = build_matched_set(&dataset, &surface, &grid, &config).unwrap();
        for (level, imputed) in matched.design.levels.iter().zip(&matched.imputed) {
            let total: u32 = level.multiplicity.iter().sum();
            assert_eq!(total as usize, design.n_units() * 2);
            for t in 0..level.n_targets() {
                let selected: Vec<usize> = level.matches_for(t).collect();
                assert_eq!(selected.len(), 2);
                let mean = selected.iter().map(|&j| outcomes[j]).sum::<f64>() / 2.0;
                assert_abs_diff_eq!(imputed[t].unwrap(), mean, epsilon = 1e-12);
            }
        }
    }
}
