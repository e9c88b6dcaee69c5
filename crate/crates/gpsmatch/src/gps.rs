//! Generalized propensity scores: conditional densities of the exposure
//! given covariates, modelled as a learned conditional mean with a global
//! Gaussian residual.

use crate::data::DesignData;
use crate::error::{Error, Result};
use crate::learners::{fit_mean_model, FeatureMatrix, LearnerKind, MeanModel};
use serde::{Deserialize, Serialize};

/// A fitted GPS model: conditional mean of the exposure plus residual SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsModel {
    pub learner: LearnerKind,
    pub mean: MeanModel,
    /// Maximum-likelihood residual SD (divisor N).
    pub residual_sd: f64,
    pub summary: TrainingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_units: usize,
    pub n_covariates: usize,
    pub log_likelihood: f64,
}

impl GpsModel {
    /// Fits the exposure model `W ~ C` and the Gaussian residual scale.
    pub fn fit(design: &DesignData, learner: LearnerKind) -> Result<Self> {
        let n = design.n_units();
        let q = design.n_covariates();
        let mut data = Vec::with_capacity(n * q);
        for j in 0..n {
            data.extend_from_slice(design.covariate_row(j));
        }
        let names = (1..=q).map(|k| format!("c{k}")).collect();
        let features = FeatureMatrix::new(data, n, q, names);
        let mean = fit_mean_model(learner, &features, design.exposures())?;

        let sse: f64 = (0..n)
            .map(|j| {
                let r = design.exposures()[j] - mean.predict(design.covariate_row(j));
                r * r
            })
            .sum();
        let variance = sse / n as f64;
        if variance <= 0.0 {
            return Err(Error::degenerate(
                "residual SD is zero (exposure is an exact function of the covariates)"
                    .to_string(),
            ));
        }
        let residual_sd = variance.sqrt();
        // Gaussian log-likelihood at the ML scale
        let log_likelihood =
            -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * variance).ln() + 1.0);
        Ok(GpsModel {
            learner,
            mean,
            residual_sd,
            summary: TrainingSummary {
                n_units: n,
                n_covariates: q,
                log_likelihood,
            },
        })
    }

    /// Learned conditional mean of the exposure at a covariate vector.
    pub fn conditional_mean(&self, covariates: &[f64]) -> f64 {
        self.mean.predict(covariates)
    }

    /// Evaluates the estimated conditional density at `(w, c)`.
    ///
    /// Always strictly positive: the Gaussian density never vanishes, so
    /// underflow is clamped to the smallest positive normal float.
    pub fn density(&self, w: f64, covariates: &[f64]) -> Result<f64> {
        if !w.is_finite() || covariates.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite input to GPS evaluation".to_string()));
        }
        Ok(self.density_unchecked(w, covariates))
    }

    pub(crate) fn density_unchecked(&self, w: f64, covariates: &[f64]) -> f64 {
        let m = self.mean.predict(covariates);
        gaussian_density(w, m, self.residual_sd)
    }

    /// Serializes the model to JSON at full round-trip float precision.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("GPS model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::invalid(format!("cannot parse GPS model JSON: {e}")))
    }
}

pub(crate) fn gaussian_density(w: f64, mean: f64, sd: f64) -> f64 {
    let z = (w - mean) / sd;
    let value = (-(0.5) * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    value.max(f64::MIN_POSITIVE)
}

/// Estimated GPS at every observed `(w_j, c_j)`, with the min/max used for
/// the standardized matching transform and the model itself for
/// counterfactual evaluations.
#[derive(Debug, Clone)]
pub struct GpsSurface {
    model: GpsModel,
    observed: Vec<f64>,
    min: f64,
    max: f64,
    degenerate: bool,
}

impl GpsSurface {
    pub fn new(model: &GpsModel, design: &DesignData) -> Result<Self> {
        if model.summary.n_covariates != design.n_covariates() {
            return Err(Error::invalid(format!(
                "model was fit on {} covariates, data has {}",
                model.summary.n_covariates,
                design.n_covariates()
            )));
        }
        let observed: Vec<f64> = (0..design.n_units())
            .map(|j| model.density_unchecked(design.exposures()[j], design.covariate_row(j)))
            .collect();
        let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
        let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(GpsSurface {
            model: model.clone(),
            observed,
            min,
            max,
            degenerate: max <= min,
        })
    }

    pub fn model(&self) -> &GpsModel {
        &self.model
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// All observed GPS values identical; matching cannot standardize.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Maps a GPS value onto `[0, 1]` using the observed min/max, clamping
    /// values outside the observed span.
    pub fn standardize_clamped(&self, gps: f64) -> f64 {
        ((gps - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}
