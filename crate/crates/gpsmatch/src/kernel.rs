//! Kernel smoothing of grid-level estimates and of pseudo-outcomes:
//! Nadaraya-Watson local-constant regression with compactly supported
//! kernels and leave-one-out bandwidth selection.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Symmetric probability kernels supported on [-1, 1]; the Gaussian is
/// truncated at +-1 and renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Uniform,
    Epanechnikov,
    GaussianTruncated,
}

// 2 Phi(1) - 1: Gaussian mass inside [-1, 1]
const GAUSSIAN_TRUNCATION_MASS: f64 = 0.682_689_492_137_085_9;

impl KernelKind {
    /// Kernel density at `u`; zero outside [-1, 1].
    pub fn weight(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Uniform => 0.5,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelKind::GaussianTruncated => {
                (-0.5 * u * u).exp()
                    / ((2.0 * std::f64::consts::PI).sqrt() * GAUSSIAN_TRUNCATION_MASS)
            }
        }
    }
}

/// Bandwidth specification for the smoother.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Leave-one-out cross-validation over log-spaced candidates.
    LooCv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kernel: KernelKind,
    pub bandwidth: Bandwidth,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            kernel: KernelKind::Epanechnikov,
            bandwidth: Bandwidth::LooCv,
        }
    }
}

/// Local-constant kernel estimate at `x`; `None` when every kernel weight
/// vanishes.
pub fn nadaraya_watson(
    xs: &[f64],
    ys: &[f64],
    kernel: KernelKind,
    bandwidth: f64,
    x: f64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in xs.iter().zip(ys) {
        let w = kernel.weight((xi - x) / bandwidth);
        num += w * yi;
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Leave-one-out cross-validated bandwidth over the given candidates;
/// ties break to the smaller bandwidth.
pub fn loo_cv_bandwidth(
    xs: &[f64],
    ys: &[f64],
    kernel: KernelKind,
    candidates: &[f64],
) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::invalid(
            "need at least 2 support points for bandwidth selection".to_string(),
        ));
    }
    let mut best: Option<(f64, f64)> = None; // (error, h)
    for &h in candidates {
        if !(h > 0.0) {
            continue;
        }
        let mut err = 0.0;
        let mut used = 0usize;
        for i in 0..xs.len() {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..xs.len() {
                if i == j {
                    continue;
                }
                let w = kernel.weight((xs[j] - xs[i]) / h);
                num += w * ys[j];
                den += w;
            }
            if den > 0.0 {
                err += (num / den - ys[i]).powi(2);
                used += 1;
            }
        }
        if used == 0 {
            continue;
        }
        let score = err / used as f64;
        let better = match best {
            None => true,
            Some((be, bh)) => score < be || (score == be && h < bh),
        };
        if better {
            best = Some((score, h));
        }
    }
    best.map(|(_, h)| h).ok_or_else(|| {
        Error::degenerate("no bandwidth candidate leaves any point predictable".to_string())
    })
}

/// Log-spaced bandwidth candidates on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// A fitted smoother: support points plus the resolved kernel/bandwidth,
/// evaluable at arbitrary locations.
#[derive(Debug, Clone)]
pub struct SmoothedCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    pub kernel: KernelKind,
    pub bandwidth: f64,
}

impl SmoothedCurve {
    /// Builds the smoother, resolving a cross-validated bandwidth over
    /// `search_range` when requested.
    pub fn fit(
        xs: Vec<f64>,
        ys: Vec<f64>,
        config: SmootherConfig,
        search_range: (f64, f64),
    ) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::invalid("smoother needs matching nonempty inputs".to_string()));
        }
        let bandwidth = match config.bandwidth {
            Bandwidth::Fixed(h) => {
                if !(h > 0.0) {
                    return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
                }
                h
            }
            Bandwidth::LooCv => {
                if xs.len() < 2 {
                    return Err(Error::invalid(
                        "need at least 2 points to cross-validate a bandwidth".to_string(),
                    ));
                }
                let candidates = log_spaced(search_range.0, search_range.1, 20);
                loo_cv_bandwidth(&xs, &ys, config.kernel, &candidates)?
            }
        };
        Ok(SmoothedCurve {
            xs,
            ys,
            kernel: config.kernel,
            bandwidth,
        })
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        nadaraya_watson(&self.xs, &self.ys, self.kernel, self.bandwidth, x)
    }

    /// Evaluation with `x` clamped into the support span, so points just
    /// outside the matched range take the boundary value instead of being
    /// undefined.
    pub fn eval_clamped(&self, x: f64) -> Option<f64> {
        let lo = self.xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.eval(x.clamp(lo, hi))
    }

    pub fn support(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernels_are_normalized_and_symmetric() {
        for kernel in [
            KernelKind::Uniform,
            KernelKind::Epanechnikov,
            KernelKind::GaussianTruncated,
        ] {
            // trapezoid integral over [-1, 1]
            let steps = 200_000;
            let h = 2.0 / steps as f64;
            let mut integral = 0.5 * (kernel.weight(-1.0) + kernel.weight(1.0));
            for i in 1..steps {
                integral += kernel.weight(-1.0 + i as f64 * h);
            }
            integral *= h;
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
            for u in [0.1, 0.4, 0.9] {
                assert_eq!(kernel.weight(u), kernel.weight(-u));
            }
            assert_eq!(kernel.weight(1.5), 0.0);
        }
    }

    #[test]
    fn constant_values_smooth_to_the_constant() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys = vec![3.25; 10];
        for kernel in [
            KernelKind::Uniform,
            KernelKind::Epanechnikov,
            KernelKind::GaussianTruncated,
        ] {
            for x in [0.0, 4.5, 9.0] {
                let v = nadaraya_watson(&xs, &ys, kernel, 2.5, x).unwrap();
                assert_abs_diff_eq!(v, 3.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_values_are_reproduced_at_interior_points() {
        // symmetric neighborhoods cancel the linear trend exactly
        let xs: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x).collect();
        for kernel in [KernelKind::Uniform, KernelKind::Epanechnikov] {
            for &x in &xs[4..17] {
                let v = nadaraya_watson(&xs, &ys, kernel, 1.6, x).unwrap();
                assert_abs_diff_eq!(v, 2.0 - 3.0 * x, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn tiny_bandwidth_degenerates_to_the_point_estimates() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| x * x).collect();
        for (&x, &y) in xs.iter().zip(&ys) {
            let v = nadaraya_watson(&xs, &ys, KernelKind::Epanechnikov, 0.25, x).unwrap();
            assert_abs_diff_eq!(v, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn far_points_are_undefined_without_clamping() {
        let xs = vec![0.0, 1.0, 2.0];
        let ys = vec![5.0, 6.0, 7.0];
        assert_eq!(
            nadaraya_watson(&xs, &ys, KernelKind::Epanechnikov, 0.5, 40.0),
            None
        );
        let curve = SmoothedCurve::fit(
            xs,
            ys,
            SmootherConfig {
                kernel: KernelKind::Epanechnikov,
                bandwidth: Bandwidth::Fixed(0.5),
            },
            (0.1, 1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(curve.eval_clamped(40.0).unwrap(), 7.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_validation_prefers_smoothing_for_noisy_linear_data() {
        // deterministic pseudo-noise around a line: a moderate bandwidth
        // must beat the near-interpolating one
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| x + if i % 2 == 0 { 0.8 } else { -0.8 })
            .collect();
        let h = loo_cv_bandwidth(
            &xs,
            &ys,
            KernelKind::Epanechnikov,
            &[0.3, 0.6, 1.2, 2.4],
        )
        .unwrap();
        assert!(h >= 0.6, "chose h = {h}");
    }
}
