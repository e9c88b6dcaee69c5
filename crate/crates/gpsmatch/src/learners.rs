//! Conditional-mean learners shared by the GPS and outcome models.
//!
//! All three learners estimate a conditional mean by least squares and
//! leave residual handling (Gaussian density, pseudo-outcomes, ...) to the
//! caller: a plain linear model solved by normal equations, a polynomial
//! basis expansion of each feature, and gradient-boosted depth-1
//! regression trees with shrinkage.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which conditional-mean learner to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    NormalLinear,
    PolynomialNormal {
        degree: usize,
    },
    BoostedStumpsNormal {
        rounds: usize,
        learning_rate: f64,
    },
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::NormalLinear => "normal-linear",
            LearnerKind::PolynomialNormal { .. } => "polynomial-normal",
            LearnerKind::BoostedStumpsNormal { .. } => "boosted-stumps-normal",
        }
    }
}

/// Dense row-major feature matrix with column names for error reporting.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize, names: Vec<String>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        assert_eq!(names.len(), n_cols);
        FeatureMatrix {
            data,
            n_rows,
            n_cols,
            names,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }
}

/// A depth-1 regression tree: one split, two leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn predict(&self, x: &[f64]) -> f64 {
        if x[self.feature] < self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

/// A fitted conditional mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MeanModel {
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    /// Per-feature powers 1..=degree, no cross terms;
    /// `coefficients[k * degree + (p - 1)]` multiplies `x_k^p`.
    Polynomial {
        degree: usize,
        intercept: f64,
        coefficients: Vec<f64>,
    },
    BoostedStumps {
        baseline: f64,
        learning_rate: f64,
        stumps: Vec<Stump>,
    },
}

impl MeanModel {
    /// Evaluates the fitted conditional mean at one feature row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            MeanModel::Linear {
                intercept,
                coefficients,
            } => intercept + dot(coefficients, x),
            MeanModel::Polynomial {
                degree,
                intercept,
                coefficients,
            } => {
                let mut value = *intercept;
                for (k, &xk) in x.iter().enumerate() {
                    let mut power = 1.0;
                    for p in 0..*degree {
                        power *= xk;
                        value += coefficients[k * degree + p] * power;
                    }
                }
                value
            }
            MeanModel::BoostedStumps {
                baseline,
                learning_rate,
                stumps,
            } => {
                let boost: f64 = stumps.iter().map(|s| s.predict(x)).sum();
                baseline + learning_rate * boost
            }
        }
    }

    /// Linear coefficients on the raw features, when the model has them.
    pub fn linear_coefficients(&self) -> Option<&[f64]> {
        match self {
            MeanModel::Linear { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }
}

/// Fits the requested learner to `(x, y)` by least squares.
pub fn fit_mean_model(kind: LearnerKind, x: &FeatureMatrix, y: &[f64]) -> Result<MeanModel> {
    assert_eq!(x.n_rows(), y.len());
    match kind {
        LearnerKind::NormalLinear => fit_linear(x, y),
        LearnerKind::PolynomialNormal { degree } => fit_polynomial(x, y, degree),
        LearnerKind::BoostedStumpsNormal {
            rounds,
            learning_rate,
        } => fit_boosted_stumps(x, y, rounds, learning_rate),
    }
}

fn fit_linear(x: &FeatureMatrix, y: &[f64]) -> Result<MeanModel> {
    let solution = solve_least_squares(x, y, 1, |k, _| x.names[k].clone())?;
    Ok(MeanModel::Linear {
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
    })
}

fn fit_polynomial(x: &FeatureMatrix, y: &[f64], degree: usize) -> Result<MeanModel> {
    if degree == 0 {
        return Err(Error::invalid("polynomial degree must be >= 1".to_string()));
    }
    let solution = solve_least_squares(x, y, degree, |k, p| {
        if p == 1 {
            x.names[k].clone()
        } else {
            format!("{}^{}", x.names[k], p)
        }
    })?;
    Ok(MeanModel::Polynomial {
        degree,
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
    })
}

/// Solves the normal equations for the basis `1, x_k^p (p = 1..=degree)`.
fn solve_least_squares(
    x: &FeatureMatrix,
    y: &[f64],
    degree: usize,
    basis_name: impl Fn(usize, usize) -> String,
) -> Result<Vec<f64>> {
    let n = x.n_rows();
    let p = 1 + x.n_cols * degree;
    let mut design = DMatrix::zeros(n, p);
    for r in 0..n {
        design[(r, 0)] = 1.0;
        let row = x.row(r);
        for (k, &xk) in row.iter().enumerate() {
            let mut power = 1.0;
            for d in 0..degree {
                power *= xk;
                design[(r, 1 + k * degree + d)] = power;
            }
        }
    }
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(y);
    match gram.clone().cholesky() {
        Some(factor) => Ok(factor.solve(&rhs).as_slice().to_vec()),
        None => {
            // name the columns loading on a near-null eigendirection
            let eigen = nalgebra::SymmetricEigen::new(gram);
            let max_ev = eigen.eigenvalues.amax();
            let mut offenders = Vec::new();
            for (i, &ev) in eigen.eigenvalues.iter().enumerate() {
                if ev <= max_ev * 1e-12 {
                    let v = eigen.eigenvectors.column(i);
                    let peak = v.amax();
                    for c in 1..p {
                        if v[c].abs() > 0.3 * peak {
                            let k = (c - 1) / degree;
                            let pw = (c - 1) % degree + 1;
                            offenders.push(basis_name(k, pw));
                        }
                    }
                }
            }
            offenders.sort();
            offenders.dedup();
            Err(Error::Singular(format!(
                "design matrix is singular; collinear columns: [{}]",
                offenders.join(", ")
            )))
        }
    }
}

fn fit_boosted_stumps(
    x: &FeatureMatrix,
    y: &[f64],
    rounds: usize,
    learning_rate: f64,
) -> Result<MeanModel> {
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::invalid(format!(
            "learning rate must be in (0, 1], got {learning_rate}"
        )));
    }
    let n = x.n_rows();
    let baseline = y.iter().sum::<f64>() / n as f64;
    let mut residuals: Vec<f64> = y.iter().map(|&v| v - baseline).collect();

    // per-feature sort orders, computed once
    let sorted: Vec<Vec<usize>> = (0..x.n_cols)
        .map(|k| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x.row(a)[k].partial_cmp(&x.row(b)[k]).unwrap());
            order
        })
        .collect();

    let mut stumps = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        match best_stump(x, &residuals, &sorted) {
            Some(stump) => {
                for (j, r) in residuals.iter_mut().enumerate() {
                    *r -= learning_rate * stump.predict(x.row(j));
                }
                stumps.push(stump);
            }
            None => break, // no split improves the fit
        }
    }
    Ok(MeanModel::BoostedStumps {
        baseline,
        learning_rate,
        stumps,
    })
}

/// Exhaustive squared-error split search; deterministic tie-breaking by
/// feature order then threshold order (first strictly better split wins).
fn best_stump(x: &FeatureMatrix, residuals: &[f64], sorted: &[Vec<usize>]) -> Option<Stump> {
    let n = residuals.len();
    let total: f64 = residuals.iter().sum();
    // score to maximize: s_l^2/n_l + s_r^2/n_r; no split scores total^2/n
    let baseline_score = total * total / n as f64;
    let mut best: Option<(f64, Stump)> = None;

    for (k, order) in sorted.iter().enumerate() {
        let mut left_sum = 0.0;
        for t in 1..n {
            left_sum += residuals[order[t - 1]];
            let lo = x.row(order[t - 1])[k];
            let hi = x.row(order[t])[k];
            if lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let (nl, nr) = (t as f64, (n - t) as f64);
            let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
            let improves = match &best {
                Some((s, _)) => score > *s,
                None => score > baseline_score + 1e-12 * baseline_score.abs().max(1.0),
            };
            if improves {
                best = Some((
                    score,
                    Stump {
                        feature: k,
                        threshold: 0.5 * (lo + hi),
                        left: left_sum / nl,
                        right: right_sum / nr,
                    },
                ));
            }
        }
    }
    best.map(|(_, stump)| stump)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
