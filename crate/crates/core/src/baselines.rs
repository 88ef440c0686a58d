//! Reference regressors: ordinary least squares, ridge and lasso.
//!
//! The intercept is never penalized. OLS and ridge go through a QR
//! factorization of the (augmented) design matrix; lasso uses cyclic
//! coordinate descent with soft-thresholding on the objective
//!
//! ```text
//! (1/N)·‖y − b − Xβ‖² + λ·‖β‖₁
//! ```
//!
//! for which every weight is zero once `λ ≥ (2/N)·max_j |X_jᵀ(y − ȳ)|`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sgd::LinearModel;

/// Designs with a larger condition number are treated as rank deficient.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BaselineSpec {
    Ols,
    Ridge {
        #[serde(default = "default_ridge_lambda")]
        lambda: f64,
    },
    Lasso {
        #[serde(default = "default_lasso_lambda")]
        lambda: f64,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_ridge_lambda() -> f64 {
    1.0
}

fn default_lasso_lambda() -> f64 {
    0.1
}

fn default_max_iters() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-8
}

impl BaselineSpec {
    pub fn defaults() -> Vec<Self> {
        vec![
            BaselineSpec::Ols,
            BaselineSpec::Ridge {
                lambda: default_ridge_lambda(),
            },
            BaselineSpec::Lasso {
                lambda: default_lasso_lambda(),
                max_iters: default_max_iters(),
                tol: default_tol(),
            },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            BaselineSpec::Ols => "OLS".into(),
            BaselineSpec::Ridge { lambda } => format!("Ridge Regression (lambda={lambda})"),
            BaselineSpec::Lasso { lambda, .. } => format!("Lasso Regression (lambda={lambda})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = match *self {
            BaselineSpec::Ols => return Ok(()),
            BaselineSpec::Ridge { lambda } => lambda,
            BaselineSpec::Lasso { lambda, max_iters, tol } => {
                if !(tol.is_finite() && tol > 0.0) {
                    return Err(Error::InvalidArgument(format!("lasso tol must be > 0, got {tol}")));
                }
                if max_iters == 0 {
                    return Err(Error::InvalidArgument("lasso max_iters must be >= 1".into()));
                }
                lambda
            }
        };
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fit_baseline(spec: &BaselineSpec, train: &Dataset) -> Result<BaselineFit> {
    spec.validate()?;
    match *spec {
        BaselineSpec::Ols => Ok(BaselineFit {
            model: fit_ols(train)?,
            iterations: 0,
            converged: true,
        }),
        BaselineSpec::Ridge { lambda } => Ok(BaselineFit {
            model: fit_ridge(train, lambda)?,
            iterations: 0,
            converged: true,
        }),
        BaselineSpec::Lasso { lambda, max_iters, tol } => fit_lasso(train, lambda, max_iters, tol),
    }
}

fn design(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut a = DMatrix::from_element(n, d + 1, 1.0);
    a.view_mut((0, 0), (n, d)).copy_from(x);
    a
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// Least squares `min ‖A·β − b‖` by Householder QR, `A` of full column rank.
fn qr_least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb)
}

fn to_model(beta: &DVector<f64>) -> LinearModel {
    let d = beta.len() - 1;
    LinearModel::new(beta.rows(0, d).iter().copied().collect(), beta[d])
}

pub fn fit_ols(train: &Dataset) -> Result<LinearModel> {
    let (n, d) = train.features().shape();
    if n <= d {
        return Err(Error::InvalidArgument(format!(
            "OLS needs more samples than features (N={n}, d={d})"
        )));
    }
    let a = design(train.features());
    let condition = condition_number(&a);
    if !(condition < MAX_DESIGN_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let beta = qr_least_squares(a, train.targets()).ok_or(Error::RankDeficient { condition })?;
    Ok(to_model(&beta))
}

/// Solves `(AᵀA + λ·I′)β = Aᵀy` as the stacked least-squares problem
/// `[A; √λ·I′]·β ≈ [y; 0]`, where `I′` leaves the intercept unpenalized.
pub fn fit_ridge(train: &Dataset, lambda: f64) -> Result<LinearModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return fit_ols(train);
    }
    let (n, d) = train.features().shape();
    let mut a = DMatrix::zeros(n + d, d + 1);
    a.view_mut((0, 0), (n, d + 1)).copy_from(&design(train.features()));
    let root = lambda.sqrt();
    for j in 0..d {
        a[(n + j, j)] = root;
    }
    let mut b = DVector::zeros(n + d);
    b.rows_mut(0, n).copy_from(train.targets());
    let beta = qr_least_squares(a, &b).ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
    })?;
    Ok(to_model(&beta))
}

/// Columns must have mean ≈ 0 and population std ≈ 1 (or be all zero).
fn check_standardized(x: &DMatrix<f64>) -> Result<()> {
    let n = x.nrows() as f64;
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let zero_col = col.iter().all(|&v| v == 0.0);
        if !zero_col && (mean.abs() > 1e-6 || (sd - 1.0).abs() > 1e-6) {
            return Err(Error::NotStandardized(format!(
                "column {j} has mean {mean:.3e} and std {sd:.6}"
            )));
        }
    }
    Ok(())
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent. Stops once the largest coordinate change in a
/// sweep (intercept included) drops below `tol`; hitting `max_iters` first
/// returns the current iterate with `converged = false`.
pub fn fit_lasso(train: &Dataset, lambda: f64, max_iters: usize, tol: f64) -> Result<BaselineFit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    let x = train.features();
    check_standardized(x)?;
    let y = train.targets();
    let (n, d) = x.shape();
    let nf = n as f64;
    let col_scale: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();

    let mut beta = vec![0.0; d];
    let mut bias = y.mean();
    // residual = y − bias − Xβ
    let mut residual = y.add_scalar(-bias);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if col_scale[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&residual) / nf + col_scale[j] * beta[j];
            let next = soft_threshold(rho, lambda / 2.0) / col_scale[j];
            let delta = next - beta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                beta[j] = next;
            }
            max_change = max_change.max(delta.abs());
        }
        let shift = residual.mean();
        if shift != 0.0 {
            residual.add_scalar_mut(-shift);
            bias += shift;
        }
        max_change = max_change.max(shift.abs());
        if max_change < tol {
            converged = true;
            break;
        }
    }
    let model = LinearModel::new(beta, bias);
    if !model.is_finite() {
        return Err(Error::NonFinite("lasso coordinate descent"));
    }
    Ok(BaselineFit {
        model,
        iterations,
        converged,
    })
}

/// Smallest `λ` for which the lasso solution is entirely zero.
pub fn lasso_lambda_max(train: &Dataset) -> f64 {
    let x = train.features();
    let y = train.targets();
    let centered = y.add_scalar(-y.mean());
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| (2.0 / n * c.dot(&centered)).abs())
        .fold(0.0, f64::max)
}
