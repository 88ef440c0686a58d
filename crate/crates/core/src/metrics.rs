use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(y_true: &[f64], y_pred: &[f64]) -> Result<Self> {
        let mse = mse(y_true, y_pred)?;
        Ok(Self {
            mse,
            rmse: rmse(mse)?,
            r_squared: r_squared(y_true, y_pred)?,
            n: y_true.len(),
        })
    }
}

fn check_pair(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn sum_squared_residuals(y_true: &[f64], y_pred: &[f64]) -> f64 {
    y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum()
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    Ok(sum_squared_residuals(y_true, y_pred) / y_true.len() as f64)
}

pub fn rmse(mse_value: f64) -> Result<f64> {
    if mse_value < 0.0 || mse_value.is_nan() {
        return Err(Error::InvalidArgument(format!("mse must be >= 0, got {mse_value}")));
    }
    Ok(mse_value.sqrt())
}

/// `1 − SS_res / SS_tot`; negative for predictors worse than the mean.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    if y_true.len() < 2 {
        return Err(Error::UndefinedRSquared);
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    Ok(1.0 - sum_squared_residuals(y_true, y_pred) / ss_tot)
}
