//! Forecast error metrics.

use crate::error::{shape_err, Error, Result};

/// Mean squared error.
pub fn mse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return shape_err("mse", &[prediction.len()], &[target.len()]);
    }
    if target.is_empty() {
        return Err(Error::EmptySequence);
    }
    let sum: f64 = prediction.iter().zip(target).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(sum / target.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    /// Targets equal to zero, left out of the MAPE average.
    pub mape_excluded: usize,
}

/// RMSE `√(Σ(y−ŷ)²/N)`, MAE `Σ|y−ŷ|/N` and MAPE `Σ(|ŷ−y|/|y|)/N × 100`.
/// Zero targets are skipped for MAPE only.
pub fn evaluate(prediction: &[f64], target: &[f64]) -> Result<Metrics> {
    let rmse = crate::math::sqrt(mse(prediction, target)?);
    let n = target.len() as f64;
    let mae = prediction.iter().zip(target).map(|(p, y)| (y - p).abs()).sum::<f64>() / n;
    let (mut ape, mut used) = (0.0, 0usize);
    for (p, y) in prediction.iter().zip(target) {
        if *y != 0.0 {
            ape += (p - y).abs() / y.abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::AllZeroTargets);
    }
    Ok(Metrics {
        rmse,
        mae,
        mape: ape / used as f64 * 100.0,
        mape_excluded: target.len() - used,
    })
}

/// Sample mean and (n−1) standard deviation; std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, crate::math::sqrt(var))
}
