//! Error metrics over a prediction region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction has {pred} values, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("metrics need at least one value")]
    Empty,
}

/// Headline metrics plus run metadata. `smape` is on the 0..200 scale with
/// zero-denominator terms contributing zero; `mad` is the median absolute
/// deviation of the errors about their median.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub smape: f64,
    pub mad: f64,
    pub n_points_evaluated: usize,
    /// RMSE per horizon step when the caller has that structure; empty
    /// otherwise.
    pub per_time_rmse: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<MetricsReport, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pred.len() as f64;
    let errors: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let smape = 100.0 / n
        * pred
            .iter()
            .zip(truth)
            .map(|(p, t)| {
                let denom = p.abs() + t.abs();
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * (p - t).abs() / denom
                }
            })
            .sum::<f64>();
    let med = median(&errors);
    let deviations: Vec<f64> = errors.iter().map(|e| (e - med).abs()).collect();
    let mad = median(&deviations);
    Ok(MetricsReport {
        rmse,
        mae,
        smape,
        mad,
        n_points_evaluated: pred.len(),
        per_time_rmse: Vec::new(),
        seed: 0,
        config_hash: String::new(),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric inputs"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// FNV-1a of the serialized config; stable run metadata for reports.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}
