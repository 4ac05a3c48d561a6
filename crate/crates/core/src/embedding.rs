//! Delay-coordinate targets: the correspondence between an observed field
//! window and the Hankel-structured delay matrix of one spatial point.
//!
//! For an observation window of M snapshots and a horizon of L steps, the
//! delay matrix D has shape (L+1) x M with D(l, m) = u_k(t_{m+l}). Entries
//! with m + l inside the window are known at training time; the rest are
//! the prediction target. Every cell on a fixed anti-diagonal refers to the
//! same instant, which both defines the readout and gives the consistency
//! penalty its meaning.

use crate::pde::FieldSeries;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("series of length {len} is too short for M = {m}, L = {l}")]
    SeriesTooShort { len: usize, m: usize, l: usize },
    #[error("window [{start}, {end}) exceeds the {n_times} recorded snapshots")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        n_times: usize,
    },
    #[error("target index {k} out of range for {n} grid points")]
    TargetOutOfRange { k: usize, n: usize },
    #[error("readout needs a horizon of at least 1")]
    EmptyHorizon,
}

/// M consecutive snapshots of the full system state, N x M row-major.
#[derive(Debug, Clone)]
pub struct ObservationWindow {
    values: Vec<f64>,
    pub start_time_index: usize,
    pub spatial_size: usize,
    pub window_length: usize,
}

impl ObservationWindow {
    pub fn new(
        values: Vec<f64>,
        start_time_index: usize,
        spatial_size: usize,
        window_length: usize,
    ) -> Self {
        assert_eq!(values.len(), spatial_size * window_length);
        Self {
            values,
            start_time_index,
            spatial_size,
            window_length,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, m: usize) -> f64 {
        self.values[i * self.window_length + m]
    }
}

/// The (L+1) x M delay matrix of one target point, with its known mask.
#[derive(Debug, Clone)]
pub struct DelayMatrix {
    values: Vec<f64>,
    pub horizon: usize,
    pub window_length: usize,
    pub target_index: usize,
    known_mask: Vec<bool>,
}

impl DelayMatrix {
    pub fn from_values(
        values: Vec<f64>,
        window_length: usize,
        horizon: usize,
        target_index: usize,
    ) -> Self {
        assert_eq!(values.len(), (horizon + 1) * window_length);
        Self {
            values,
            horizon,
            window_length,
            target_index,
            known_mask: known_loss_mask(window_length, horizon),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, l: usize, m: usize) -> f64 {
        self.values[l * self.window_length + m]
    }

    pub fn known_mask(&self) -> &[bool] {
        &self.known_mask
    }

    pub fn is_known(&self, l: usize, m: usize) -> bool {
        self.known_mask[l * self.window_length + m]
    }

    pub fn known_count(&self) -> usize {
        known_count(self.window_length, self.horizon)
    }

    /// Flat indices of the cells on the anti-diagonal for future step
    /// `r` in 1..=L; every such cell refers to time t_{M+r}.
    pub fn future_diagonal_indices(&self, r: usize) -> Vec<usize> {
        let m = self.window_length;
        let d = m - 1 + r;
        (0..=self.horizon)
            .filter_map(|l| {
                let col = d.checked_sub(l)?;
                (col < m).then_some(l * m + col)
            })
            .collect()
    }
}

/// mask(l, m) = true when the cell's time t_{m+l} lies inside the
/// observation window (1-indexed m + l <= M).
pub fn known_loss_mask(window_length: usize, horizon: usize) -> Vec<bool> {
    let mut mask = vec![false; (horizon + 1) * window_length];
    for l in 0..=horizon {
        for m in 0..window_length {
            mask[l * window_length + m] = m + l < window_length;
        }
    }
    mask
}

/// Closed-form count of known entries: row l contributes max(0, M - l).
pub fn known_count(window_length: usize, horizon: usize) -> usize {
    (0..=horizon)
        .map(|l| window_length.saturating_sub(l))
        .sum()
}

/// Builds D(l, m) = series[m + l] from one spatial row covering at least
/// M + L samples.
pub fn build_delay_matrix(
    series_row: &[f64],
    window_length: usize,
    horizon: usize,
    target_index: usize,
) -> Result<DelayMatrix, EmbeddingError> {
    if series_row.len() < window_length + horizon {
        return Err(EmbeddingError::SeriesTooShort {
            len: series_row.len(),
            m: window_length,
            l: horizon,
        });
    }
    let mut values = vec![0.0; (horizon + 1) * window_length];
    for l in 0..=horizon {
        for m in 0..window_length {
            values[l * window_length + m] = series_row[m + l];
        }
    }
    Ok(DelayMatrix::from_values(
        values,
        window_length,
        horizon,
        target_index,
    ))
}

/// The future series recovered from a (predicted) delay matrix: one value
/// per horizon step, averaged over its anti-diagonal, plus the population
/// standard deviation of the contributing cells as a confidence diagnostic.
#[derive(Debug, Clone)]
pub struct ReadoutSeries {
    pub predictions: Vec<f64>,
    pub dispersions: Vec<f64>,
}

pub fn antidiagonal_readout(matrix: &DelayMatrix) -> Result<ReadoutSeries, EmbeddingError> {
    if matrix.horizon == 0 {
        return Err(EmbeddingError::EmptyHorizon);
    }
    let mut predictions = Vec::with_capacity(matrix.horizon);
    let mut dispersions = Vec::with_capacity(matrix.horizon);
    for r in 1..=matrix.horizon {
        let cells = matrix.future_diagonal_indices(r);
        let n = cells.len() as f64;
        let mean = cells.iter().map(|&i| matrix.values[i]).sum::<f64>() / n;
        let var = cells
            .iter()
            .map(|&i| {
                let d = matrix.values[i] - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        predictions.push(mean);
        dispersions.push(var.sqrt());
    }
    Ok(ReadoutSeries {
        predictions,
        dispersions,
    })
}

/// Cuts the observation window out of `observed` and builds the ground
/// truth delay matrix for point `k` from `noiseless` (the two coincide
/// when no noise was added).
pub fn window_split(
    observed: &FieldSeries,
    noiseless: &FieldSeries,
    t_start_index: usize,
    window_length: usize,
    horizon: usize,
    k: usize,
) -> Result<(ObservationWindow, DelayMatrix), EmbeddingError> {
    let n = observed.n_points();
    if k >= n {
        return Err(EmbeddingError::TargetOutOfRange { k, n });
    }
    let end = t_start_index + window_length + horizon;
    if end > observed.n_times || end > noiseless.n_times {
        return Err(EmbeddingError::WindowOutOfRange {
            start: t_start_index,
            end,
            n_times: observed.n_times.min(noiseless.n_times),
        });
    }
    let mut values = Vec::with_capacity(n * window_length);
    for i in 0..n {
        let row = observed.row(i);
        values.extend_from_slice(&row[t_start_index..t_start_index + window_length]);
    }
    let window = ObservationWindow::new(values, t_start_index, n, window_length);
    let truth_row = &noiseless.row(k)[t_start_index..end];
    let truth = build_delay_matrix(truth_row, window_length, horizon, k)?;
    Ok((window, truth))
}

/// Advisory embedding-length check: the delay reconstruction is only
/// guaranteed faithful when the horizon exceeds twice the attractor
/// dimension. Returns true when the configured hint violates that.
pub fn horizon_too_short(horizon: usize, attractor_dim_hint: f64) -> bool {
    (horizon as f64) <= 2.0 * attractor_dim_hint
}
