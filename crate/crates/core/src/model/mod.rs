//! The AFD-STA forecasting network.
//!
//! Observation window in, delay matrix out: adaptive exponential smoothing
//! with a learnable recency scale, feature expansion plus learnable
//! temporal/spatial position embeddings, two parallel single-head
//! self-attention paths (one mixing space, one mixing time), sigmoid-gated
//! fusion of the two streams, and a six-layer projection head with
//! residuals that maps each fused time column to the delay-matrix column
//! above it.

pub mod checkpoint;
pub mod forward;
pub mod state;

pub use forward::{
    adaptive_smoothing, attention_path, expand_and_position, forward, gated_fusion,
    projection_head, BoundAffine, BoundAttention, BoundModel, BoundNormedLayer,
};
pub use state::{Affine, AttentionParams, ModelState, NormedLayer};

use crate::tensor::TensorError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Static shape configuration of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Grid points N in the observed field.
    pub n_points: usize,
    /// Observation window length M.
    pub obs_len: usize,
    /// Prediction horizon L; the output has L+1 rows.
    pub horizon: usize,
    /// Feature width of the attention/fusion stages. Must be even: the
    /// third projection layer halves it.
    pub hidden: usize,
    pub dropout_rate: f64,
    /// Spatial index whose future this instance predicts.
    pub target_index: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_points == 0 || self.obs_len == 0 || self.horizon == 0 {
            return Err(ModelError::BadConfig(format!(
                "extents must be >= 1: N={}, M={}, L={}",
                self.n_points, self.obs_len, self.horizon
            )));
        }
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return Err(ModelError::BadConfig(format!(
                "hidden width must be even and >= 2, got {}",
                self.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::BadConfig(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.target_index >= self.n_points {
            return Err(ModelError::BadConfig(format!(
                "target index {} out of range for {} points",
                self.target_index, self.n_points
            )));
        }
        Ok(())
    }
}

/// Which components run; ablation arms disable one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentToggles {
    /// Adaptive exponential smoothing of the observation window.
    pub smoothing: bool,
    /// The two attention paths; off means both streams are the embedded input.
    pub attention: bool,
    /// Sigmoid-gated fusion; off averages the two streams.
    pub fusion: bool,
    /// Six-layer projection head; off uses a single affine per time column.
    pub projection: bool,
}

impl Default for ComponentToggles {
    fn default() -> Self {
        Self {
            smoothing: true,
            attention: true,
            fusion: true,
            projection: true,
        }
    }
}
