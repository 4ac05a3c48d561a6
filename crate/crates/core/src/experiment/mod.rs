//! Training objective, metrics, and the study runners.

pub mod loss;
pub mod metrics;
pub mod report;
pub mod runners;
pub mod train;

pub use loss::training_loss;
pub use metrics::{compute_metrics, MetricsReport};
pub use train::{fit, predict_delay_matrix, train_window, TrainConfig, TrainError};

use crate::model::ComponentToggles;
use serde::{Deserialize, Serialize};

/// One evaluation window: observe `obs_len` snapshots starting at
/// `start_index`, predict the following `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start_index: usize,
    pub obs_len: usize,
    pub horizon: usize,
}

impl WindowSpec {
    /// The window whose prediction targets are the `horizon` steps covering
    /// the open time region (t_a, t_b]: targets start at index
    /// round(t_a / dt) and the observation covers the `obs_len` steps
    /// before them.
    pub fn for_region(t_a: f64, dt: f64, obs_len: usize, horizon: usize) -> Self {
        let first_target = (t_a / dt).round() as usize;
        Self {
            start_index: first_target - obs_len,
            obs_len,
            horizon,
        }
    }
}

/// Named ablation arms from the component toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationArm {
    Full,
    NoSmoothing,
    NoAttention,
    NoFusion,
    NoProjection,
}

impl AblationArm {
    pub fn all() -> [AblationArm; 5] {
        [
            AblationArm::Full,
            AblationArm::NoSmoothing,
            AblationArm::NoAttention,
            AblationArm::NoFusion,
            AblationArm::NoProjection,
        ]
    }

    pub fn toggles(self) -> ComponentToggles {
        let mut t = ComponentToggles::default();
        match self {
            AblationArm::Full => {}
            AblationArm::NoSmoothing => t.smoothing = false,
            AblationArm::NoAttention => t.attention = false,
            AblationArm::NoFusion => t.fusion = false,
            AblationArm::NoProjection => t.projection = false,
        }
        t
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationArm::Full => "full",
            AblationArm::NoSmoothing => "no-ewma",
            AblationArm::NoAttention => "no-attention",
            AblationArm::NoFusion => "no-fusion",
            AblationArm::NoProjection => "no-dynafc6",
        }
    }
}
