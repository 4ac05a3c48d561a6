//! Full-batch training of a forecaster on one observation window.

use super::loss::{training_loss, LossError};
use crate::embedding::{DelayMatrix, ObservationWindow};
use crate::model::{self, BoundModel, ComponentToggles, ModelConfig, ModelError, ModelState};
use crate::tensor::{AdamState, DropoutMode, NodeId, Tape, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Optimization settings for one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the anti-diagonal consistency penalty.
    pub consistency_weight: f64,
    pub seed: u64,
    pub toggles: ComponentToggles,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.consistency_weight < 0.0 {
            return Err(TrainError::BadConfig(format!(
                "consistency weight must be non-negative, got {}",
                self.consistency_weight
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 2e-3,
            consistency_weight: 0.1,
            seed: 1,
            toggles: ComponentToggles::default(),
        }
    }
}

/// Anything trainable on the masked window objective: the full network and
/// the in-engine baselines all expose their parameters plus one tape
/// forward from the observation to a predicted delay matrix.
pub trait WindowForecaster {
    fn params(&self) -> Vec<&crate::tensor::Tensor>;
    fn params_mut(&mut self) -> Vec<&mut crate::tensor::Tensor>;
    fn forward_on(
        &self,
        tape: &mut Tape,
        leaf_ids: &[NodeId],
        obs: NodeId,
        mode: DropoutMode,
        rng: &mut ChaCha20Rng,
    ) -> Result<NodeId, ModelError>;
}

/// The full network with its component toggles fixed.
pub struct AfdStaForecaster {
    pub state: ModelState,
    pub toggles: ComponentToggles,
}

impl WindowForecaster for AfdStaForecaster {
    fn params(&self) -> Vec<&crate::tensor::Tensor> {
        self.state.param_refs()
    }

    fn params_mut(&mut self) -> Vec<&mut crate::tensor::Tensor> {
        self.state.param_refs_mut()
    }

    fn forward_on(
        &self,
        tape: &mut Tape,
        leaf_ids: &[NodeId],
        obs: NodeId,
        mode: DropoutMode,
        rng: &mut ChaCha20Rng,
    ) -> Result<NodeId, ModelError> {
        let bound = BoundModel::from_ids(leaf_ids);
        model::forward(
            tape,
            &bound,
            obs,
            &self.state.config,
            &self.toggles,
            mode,
            rng,
        )
    }
}

/// Result of one fit: the final loss and the per-epoch loss curve.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub final_loss: f64,
    pub losses: Vec<f64>,
}

/// Full-batch Adam on the masked objective; dropout active in train mode.
/// Aborts with the epoch index if the loss stops being finite.
pub fn fit<F: WindowForecaster + ?Sized>(
    forecaster: &mut F,
    window: &ObservationWindow,
    truth: &DelayMatrix,
    config: &TrainConfig,
) -> Result<FitReport, TrainError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.learning_rate);
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let leaf_ids: Vec<NodeId> = {
            let params = forecaster.params();
            params.iter().map(|p| tape.leaf(p)).collect()
        };
        let obs = tape.constant(
            vec![window.spatial_size, window.window_length],
            window.values().to_vec(),
        )?;
        let out = forecaster.forward_on(&mut tape, &leaf_ids, obs, DropoutMode::Train, &mut rng)?;
        let loss = training_loss(&mut tape, out, truth, config.consistency_weight)?;
        let loss_value = tape.value(loss)[0];
        if !loss_value.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        losses.push(loss_value);
        tape.backward(loss)?;

        let mut params = forecaster.params_mut();
        for (param, id) in params.iter_mut().zip(&leaf_ids) {
            param.accumulate_grad(tape.grad(*id))?;
        }
        adam.step(&mut params)?;
    }
    Ok(FitReport {
        final_loss: *losses.last().expect("epochs >= 1"),
        losses,
    })
}

/// Initializes a fresh model from the window seed and fits it.
pub fn train_window(
    window: &ObservationWindow,
    truth: &DelayMatrix,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(AfdStaForecaster, FitReport), TrainError> {
    let state = ModelState::init(model_config, config.seed)?;
    let mut forecaster = AfdStaForecaster {
        state,
        toggles: config.toggles,
    };
    let report = fit(&mut forecaster, window, truth, config)?;
    Ok((forecaster, report))
}

/// One evaluation-mode forward pass, packaged as a delay matrix.
pub fn predict_delay_matrix<F: WindowForecaster + ?Sized>(
    forecaster: &F,
    window: &ObservationWindow,
    horizon: usize,
    target_index: usize,
) -> Result<DelayMatrix, TrainError> {
    let mut tape = Tape::new();
    let leaf_ids: Vec<NodeId> = forecaster
        .params()
        .iter()
        .map(|p| tape.leaf(p))
        .collect();
    let obs = tape.constant(
        vec![window.spatial_size, window.window_length],
        window.values().to_vec(),
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let out = forecaster.forward_on(&mut tape, &leaf_ids, obs, DropoutMode::Eval, &mut rng)?;
    Ok(DelayMatrix::from_values(
        tape.value(out).to_vec(),
        window.window_length,
        horizon,
        target_index,
    ))
}

// ── in-engine baselines ─────────────────────────────────────────────

use crate::tensor::Tensor;
use rand::Rng;

fn baseline_affine(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> (Tensor, Tensor) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    (
        Tensor::param(vec![fan_in, fan_out], w).expect("valid shape"),
        Tensor::param(vec![fan_out], vec![0.0; fan_out]).expect("valid shape"),
    )
}

/// Four-layer ReLU perceptron per time column: N -> h -> h -> h/2 -> L+1.
pub struct DnnBaseline {
    layers: Vec<(Tensor, Tensor)>,
}

impl DnnBaseline {
    pub fn init(n_points: usize, hidden: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dims = [n_points, hidden, hidden, hidden / 2, horizon + 1];
        let layers = dims
            .windows(2)
            .map(|w| baseline_affine(&mut rng, w[0], w[1]))
            .collect();
        Self { layers }
    }
}

impl WindowForecaster for DnnBaseline {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn forward_on(
        &self,
        tape: &mut Tape,
        leaf_ids: &[NodeId],
        obs: NodeId,
        _mode: DropoutMode,
        _rng: &mut ChaCha20Rng,
    ) -> Result<NodeId, ModelError> {
        let mut x = tape.swap_axes01(obs)?; // M x N
        let n_layers = self.layers.len();
        for i in 0..n_layers {
            let (w, b) = (leaf_ids[2 * i], leaf_ids[2 * i + 1]);
            let prod = tape.matmul(x, w)?;
            let shape = tape.shape(prod).to_vec();
            let bias = tape.broadcast_to(b, shape)?;
            x = tape.add(prod, bias)?;
            if i + 1 < n_layers {
                x = tape.relu(x);
            }
        }
        Ok(tape.swap_axes01(x)?)
    }
}

/// A single affine map per time column applied directly to the raw
/// observations: N -> L+1.
pub struct DlinearBaseline {
    weight: Tensor,
    bias: Tensor,
}

impl DlinearBaseline {
    pub fn init(n_points: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (weight, bias) = baseline_affine(&mut rng, n_points, horizon + 1);
        Self { weight, bias }
    }
}

impl WindowForecaster for DlinearBaseline {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn forward_on(
        &self,
        tape: &mut Tape,
        leaf_ids: &[NodeId],
        obs: NodeId,
        _mode: DropoutMode,
        _rng: &mut ChaCha20Rng,
    ) -> Result<NodeId, ModelError> {
        let x = tape.swap_axes01(obs)?;
        let prod = tape.matmul(x, leaf_ids[0])?;
        let shape = tape.shape(prod).to_vec();
        let bias = tape.broadcast_to(leaf_ids[1], shape)?;
        let out = tape.add(prod, bias)?;
        Ok(tape.swap_axes01(out)?)
    }
}
