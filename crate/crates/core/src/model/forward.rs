//! The forward pass, block by block, written against tape leaves so the
//! same code serves training, evaluation, and finite-difference checks.

use super::state::ModelState;
use super::{ComponentToggles, ModelConfig, ModelError};
use crate::tensor::{DropoutMode, NodeId, Tape};
use rand_chacha::ChaCha20Rng;

/// Tape handles of one affine map.
#[derive(Debug, Clone, Copy)]
pub struct BoundAffine {
    pub weight: NodeId,
    pub bias: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    pub query: BoundAffine,
    pub key: BoundAffine,
    pub value: BoundAffine,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundNormedLayer {
    pub affine: BoundAffine,
    pub gain: NodeId,
    pub bias: NodeId,
}

/// Every parameter of the model as a tape leaf, in canonical order.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub beta: NodeId,
    pub t_pos: NodeId,
    pub s_pos: NodeId,
    pub expand: BoundAffine,
    pub spatial: BoundAttention,
    pub temporal: BoundAttention,
    pub gate: BoundAffine,
    pub compress: BoundAffine,
    pub fc: Vec<BoundNormedLayer>,
    pub head: BoundAffine,
    pub direct_head: BoundAffine,
}

struct Cursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> NodeId {
        let id = self.ids[self.pos];
        self.pos += 1;
        id
    }

    fn affine(&mut self) -> BoundAffine {
        BoundAffine {
            weight: self.next(),
            bias: self.next(),
        }
    }

    fn attention(&mut self) -> BoundAttention {
        BoundAttention {
            query: self.affine(),
            key: self.affine(),
            value: self.affine(),
        }
    }
}

impl BoundModel {
    /// Reassembles the structured view from leaves created in the canonical
    /// parameter order of [`ModelState::param_refs`].
    pub fn from_ids(ids: &[NodeId]) -> Self {
        let mut c = Cursor { ids, pos: 0 };
        let beta = c.next();
        let t_pos = c.next();
        let s_pos = c.next();
        let expand = c.affine();
        let spatial = c.attention();
        let temporal = c.attention();
        let gate = c.affine();
        let compress = c.affine();
        let fc = (0..6)
            .map(|_| BoundNormedLayer {
                affine: c.affine(),
                gain: c.next(),
                bias: c.next(),
            })
            .collect();
        let head = c.affine();
        let direct_head = c.affine();
        assert_eq!(c.pos, ids.len(), "leaf list does not match the model layout");
        Self {
            beta,
            t_pos,
            s_pos,
            expand,
            spatial,
            temporal,
            gate,
            compress,
            fc,
            head,
            direct_head,
        }
    }

    /// Creates the leaves from a state and binds them.
    pub fn bind(tape: &mut Tape, state: &ModelState) -> Self {
        let ids: Vec<NodeId> = state.param_refs().iter().map(|p| tape.leaf(p)).collect();
        Self::from_ids(&ids)
    }
}

fn linear2(tape: &mut Tape, x: NodeId, map: BoundAffine) -> Result<NodeId, ModelError> {
    let prod = tape.matmul(x, map.weight)?;
    let shape = tape.shape(prod).to_vec();
    let bias = tape.broadcast_to(map.bias, shape)?;
    Ok(tape.add(prod, bias)?)
}

fn linear3(tape: &mut Tape, x: NodeId, map: BoundAffine) -> Result<NodeId, ModelError> {
    let shape = tape.shape(x).to_vec();
    let (a, b, c) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(x, vec![a * b, c])?;
    let out = linear2(tape, flat, map)?;
    let d = tape.shape(out)[1];
    Ok(tape.reshape(out, vec![a, b, d])?)
}

/// Smoothing coefficients alpha_j = sigmoid(beta * j) for j = 0..M-1,
/// followed by the recursive mix of each observation column with the
/// running smoothed value (initialized to zero).
pub fn adaptive_smoothing(
    tape: &mut Tape,
    obs: NodeId,
    beta: NodeId,
) -> Result<NodeId, ModelError> {
    let m = tape.shape(obs)[1];
    let positions = tape.constant(vec![m], (0..m).map(|j| j as f64).collect())?;
    let scaled = tape.scale_by(beta, positions)?;
    let alphas = tape.sigmoid(scaled);
    Ok(tape.adaptive_ewma(obs, alphas)?)
}

/// Expands each scalar cell to `hidden` features and adds the broadcast
/// temporal and spatial position embeddings.
pub fn expand_and_position(
    tape: &mut Tape,
    smoothed: NodeId,
    bound: &BoundModel,
    config: &ModelConfig,
) -> Result<NodeId, ModelError> {
    let (n, m, h) = (config.n_points, config.obs_len, config.hidden);
    let flat = tape.reshape(smoothed, vec![n * m, 1])?;
    let expanded = linear2(tape, flat, bound.expand)?;
    let expanded = tape.reshape(expanded, vec![n, m, h])?;
    let t_b = tape.broadcast_to(bound.t_pos, vec![n, m, h])?;
    let s_b = tape.broadcast_to(bound.s_pos, vec![n, m, h])?;
    let with_t = tape.add(expanded, t_b)?;
    Ok(tape.add(with_t, s_b)?)
}

/// Scaled dot-product self-attention over axis 1 of a [batch, seq, hidden]
/// tensor, one independent head.
pub fn attention_path(
    tape: &mut Tape,
    x: NodeId,
    params: BoundAttention,
    hidden: usize,
) -> Result<NodeId, ModelError> {
    let q = linear3(tape, x, params.query)?;
    let k = linear3(tape, x, params.key)?;
    let v = linear3(tape, x, params.value)?;
    let k_t = tape.swap_axes12(k)?;
    let scores = tape.batch_matmul(q, k_t)?;
    let scaled = tape.mul_const(scores, 1.0 / (hidden as f64).sqrt());
    let weights = tape.softmax_lastdim(scaled)?;
    Ok(tape.batch_matmul(weights, v)?)
}

/// Fuses the space-major stream S [N, M, h] with the time-major stream
/// T [M, N, h]: concatenate, gate, mix convexly, compress features to one,
/// and squeeze to an N x M matrix. With `use_fusion` off the streams are
/// averaged instead of gated.
pub fn gated_fusion(
    tape: &mut Tape,
    s_stream: NodeId,
    t_stream: NodeId,
    bound: &BoundModel,
    config: &ModelConfig,
    use_fusion: bool,
) -> Result<NodeId, ModelError> {
    let (n, m) = (config.n_points, config.obs_len);
    let t_aligned = tape.swap_axes01(t_stream)?;
    let fused = if use_fusion {
        let catch = tape.concat_last(s_stream, t_aligned)?;
        let gate_pre = linear3(tape, catch, bound.gate)?;
        let gating = tape.sigmoid(gate_pre);
        // gating * T' + (1 - gating) * S  ==  S + gating * (T' - S)
        let diff = tape.sub(t_aligned, s_stream)?;
        let weighted = tape.mul(gating, diff)?;
        tape.add(s_stream, weighted)?
    } else {
        let sum = tape.add(s_stream, t_aligned)?;
        tape.mul_const(sum, 0.5)
    };
    let compressed = linear3(tape, fused, bound.compress)?;
    Ok(tape.reshape(compressed, vec![n, m])?)
}

/// The projection head: six affine+norm+relu+dropout layers over the
/// transposed fused matrix (each time column is one feature vector), with
/// the width halved at layer 3 and residuals added after layers 4 and 6,
/// then the output affine and a transpose to (L+1) x M. With
/// `use_projection` off, a single affine per time column replaces it.
#[allow(clippy::too_many_arguments)]
pub fn projection_head(
    tape: &mut Tape,
    fused: NodeId,
    bound: &BoundModel,
    config: &ModelConfig,
    mode: DropoutMode,
    rng: &mut ChaCha20Rng,
    use_projection: bool,
) -> Result<NodeId, ModelError> {
    let transposed = tape.swap_axes01(fused)?;
    let out = if use_projection {
        let mut x = transposed;
        let mut skip = None;
        for (i, layer) in bound.fc.iter().enumerate() {
            let pre = linear2(tape, x, layer.affine)?;
            let normed = tape.layer_norm(pre, layer.gain, layer.bias)?;
            let act = tape.relu(normed);
            let dropped = tape.dropout(act, config.dropout_rate, mode, rng)?;
            x = match i {
                3 | 5 => tape.add(dropped, skip.expect("skip set two layers earlier"))?,
                _ => dropped,
            };
            if i == 2 || i == 4 {
                skip = Some(x);
            }
        }
        linear2(tape, x, bound.head)?
    } else {
        linear2(tape, transposed, bound.direct_head)?
    };
    Ok(tape.swap_axes01(out)?)
}

/// Full composition: smoothing, expansion + positions, the two attention
/// paths, gated fusion, and the projection head. Returns the predicted
/// delay matrix node of shape (L+1) x M.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundModel,
    obs: NodeId,
    config: &ModelConfig,
    toggles: &ComponentToggles,
    mode: DropoutMode,
    rng: &mut ChaCha20Rng,
) -> Result<NodeId, ModelError> {
    let smoothed = if toggles.smoothing {
        adaptive_smoothing(tape, obs, bound.beta)?
    } else {
        obs
    };
    let embedded = expand_and_position(tape, smoothed, bound, config)?;

    let (s_stream, t_stream) = if toggles.attention {
        // Spatial path: batch over the M times, mix the N points.
        let spatial_in = tape.swap_axes01(embedded)?;
        let spatial_out = attention_path(tape, spatial_in, bound.spatial, config.hidden)?;
        let s_stream = tape.swap_axes01(spatial_out)?;
        // Temporal path: batch over the N points, mix the M times;
        // reported time-major.
        let temporal_out = attention_path(tape, embedded, bound.temporal, config.hidden)?;
        let t_stream = tape.swap_axes01(temporal_out)?;
        (s_stream, t_stream)
    } else {
        let t_stream = tape.swap_axes01(embedded)?;
        (embedded, t_stream)
    };

    let fused = gated_fusion(tape, s_stream, t_stream, bound, config, toggles.fusion)?;
    projection_head(tape, fused, bound, config, mode, rng, toggles.projection)
}

/// Convenience wrapper: bind a state, run one forward pass, return the
/// predicted delay matrix values row-major.
pub fn predict(
    state: &ModelState,
    obs_values: &[f64],
    toggles: &ComponentToggles,
) -> Result<Vec<f64>, ModelError> {
    use rand::SeedableRng;
    let cfg = &state.config;
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, state);
    let obs = tape.constant(vec![cfg.n_points, cfg.obs_len], obs_values.to_vec())?;
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let out = forward(
        &mut tape,
        &bound,
        obs,
        cfg,
        toggles,
        DropoutMode::Eval,
        &mut rng,
    )?;
    Ok(tape.value(out).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};

    fn config(n: usize, m: usize, l: usize, h: usize) -> ModelConfig {
        ModelConfig {
            n_points: n,
            obs_len: m,
            horizon: l,
            hidden: h,
            dropout_rate: 0.0,
            target_index: 0,
        }
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0)
    }

    #[test]
    fn smoothing_with_zero_beta_is_constant_alpha_half() {
        let mut tape = Tape::new();
        let beta_t = Tensor::param(vec![1], vec![0.0]).unwrap();
        let beta = tape.leaf(&beta_t);
        let obs = tape
            .constant(vec![2, 3], vec![4.0, 8.0, 16.0, 2.0, 2.0, 2.0])
            .unwrap();
        let h = adaptive_smoothing(&mut tape, obs, beta).unwrap();
        let v = tape.value(h);
        assert!((v[0] - 2.0).abs() < 1e-15); // 0.5*4
        assert!((v[1] - 5.0).abs() < 1e-15); // 0.5*8 + 0.25*4
        assert!((v[2] - 10.5).abs() < 1e-15);
        assert!((v[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn smoothing_weights_satisfy_normalization_identity() {
        // Feeding a field of ones: H(i,j) = 1 - prod_{l<=j} (1 - alpha_l).
        let beta = 0.3;
        let m = 7;
        let mut tape = Tape::new();
        let beta_t = Tensor::param(vec![1], vec![beta]).unwrap();
        let beta_id = tape.leaf(&beta_t);
        let obs = tape.constant(vec![1, m], vec![1.0; m]).unwrap();
        let h = adaptive_smoothing(&mut tape, obs, beta_id).unwrap();
        let mut prod = 1.0;
        for j in 0..m {
            let alpha = 1.0 / (1.0 + (-(beta * j as f64)).exp());
            prod *= 1.0 - alpha;
            let expect = 1.0 - prod;
            assert!(
                (tape.value(h)[j] - expect).abs() < 1e-15,
                "j={j}: {} vs {expect}",
                tape.value(h)[j]
            );
        }
    }

    #[test]
    fn smoothing_saturates_to_pass_through() {
        let mut tape = Tape::new();
        let beta_t = Tensor::param(vec![1], vec![50.0]).unwrap();
        let beta = tape.leaf(&beta_t);
        let data = vec![3.0, -1.0, 2.5, 7.0];
        let obs = tape.constant(vec![1, 4], data.clone()).unwrap();
        let h = adaptive_smoothing(&mut tape, obs, beta).unwrap();
        for j in 1..4 {
            assert!(
                (tape.value(h)[j] - data[j]).abs() < 1e-8,
                "j={j}: {}",
                tape.value(h)[j]
            );
        }
    }

    #[test]
    fn smoothing_coefficients_increase_with_positive_beta() {
        for beta in [0.2, -0.4] {
            let m = 6;
            let alphas: Vec<f64> = (0..m)
                .map(|j| 1.0 / (1.0 + (-(beta * j as f64)).exp()))
                .collect();
            for w in alphas.windows(2) {
                if beta > 0.0 {
                    assert!(w[0] < w[1]);
                } else {
                    assert!(w[0] > w[1]);
                }
            }
        }
    }

    #[test]
    fn expansion_with_zero_positions_is_pure_expansion() {
        let cfg = config(3, 4, 2, 4);
        let mut state = ModelState::init(&cfg, 1).unwrap();
        state.t_pos.data_mut().iter_mut().for_each(|v| *v = 0.0);
        state.s_pos.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let obs = tape
            .constant(vec![3, 4], (0..12).map(|v| v as f64).collect())
            .unwrap();
        let out = expand_and_position(&mut tape, obs, &bound, &cfg).unwrap();
        assert_eq!(tape.shape(out), &[3, 4, 4]);
        // each cell must equal expand(w) * value + bias
        let w = state.expand.weight.data().to_vec();
        for (cell, &x) in tape.value(out).chunks(4).zip(tape.value(obs)) {
            for (f, cv) in cell.iter().enumerate() {
                assert!((cv - w[f] * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_field_embedding_is_position_sum() {
        let cfg = config(3, 4, 2, 4);
        let mut state = ModelState::init(&cfg, 2).unwrap();
        state.expand.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let obs = tape.constant(vec![3, 4], vec![0.0; 12]).unwrap();
        let out = expand_and_position(&mut tape, obs, &bound, &cfg).unwrap();
        let t = state.t_pos.data();
        let s = state.s_pos.data();
        for i in 0..3 {
            for j in 0..4 {
                for f in 0..4 {
                    let got = tape.value(out)[(i * 4 + j) * 4 + f];
                    let expect = t[j * 4 + f] + s[i * 4 + f];
                    assert!((got - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_with_seq_len_one_is_the_value_map() {
        let cfg = config(2, 1, 1, 4);
        let state = ModelState::init(&cfg, 3).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let data: Vec<f64> = (0..2 * 4).map(|v| v as f64 * 0.3 - 1.0).collect();
        let x = tape.constant(vec![2, 1, 4], data.clone()).unwrap();
        let out = attention_path(&mut tape, x, bound.temporal, 4).unwrap();
        // compare against the value projection alone
        let v = super::linear3(&mut tape, x, bound.temporal.value).unwrap();
        for (a, b) in tape.value(out).iter().zip(tape.value(v)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_query_key_gives_uniform_attention() {
        let cfg = config(2, 5, 1, 4);
        let mut state = ModelState::init(&cfg, 4).unwrap();
        for t in [
            &mut state.temporal.query.weight,
            &mut state.temporal.key.weight,
        ] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let data: Vec<f64> = (0..2 * 5 * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = tape.constant(vec![2, 5, 4], data).unwrap();
        let out = attention_path(&mut tape, x, bound.temporal, 4).unwrap();
        let v = super::linear3(&mut tape, x, bound.temporal.value).unwrap();
        for b in 0..2 {
            for f in 0..4 {
                let mean: f64 =
                    (0..5).map(|s| tape.value(v)[(b * 5 + s) * 4 + f]).sum::<f64>() / 5.0;
                for s in 0..5 {
                    let got = tape.value(out)[(b * 5 + s) * 4 + f];
                    assert!((got - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_is_permutation_equivariant_over_seq() {
        let cfg = config(1, 6, 1, 4);
        let state = ModelState::init(&cfg, 5).unwrap();
        let mut r = rng();
        let data: Vec<f64> = (0..6 * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted: Vec<f64> = perm
            .iter()
            .flat_map(|&p| data[p * 4..(p + 1) * 4].to_vec())
            .collect();

        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let x = tape.constant(vec![1, 6, 4], data).unwrap();
        let out = attention_path(&mut tape, x, bound.temporal, 4).unwrap();
        let xp = tape.constant(vec![1, 6, 4], permuted).unwrap();
        let out_p = attention_path(&mut tape, xp, bound.temporal, 4).unwrap();
        for (s, &p) in perm.iter().enumerate() {
            for f in 0..4 {
                let a = tape.value(out)[p * 4 + f];
                let b = tape.value(out_p)[s * 4 + f];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fusion_of_equal_streams_is_the_stream() {
        let cfg = config(3, 2, 1, 4);
        let state = ModelState::init(&cfg, 6).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let data: Vec<f64> = (0..3 * 2 * 4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let s = tape.constant(vec![3, 2, 4], data.clone()).unwrap();
        // t stream is the same content laid out time-major
        let t = tape.swap_axes01(s).unwrap();
        let fused = gated_fusion(&mut tape, s, t, &bound, &cfg, true).unwrap();
        // compare against compressing the stream directly
        let direct = super::linear3(&mut tape, s, bound.compress).unwrap();
        for (a, b) in tape.value(fused).iter().zip(tape.value(direct)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_gate_selects_the_time_stream() {
        let cfg = config(3, 2, 1, 4);
        let mut state = ModelState::init(&cfg, 7).unwrap();
        state.gate.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        state.gate.bias.data_mut().iter_mut().for_each(|v| *v = 100.0);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let s_data: Vec<f64> = (0..24).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t_data: Vec<f64> = (0..24).map(|_| r.gen_range(-1.0..1.0)).collect();
        let s = tape.constant(vec![3, 2, 4], s_data).unwrap();
        let t = tape.constant(vec![2, 3, 4], t_data).unwrap();
        let fused = gated_fusion(&mut tape, s, t, &bound, &cfg, true).unwrap();
        let t_aligned = tape.swap_axes01(t).unwrap();
        let direct = super::linear3(&mut tape, t_aligned, bound.compress).unwrap();
        for (a, b) in tape.value(fused).iter().zip(tape.value(direct)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gate_values_stay_strictly_inside_unit_interval() {
        let cfg = config(4, 3, 1, 4);
        let state = ModelState::init(&cfg, 8).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let s_data: Vec<f64> = (0..48).map(|_| r.gen_range(-2.0..2.0)).collect();
        let t_data: Vec<f64> = (0..48).map(|_| r.gen_range(-2.0..2.0)).collect();
        let s = tape.constant(vec![4, 3, 4], s_data.clone()).unwrap();
        let t = tape.constant(vec![3, 4, 4], t_data).unwrap();
        let catch = {
            let t_aligned = tape.swap_axes01(t).unwrap();
            tape.concat_last(s, t_aligned).unwrap()
        };
        let pre = super::linear3(&mut tape, catch, bound.gate).unwrap();
        let gating = tape.sigmoid(pre);
        assert!(tape.value(gating).iter().all(|&g| g > 0.0 && g < 1.0));
        // and the fused stream is an element-wise convex combination
        let fused = gated_fusion(&mut tape, s, t, &bound, &cfg, true).unwrap();
        assert_eq!(tape.shape(fused), &[4, 3]);
    }

    #[test]
    fn projection_shapes_and_eval_train_parity_at_zero_dropout() {
        let cfg = config(6, 5, 3, 4);
        let state = ModelState::init(&cfg, 9).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let data: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = tape.constant(vec![6, 5], data).unwrap();
        let train = projection_head(
            &mut tape,
            f,
            &bound,
            &cfg,
            DropoutMode::Train,
            &mut rng(),
            true,
        )
        .unwrap();
        let eval = projection_head(
            &mut tape,
            f,
            &bound,
            &cfg,
            DropoutMode::Eval,
            &mut rng(),
            true,
        )
        .unwrap();
        assert_eq!(tape.shape(train), &[4, 5]);
        assert_eq!(tape.value(train), tape.value(eval));
    }

    #[test]
    fn zeroed_layer_four_is_a_pure_residual_bypass() {
        let cfg = config(6, 5, 3, 4);
        let mut state = ModelState::init(&cfg, 10).unwrap();
        state.fc[3].affine.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        state.fc[3].affine.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        state.fc[3].gain.data_mut().iter_mut().for_each(|v| *v = 0.0);
        state.fc[3].bias.data_mut().iter_mut().for_each(|v| *v = 0.0);

        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let mut r = rng();
        let data: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = tape.constant(vec![6, 5], data).unwrap();
        let full = projection_head(
            &mut tape,
            f,
            &bound,
            &cfg,
            DropoutMode::Eval,
            &mut rng(),
            true,
        )
        .unwrap();

        // reference path with layer 4 replaced by the identity
        let ft = tape.swap_axes01(f).unwrap();
        let mut x = ft;
        let mut skip = None;
        for (i, layer) in bound.fc.iter().enumerate() {
            if i == 3 {
                x = skip.unwrap();
                continue;
            }
            let pre = super::linear2(&mut tape, x, layer.affine).unwrap();
            let normed = tape.layer_norm(pre, layer.gain, layer.bias).unwrap();
            x = tape.relu(normed);
            if i == 5 {
                x = tape.add(x, skip.unwrap()).unwrap();
            }
            if i == 2 || i == 4 {
                skip = Some(x);
            }
        }
        let out = super::linear2(&mut tape, x, bound.head).unwrap();
        let reference = tape.swap_axes01(out).unwrap();
        assert_eq!(tape.value(full), tape.value(reference));
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let cfg = config(6, 5, 3, 4);
        let state = ModelState::init(&cfg, 11).unwrap();
        let toggles = ComponentToggles::default();
        let mut r = rng();
        let obs: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        let a = predict(&state, &obs, &toggles).unwrap();
        let b = predict(&state, &obs, &toggles).unwrap();
        assert_eq!(a.len(), 4 * 5);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ablated_forwards_run_with_identical_shapes() {
        let cfg = config(6, 5, 3, 4);
        let state = ModelState::init(&cfg, 12).unwrap();
        let mut r = rng();
        let obs: Vec<f64> = (0..30).map(|_| r.gen_range(-1.0..1.0)).collect();
        for toggles in [
            ComponentToggles::default(),
            ComponentToggles {
                smoothing: false,
                ..Default::default()
            },
            ComponentToggles {
                attention: false,
                ..Default::default()
            },
            ComponentToggles {
                fusion: false,
                ..Default::default()
            },
            ComponentToggles {
                projection: false,
                ..Default::default()
            },
        ] {
            let out = predict(&state, &obs, &toggles).unwrap();
            assert_eq!(out.len(), 4 * 5, "toggles {toggles:?}");
        }
    }
}
