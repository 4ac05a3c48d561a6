//! Learnable parameters, their canonical ordering, and initialization.

use super::{ModelConfig, ModelError};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

/// A dense affine map x -> x W + b.
#[derive(Debug, Clone)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Query/key/value maps of one attention path.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
}

/// One projection layer: affine followed by layer normalization.
#[derive(Debug, Clone)]
pub struct NormedLayer {
    pub affine: Affine,
    pub gain: Tensor,
    pub bias: Tensor,
}

/// Every learnable tensor of one model instance, plus the seed it was
/// initialized from. The parameter list order is canonical: optimizer
/// moments, checkpoints, and tape leaves all use it.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub seed: u64,
    /// Recency scale of the adaptive smoother.
    pub beta: Tensor,
    pub t_pos: Tensor,
    pub s_pos: Tensor,
    pub expand: Affine,
    pub spatial: AttentionParams,
    pub temporal: AttentionParams,
    pub gate: Affine,
    pub compress: Affine,
    pub fc: Vec<NormedLayer>,
    pub head: Affine,
    /// Single affine per time column used when the projection head is
    /// ablated; carried always so shapes never depend on the toggles.
    pub direct_head: Affine,
}

fn affine(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> Affine {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Affine {
        weight: Tensor::param(vec![fan_in, fan_out], data).expect("valid weight shape"),
        bias: Tensor::param(vec![fan_out], vec![0.0; fan_out]).expect("valid bias shape"),
    }
}

fn attention(rng: &mut ChaCha20Rng, hidden: usize) -> AttentionParams {
    AttentionParams {
        query: affine(rng, hidden, hidden),
        key: affine(rng, hidden, hidden),
        value: affine(rng, hidden, hidden),
    }
}

fn normed_layer(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> NormedLayer {
    NormedLayer {
        affine: affine(rng, fan_in, fan_out),
        gain: Tensor::param(vec![fan_out], vec![1.0; fan_out]).expect("valid gain shape"),
        bias: Tensor::param(vec![fan_out], vec![0.0; fan_out]).expect("valid bias shape"),
    }
}

impl ModelState {
    /// Deterministic initialization: affine weights uniform in
    /// +/- 1/sqrt(fan_in) with zero biases, position embeddings N(0, 0.02),
    /// normalization gains one, and the recency scale at 0.1.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (n, m, l, h) = (
            config.n_points,
            config.obs_len,
            config.horizon,
            config.hidden,
        );
        let pos = Normal::new(0.0, 0.02).expect("valid stddev");
        let draw_pos = |count: usize, rng: &mut ChaCha20Rng| -> Vec<f64> {
            (0..count).map(|_| pos.sample(rng)).collect()
        };

        let beta = Tensor::param(vec![1], vec![0.1])?;
        let t_pos = Tensor::param(vec![1, m, h], draw_pos(m * h, &mut rng))?;
        let s_pos = Tensor::param(vec![n, 1, h], draw_pos(n * h, &mut rng))?;
        let expand = affine(&mut rng, 1, h);
        let spatial = attention(&mut rng, h);
        let temporal = attention(&mut rng, h);
        let gate = affine(&mut rng, 2 * h, h);
        let compress = affine(&mut rng, h, 1);
        let fc = vec![
            normed_layer(&mut rng, n, h),
            normed_layer(&mut rng, h, h),
            normed_layer(&mut rng, h, h / 2),
            normed_layer(&mut rng, h / 2, h / 2),
            normed_layer(&mut rng, h / 2, h / 2),
            normed_layer(&mut rng, h / 2, h / 2),
        ];
        let head = affine(&mut rng, h / 2, l + 1);
        let direct_head = affine(&mut rng, n, l + 1);

        Ok(Self {
            config: config.clone(),
            seed,
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
        })
    }

    /// All parameters in canonical order.
    pub fn param_refs(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = vec![&self.beta, &self.t_pos, &self.s_pos];
        push_affine(&mut out, &self.expand);
        push_attention(&mut out, &self.spatial);
        push_attention(&mut out, &self.temporal);
        push_affine(&mut out, &self.gate);
        push_affine(&mut out, &self.compress);
        for layer in &self.fc {
            push_affine(&mut out, &layer.affine);
            out.push(&layer.gain);
            out.push(&layer.bias);
        }
        push_affine(&mut out, &self.head);
        push_affine(&mut out, &self.direct_head);
        out
    }

    /// Mutable view in the same canonical order.
    pub fn param_refs_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.beta, &mut self.t_pos, &mut self.s_pos];
        push_affine_mut(&mut out, &mut self.expand);
        push_attention_mut(&mut out, &mut self.spatial);
        push_attention_mut(&mut out, &mut self.temporal);
        push_affine_mut(&mut out, &mut self.gate);
        push_affine_mut(&mut out, &mut self.compress);
        for layer in &mut self.fc {
            push_affine_mut(&mut out, &mut layer.affine);
            out.push(&mut layer.gain);
            out.push(&mut layer.bias);
        }
        push_affine_mut(&mut out, &mut self.head);
        push_affine_mut(&mut out, &mut self.direct_head);
        out
    }

    /// Stable names aligned with [`Self::param_refs`]; checkpoint block ids.
    pub fn param_names() -> Vec<String> {
        let mut names = vec!["beta".into(), "t_pos".into(), "s_pos".into()];
        let aff = |names: &mut Vec<String>, base: &str| {
            names.push(format!("{base}.weight"));
            names.push(format!("{base}.bias"));
        };
        aff(&mut names, "expand");
        for path in ["spatial", "temporal"] {
            for map in ["query", "key", "value"] {
                aff(&mut names, &format!("{path}.{map}"));
            }
        }
        aff(&mut names, "gate");
        aff(&mut names, "compress");
        for i in 1..=6 {
            aff(&mut names, &format!("fc{i}"));
            names.push(format!("fc{i}.gain"));
            names.push(format!("fc{i}.ln_bias"));
        }
        aff(&mut names, "head");
        aff(&mut names, "direct_head");
        names
    }

    pub fn parameter_total(&self) -> usize {
        self.param_refs().iter().map(|p| p.len()).sum()
    }

    /// Closed-form parameter count as a function of the config alone.
    pub fn parameter_count(config: &ModelConfig) -> usize {
        let (n, m, l, h) = (
            config.n_points,
            config.obs_len,
            config.horizon,
            config.hidden,
        );
        let hh = h / 2;
        let affine = |i: usize, o: usize| i * o + o;
        1 + m * h
            + n * h
            + affine(1, h)
            + 2 * 3 * affine(h, h)
            + affine(2 * h, h)
            + affine(h, 1)
            + affine(n, h) + 2 * h
            + affine(h, h) + 2 * h
            + affine(h, hh) + 2 * hh
            + 3 * (affine(hh, hh) + 2 * hh)
            + affine(hh, l + 1)
            + affine(n, l + 1)
    }

    pub fn all_finite(&self) -> bool {
        self.param_refs()
            .iter()
            .all(|p| p.data().iter().all(|v| v.is_finite()))
    }
}

fn push_affine<'a>(out: &mut Vec<&'a Tensor>, a: &'a Affine) {
    out.push(&a.weight);
    out.push(&a.bias);
}

fn push_attention<'a>(out: &mut Vec<&'a Tensor>, a: &'a AttentionParams) {
    push_affine(out, &a.query);
    push_affine(out, &a.key);
    push_affine(out, &a.value);
}

fn push_affine_mut<'a>(out: &mut Vec<&'a mut Tensor>, a: &'a mut Affine) {
    out.push(&mut a.weight);
    out.push(&mut a.bias);
}

fn push_attention_mut<'a>(out: &mut Vec<&'a mut Tensor>, a: &'a mut AttentionParams) {
    push_affine_mut(out, &mut a.query);
    push_affine_mut(out, &mut a.key);
    push_affine_mut(out, &mut a.value);
}
