//! The computation tape: records forward operations, replays them in reverse.
//!
//! Nodes are appended in execution order, so the node list is already a
//! topological order of the graph; one reverse sweep propagates the loss
//! gradient to every leaf that requires it. Matrix products are delegated
//! to `matrixmultiply::dgemm`; everything else is plain loops.

use super::{numel, Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Whether dropout draws a fresh mask or passes values through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddConst(NodeId),
    MulConst(NodeId, f64),
    /// `scalar` is a one-element tensor scaling every element of `tensor`.
    ScaleBy {
        scalar: NodeId,
        tensor: NodeId,
    },
    Sigmoid(NodeId),
    Relu(NodeId),
    SoftmaxLast(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    MatMul(NodeId, NodeId),
    BatchMatMul(NodeId, NodeId),
    Reshape(NodeId),
    SwapAxes01(NodeId),
    SwapAxes12(NodeId),
    ConcatLast(NodeId, NodeId),
    BroadcastTo(NodeId),
    Gather {
        x: NodeId,
        indices: Vec<usize>,
    },
    /// Recursive smoothing along the last axis with per-column coefficients.
    Ewma {
        obs: NodeId,
        alphas: NodeId,
    },
    Sum(NodeId),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    needs_grad: bool,
    op: Op,
}

/// Records a forward pass and computes gradients for it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Gradient of the most recent `backward` target with respect to `id`.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, needs_grad: bool, op: Op) -> NodeId {
        let grad = if needs_grad {
            vec![0.0; value.len()]
        } else {
            Vec::new()
        };
        self.nodes.push(Node {
            shape,
            value,
            grad,
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Copies a tensor onto the tape as a leaf. Gradients flow back to it
    /// only if the tensor `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad,
            Op::Leaf,
        )
    }

    /// A constant leaf that never receives gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId, TensorError> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    // ── element-wise ────────────────────────────────────────────────

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape("add", a, b)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), value, needs, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape("sub", a, b)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), value, needs, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.same_shape("mul", a, b)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), value, needs, Op::Mul(a, b)))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|x| x + c).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), value, needs, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), value, needs, Op::MulConst(a, c))
    }

    /// Multiplies every element of `tensor` by the one-element `scalar`.
    pub fn scale_by(&mut self, scalar: NodeId, tensor: NodeId) -> Result<NodeId, TensorError> {
        if self.value(scalar).len() != 1 {
            return Err(TensorError::BadShape {
                op: "scale_by",
                expected: "a one-element scalar",
                got: self.shape(scalar).to_vec(),
            });
        }
        let s = self.value(scalar)[0];
        let value: Vec<f64> = self.value(tensor).iter().map(|x| s * x).collect();
        let needs = self.needs(scalar) || self.needs(tensor);
        Ok(self.push(
            self.shape(tensor).to_vec(),
            value,
            needs,
            Op::ScaleBy { scalar, tensor },
        ))
    }

    // ── activations ─────────────────────────────────────────────────

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), value, needs, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), value, needs, Op::Relu(a))
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_lastdim(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let shape = self.shape(a).to_vec();
        let last = *shape.last().expect("validated shape");
        let x = self.value(a);
        let mut value = vec![0.0; x.len()];
        for (row_out, row_in) in value.chunks_mut(last).zip(x.chunks(last)) {
            let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(shape, value, needs, Op::SoftmaxLast(a)))
    }

    /// Normalizes each last-axis slice to zero mean and unit variance, then
    /// applies the learned `gain` and `bias` (both of the last-axis length).
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, TensorError> {
        let shape = self.shape(x).to_vec();
        let last = *shape.last().expect("validated shape");
        for (name, id) in [("gain", gain), ("bias", bias)] {
            if numel(self.shape(id)) != last {
                let _ = name;
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape,
                    rhs: self.shape(id).to_vec(),
                });
            }
        }
        let rows = numel(&shape) / last;
        let xv = self.value(x);
        let mut value = vec![0.0; xv.len()];
        let mut means = vec![0.0; rows];
        let mut inv_stds = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * last..(r + 1) * last];
            let mean = row.iter().sum::<f64>() / last as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / last as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            means[r] = mean;
            inv_stds[r] = inv;
            let g = self.value(gain);
            let b = self.value(bias);
            for c in 0..last {
                value[r * last + c] = (row[c] - mean) * inv * g[c] + b[c];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            self.shape(x).to_vec(),
            value,
            needs,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                inv_std: inv_stds,
            },
        ))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate), so eval
    /// mode is exactly the identity.
    pub fn dropout(
        &mut self,
        x: NodeId,
        rate: f64,
        mode: DropoutMode,
        rng: &mut ChaCha20Rng,
    ) -> Result<NodeId, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::BadDropoutRate(rate));
        }
        if mode == DropoutMode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = self
            .value(x)
            .iter()
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let value: Vec<f64> = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), value, needs, Op::Dropout { x, mask }))
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        gemm_rowmajor(
            m,
            k,
            n,
            self.value(a),
            k as isize,
            1,
            self.value(b),
            n as isize,
            1,
            0.0,
            &mut value,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], value, needs, Op::MatMul(a, b)))
    }

    /// Per-slice matrix product of two 3-axis tensors sharing the batch axis.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "batch_matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut value = vec![0.0; batch * m * n];
        for s in 0..batch {
            gemm_rowmajor(
                m,
                k,
                n,
                &self.value(a)[s * m * k..(s + 1) * m * k],
                k as isize,
                1,
                &self.value(b)[s * k * n..(s + 1) * k * n],
                n as isize,
                1,
                0.0,
                &mut value[s * m * n..(s + 1) * m * n],
            );
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![batch, m, n], value, needs, Op::BatchMatMul(a, b)))
    }

    // ── shape ───────────────────────────────────────────────────────

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        if numel(&shape) != self.value(a).len() {
            return Err(TensorError::LengthMismatch {
                len: self.value(a).len(),
                shape,
            });
        }
        let needs = self.needs(a);
        let value = self.value(a).to_vec();
        Ok(self.push(shape, value, needs, Op::Reshape(a)))
    }

    /// Swaps the first two axes of a 2- or 3-axis tensor.
    pub fn swap_axes01(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let sa = self.shape(a).to_vec();
        if sa.len() < 2 {
            return Err(TensorError::BadShape {
                op: "swap_axes01",
                expected: "at least 2 axes",
                got: sa,
            });
        }
        let inner = if sa.len() == 3 { sa[2] } else { 1 };
        let value = swap01(self.value(a), sa[0], sa[1], inner);
        let mut shape = sa.clone();
        shape.swap(0, 1);
        let needs = self.needs(a);
        Ok(self.push(shape, value, needs, Op::SwapAxes01(a)))
    }

    /// Swaps the last two axes of a 3-axis tensor.
    pub fn swap_axes12(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 3 {
            return Err(TensorError::BadShape {
                op: "swap_axes12",
                expected: "3 axes",
                got: sa,
            });
        }
        let value = swap12(self.value(a), sa[0], sa[1], sa[2]);
        let shape = vec![sa[0], sa[2], sa[1]];
        let needs = self.needs(a);
        Ok(self.push(shape, value, needs, Op::SwapAxes12(a)))
    }

    /// Concatenates two tensors along the last axis; all other axes must agree.
    pub fn concat_last(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_last",
                lhs: sa,
                rhs: sb,
            });
        }
        let (la, lb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = numel(&sa) / la;
        let mut value = vec![0.0; rows * (la + lb)];
        for r in 0..rows {
            value[r * (la + lb)..r * (la + lb) + la]
                .copy_from_slice(&self.value(a)[r * la..(r + 1) * la]);
            value[r * (la + lb) + la..(r + 1) * (la + lb)]
                .copy_from_slice(&self.value(b)[r * lb..(r + 1) * lb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = la + lb;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, value, needs, Op::ConcatLast(a, b)))
    }

    /// Expands `a` to `target`, aligning axes from the right; each source
    /// axis must match the target extent or be 1.
    pub fn broadcast_to(&mut self, a: NodeId, target: Vec<usize>) -> Result<NodeId, TensorError> {
        validate_broadcast(self.shape(a), &target)?;
        let src_shape = padded_shape(self.shape(a), target.len());
        let value = broadcast_copy(self.value(a), &src_shape, &target);
        let needs = self.needs(a);
        Ok(self.push(target, value, needs, Op::BroadcastTo(a)))
    }

    /// Picks flat indices out of `x`, producing a 1-axis tensor.
    pub fn gather(&mut self, x: NodeId, indices: Vec<usize>) -> Result<NodeId, TensorError> {
        let len = self.value(x).len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(TensorError::GatherOutOfBounds { index: bad, len });
        }
        if indices.is_empty() {
            return Err(TensorError::BadShape {
                op: "gather",
                expected: "at least one index",
                got: vec![0],
            });
        }
        let value: Vec<f64> = indices.iter().map(|&i| self.value(x)[i]).collect();
        let needs = self.needs(x);
        Ok(self.push(vec![indices.len()], value, needs, Op::Gather { x, indices }))
    }

    /// Exponentially weighted smoothing along columns of a 2-axis tensor:
    /// out[:, j] = alphas[j] * obs[:, j] + (1 - alphas[j]) * out[:, j-1],
    /// with out[:, -1] = 0. Differentiable in both `obs` and `alphas`.
    pub fn adaptive_ewma(&mut self, obs: NodeId, alphas: NodeId) -> Result<NodeId, TensorError> {
        let so = self.shape(obs).to_vec();
        if so.len() != 2 || numel(self.shape(alphas)) != so[1] {
            return Err(TensorError::ShapeMismatch {
                op: "adaptive_ewma",
                lhs: so,
                rhs: self.shape(alphas).to_vec(),
            });
        }
        let (n, m) = (so[0], so[1]);
        let o = self.value(obs);
        let al = self.value(alphas);
        let mut value = vec![0.0; n * m];
        for i in 0..n {
            let mut prev = 0.0;
            for j in 0..m {
                prev = al[j] * o[i * m + j] + (1.0 - al[j]) * prev;
                value[i * m + j] = prev;
            }
        }
        let needs = self.needs(obs) || self.needs(alphas);
        Ok(self.push(so, value, needs, Op::Ewma { obs, alphas }))
    }

    /// Reduces every element to a single scalar sum.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = vec![self.value(a).iter().sum()];
        let needs = self.needs(a);
        self.push(vec![1], value, needs, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.mul_const(s, 1.0 / n)
    }

    // ── backward ────────────────────────────────────────────────────

    /// Propagates d(loss)/d(node) to every recorded node that needs a
    /// gradient. `loss` must be a single-element tensor. Interior gradients
    /// are scratch and zeroed per sweep; leaf gradients accumulate across
    /// repeated calls until the leaf tensor is reset.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        for node in self.nodes.iter_mut() {
            if !matches!(node.op, Op::Leaf) {
                node.grad.iter_mut().for_each(|g| *g = 0.0);
            }
        }
        if !self.nodes[loss.0].needs_grad {
            return Ok(()); // loss does not depend on any parameter
        }
        if matches!(self.nodes[loss.0].op, Op::Leaf) {
            self.nodes[loss.0].grad[0] += 1.0;
            return Ok(());
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let grad = std::mem::take(&mut self.nodes[i].grad);
            self.propagate(i, &grad);
            self.nodes[i].grad = grad;
        }
        Ok(())
    }

    fn add_grad(&mut self, id: NodeId, update: impl Fn(&mut [f64])) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let mut g = std::mem::take(&mut self.nodes[id.0].grad);
        update(&mut g);
        self.nodes[id.0].grad = g;
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // The op is cloned out field-by-field where needed to satisfy the
        // borrow checker without copying large buffers.
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.add_grad(a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                self.add_grad(b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            &Op::Sub(a, b) => {
                self.add_grad(a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                self.add_grad(b, |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            &Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                self.add_grad(a, |ga| {
                    for ((x, y), &bvv) in ga.iter_mut().zip(g).zip(&bv) {
                        *x += y * bvv;
                    }
                });
                self.add_grad(b, |gb| {
                    for ((x, y), &avv) in gb.iter_mut().zip(g).zip(&av) {
                        *x += y * avv;
                    }
                });
            }
            &Op::AddConst(a) => {
                self.add_grad(a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            &Op::MulConst(a, c) => {
                self.add_grad(a, |ga| {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)
                });
            }
            &Op::ScaleBy { scalar, tensor } => {
                let s = self.nodes[scalar.0].value[0];
                let tv = self.nodes[tensor.0].value.clone();
                self.add_grad(scalar, |gs| {
                    gs[0] += g.iter().zip(&tv).map(|(y, t)| y * t).sum::<f64>();
                });
                self.add_grad(tensor, |gt| {
                    gt.iter_mut().zip(g).for_each(|(x, y)| *x += s * y)
                });
            }
            &Op::Sigmoid(a) => {
                let yv = self.nodes[i].value.clone();
                self.add_grad(a, |ga| {
                    for ((x, y), &out) in ga.iter_mut().zip(g).zip(&yv) {
                        *x += y * out * (1.0 - out);
                    }
                });
            }
            &Op::Relu(a) => {
                let yv = self.nodes[i].value.clone();
                self.add_grad(a, |ga| {
                    for ((x, y), &out) in ga.iter_mut().zip(g).zip(&yv) {
                        if out > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            &Op::SoftmaxLast(a) => {
                let yv = self.nodes[i].value.clone();
                let last = *self.nodes[i].shape.last().unwrap();
                self.add_grad(a, |ga| {
                    for r in 0..yv.len() / last {
                        let y = &yv[r * last..(r + 1) * last];
                        let go = &g[r * last..(r + 1) * last];
                        let dot: f64 = y.iter().zip(go).map(|(yi, gi)| yi * gi).sum();
                        for c in 0..last {
                            ga[r * last + c] += y[c] * (go[c] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let mean = mean.clone();
                let inv_std = inv_std.clone();
                let xv = self.nodes[x.0].value.clone();
                let gv = self.nodes[gain.0].value.clone();
                let last = *self.nodes[i].shape.last().unwrap();
                let rows = xv.len() / last;
                self.add_grad(gain, |gg| {
                    for r in 0..rows {
                        for c in 0..last {
                            let xh = (xv[r * last + c] - mean[r]) * inv_std[r];
                            gg[c] += g[r * last + c] * xh;
                        }
                    }
                });
                self.add_grad(bias, |gb| {
                    for r in 0..rows {
                        for c in 0..last {
                            gb[c] += g[r * last + c];
                        }
                    }
                });
                self.add_grad(x, |gx| {
                    for r in 0..rows {
                        let inv = inv_std[r];
                        let mut sum_gh = 0.0;
                        let mut sum_gh_xh = 0.0;
                        for c in 0..last {
                            let gh = g[r * last + c] * gv[c];
                            let xh = (xv[r * last + c] - mean[r]) * inv;
                            sum_gh += gh;
                            sum_gh_xh += gh * xh;
                        }
                        let nf = last as f64;
                        for c in 0..last {
                            let gh = g[r * last + c] * gv[c];
                            let xh = (xv[r * last + c] - mean[r]) * inv;
                            gx[r * last + c] +=
                                inv * (gh - sum_gh / nf - xh * sum_gh_xh / nf);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                self.add_grad(x, |gx| {
                    for ((o, y), m) in gx.iter_mut().zip(g).zip(&mask) {
                        *o += y * m;
                    }
                });
            }
            &Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                // ga += g · bᵀ ; gb += aᵀ · g
                self.add_grad(a, |ga| {
                    gemm_rowmajor(m, n, k, g, n as isize, 1, &bv, 1, n as isize, 1.0, ga);
                });
                self.add_grad(b, |gb| {
                    gemm_rowmajor(k, m, n, &av, 1, k as isize, g, n as isize, 1, 1.0, gb);
                });
            }
            &Op::BatchMatMul(a, b) => {
                let (batch, m, k) = (
                    self.nodes[a.0].shape[0],
                    self.nodes[a.0].shape[1],
                    self.nodes[a.0].shape[2],
                );
                let n = self.nodes[b.0].shape[2];
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                self.add_grad(a, |ga| {
                    for s in 0..batch {
                        gemm_rowmajor(
                            m,
                            n,
                            k,
                            &g[s * m * n..(s + 1) * m * n],
                            n as isize,
                            1,
                            &bv[s * k * n..(s + 1) * k * n],
                            1,
                            n as isize,
                            1.0,
                            &mut ga[s * m * k..(s + 1) * m * k],
                        );
                    }
                });
                self.add_grad(b, |gb| {
                    for s in 0..batch {
                        gemm_rowmajor(
                            k,
                            m,
                            n,
                            &av[s * m * k..(s + 1) * m * k],
                            1,
                            k as isize,
                            &g[s * m * n..(s + 1) * m * n],
                            n as isize,
                            1,
                            1.0,
                            &mut gb[s * k * n..(s + 1) * k * n],
                        );
                    }
                });
            }
            &Op::Reshape(a) => {
                self.add_grad(a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            &Op::SwapAxes01(a) => {
                let out_shape = self.nodes[i].shape.clone();
                let inner = if out_shape.len() == 3 { out_shape[2] } else { 1 };
                let back = swap01(g, out_shape[0], out_shape[1], inner);
                self.add_grad(a, |ga| {
                    ga.iter_mut().zip(&back).for_each(|(x, y)| *x += y)
                });
            }
            &Op::SwapAxes12(a) => {
                let out_shape = self.nodes[i].shape.clone();
                let back = swap12(g, out_shape[0], out_shape[1], out_shape[2]);
                self.add_grad(a, |ga| {
                    ga.iter_mut().zip(&back).for_each(|(x, y)| *x += y)
                });
            }
            &Op::ConcatLast(a, b) => {
                let la = *self.nodes[a.0].shape.last().unwrap();
                let lb = *self.nodes[b.0].shape.last().unwrap();
                let rows = self.nodes[a.0].value.len() / la;
                self.add_grad(a, |ga| {
                    for r in 0..rows {
                        for c in 0..la {
                            ga[r * la + c] += g[r * (la + lb) + c];
                        }
                    }
                });
                self.add_grad(b, |gb| {
                    for r in 0..rows {
                        for c in 0..lb {
                            gb[r * lb + c] += g[r * (la + lb) + la + c];
                        }
                    }
                });
            }
            &Op::BroadcastTo(a) => {
                let target = self.nodes[i].shape.clone();
                let src_shape = padded_shape(&self.nodes[a.0].shape, target.len());
                self.add_grad(a, |ga| {
                    broadcast_reduce(g, &src_shape, &target, ga);
                });
            }
            Op::Gather { x, indices } => {
                let x = *x;
                let indices = indices.clone();
                self.add_grad(x, |gx| {
                    for (j, &idx) in indices.iter().enumerate() {
                        gx[idx] += g[j];
                    }
                });
            }
            &Op::Ewma { obs, alphas } => {
                let (n, m) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                let hv = self.nodes[i].value.clone();
                let ov = self.nodes[obs.0].value.clone();
                let al = self.nodes[alphas.0].value.clone();
                // Reverse the recursion: carry (1 - alpha_{j+1}) * G_{j+1}
                // down the column, where G_j is the total gradient into H_j.
                let mut g_obs = vec![0.0; n * m];
                let mut g_al = vec![0.0; m];
                let mut carry = vec![0.0; n];
                for j in (0..m).rev() {
                    for (idx, c) in carry.iter_mut().enumerate() {
                        let total = g[idx * m + j] + *c;
                        let prev = if j == 0 { 0.0 } else { hv[idx * m + j - 1] };
                        g_obs[idx * m + j] = al[j] * total;
                        g_al[j] += total * (ov[idx * m + j] - prev);
                        *c = (1.0 - al[j]) * total;
                    }
                }
                self.add_grad(obs, |go| {
                    go.iter_mut().zip(&g_obs).for_each(|(x, y)| *x += y)
                });
                self.add_grad(alphas, |ga| {
                    ga.iter_mut().zip(&g_al).for_each(|(x, y)| *x += y)
                });
            }
            &Op::Sum(a) => {
                let y = g[0];
                self.add_grad(a, |ga| ga.iter_mut().for_each(|x| *x += y));
            }
        }
    }
}

/// Row-major GEMM: c = alpha·a·b + beta·c with explicit strides, so the
/// backward transposes are stride tricks rather than copies.
#[allow(clippy::too_many_arguments)]
fn gemm_rowmajor(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn swap01(v: &[f64], d0: usize, d1: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..d0 {
        for j in 0..d1 {
            let src = (i * d1 + j) * inner;
            let dst = (j * d0 + i) * inner;
            out[dst..dst + inner].copy_from_slice(&v[src..src + inner]);
        }
    }
    out
}

fn swap12(v: &[f64], d0: usize, d1: usize, d2: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for s in 0..d0 {
        for i in 0..d1 {
            for j in 0..d2 {
                out[s * d1 * d2 + j * d1 + i] = v[s * d1 * d2 + i * d2 + j];
            }
        }
    }
    out
}

fn padded_shape(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut out = vec![1; rank];
    out[rank - shape.len()..].copy_from_slice(shape);
    out
}

fn validate_broadcast(from: &[usize], to: &[usize]) -> Result<(), TensorError> {
    if from.len() > to.len() {
        return Err(TensorError::BadBroadcast {
            from: from.to_vec(),
            to: to.to_vec(),
        });
    }
    let padded = padded_shape(from, to.len());
    for (s, t) in padded.iter().zip(to) {
        if *s != *t && *s != 1 {
            return Err(TensorError::BadBroadcast {
                from: from.to_vec(),
                to: to.to_vec(),
            });
        }
    }
    Ok(())
}

fn broadcast_copy(src: &[f64], src_shape: &[usize], target: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; numel(target)];
    let src_strides = row_major_strides(src_shape);
    for (flat, o) in out.iter_mut().enumerate() {
        *o = src[source_index(flat, target, src_shape, &src_strides)];
    }
    out
}

fn broadcast_reduce(g: &[f64], src_shape: &[usize], target: &[usize], out: &mut [f64]) {
    let src_strides = row_major_strides(src_shape);
    for (flat, &gv) in g.iter().enumerate() {
        out[source_index(flat, target, src_shape, &src_strides)] += gv;
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

fn source_index(flat: usize, target: &[usize], src_shape: &[usize], src_strides: &[usize]) -> usize {
    let mut rem = flat;
    let mut idx = 0;
    for d in (0..target.len()).rev() {
        let coord = rem % target[d];
        rem /= target[d];
        if src_shape[d] != 1 {
            idx += coord * src_strides[d];
        }
    }
    idx
}
