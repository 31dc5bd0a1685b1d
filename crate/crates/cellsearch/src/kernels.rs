//! Reference numeric implementations (forward and backward) of all nine
//! layer ops plus channel shuffle, pooling and a bias-free linear head.
//!
//! These kernels are the ground truth the analytic cost model is checked
//! against, the substrate of the tiny trainer and the timed payload of the
//! host latency benchmark. They are deliberately direct-summation loops —
//! correctness and measurable relative timing, not throughput. Each call is
//! single-threaded; distinct [`OpState`]s may run concurrently but one state
//! must not be shared across callers.

pub mod conv;
pub mod fdcheck;
pub mod network;
pub mod norm;
pub mod tensor;

pub use conv::{channel_shuffle, channel_unshuffle};
pub use norm::BatchNorm;
pub use tensor::Tensor4;

use rand::Rng;

use crate::cellspace::LayerOp;
use crate::costmodel::{resolve_groups, ShapedLayer};

/// Instrumented multiply-accumulate counting. Every convolution kernel adds
/// the number of multiply-adds it actually executed to a per-thread counter;
/// [`macs::take`] reads and resets it. Counting is always active — the
/// increment is one integer add per inner row — so enabling it is a matter of
/// reading the counter around the calls of interest.
pub mod macs {
    use std::cell::Cell;

    thread_local! {
        static COUNT: Cell<u64> = const { Cell::new(0) };
    }

    pub(crate) fn record(n: u64) {
        COUNT.with(|c| c.set(c.get() + n));
    }

    /// Reads and resets this thread's counter.
    pub fn take() -> u64 {
        COUNT.with(|c| c.replace(0))
    }

    pub fn current() -> u64 {
        COUNT.with(|c| c.get())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("{op}: expected {expected_channels} input channels, got tensor {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected_channels: usize,
        got: (usize, usize, usize, usize),
    },
    #[error("{op}: invalid channel pair {c_in} -> {c_out}")]
    BadChannels {
        op: &'static str,
        c_in: usize,
        c_out: usize,
    },
    #[error("channel shuffle: {channels} channels not divisible by {groups} groups")]
    ShuffleDivisibility { channels: usize, groups: usize },
    #[error("{op}: backward requires train mode")]
    ModeMismatch { op: &'static str },
    #[error("{op}: condense requires a dense train-mode learned-group conv")]
    NotCondensable { op: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameter storage per op kind. Weight shapes in eval mode match the cost
/// model's counting exactly; the dense train-time form of the learned-group
/// conv is the one deliberate exception (it condenses to the grouped shape).
#[derive(Debug, Clone, PartialEq)]
enum OpParams {
    Identity,
    Norm(BatchNorm),
    /// conv1x1 / conv3x3 / gconv1x1 / gconv3x3 / dwconv3x3 weights,
    /// `[c_out][c_in / groups][k][k]`.
    Conv { weights: Vec<f64>, k: usize },
    /// Train-mode learned-group conv: full `[c_out][c_in]` 1x1 weights.
    LgDense { weights: Vec<f64> },
    /// Condensed learned-group conv: per-group input gather followed by a
    /// 1x1 group conv, `[c_out][c_in / groups]` weights.
    LgCondensed { gather: Vec<usize>, weights: Vec<f64> },
}

/// One op instance with its weights and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct OpState {
    op: LayerOp,
    c_in: usize,
    c_out: usize,
    groups: usize,
    mode: Mode,
    params: OpParams,
}

/// Gradients produced by [`OpState::backward`]. Block layouts match
/// [`OpState::parameter_blocks`].
#[derive(Debug, Clone)]
pub struct OpGradients {
    pub grad_input: Tensor4,
    pub grad_weights: Vec<f64>,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

fn uniform_init<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let scale = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

impl OpState {
    /// Builds an op with freshly initialized weights. `requested_groups` is
    /// clamped exactly like the cost model clamps it; depthwise convs group
    /// by their channel count. Conv weights initialize centered-uniform at
    /// scale `1 / sqrt(fan_in)`.
    pub fn new<R: Rng>(
        op: LayerOp,
        c_in: usize,
        c_out: usize,
        requested_groups: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        if c_in == 0 || c_out == 0 {
            return Err(KernelError::BadChannels {
                op: op.name(),
                c_in,
                c_out,
            });
        }
        let norm_like = op.is_norm();
        if norm_like && c_in != c_out {
            return Err(KernelError::BadChannels {
                op: op.name(),
                c_in,
                c_out,
            });
        }
        if op == LayerOp::Dwconv3x3 && c_in != c_out {
            return Err(KernelError::BadChannels {
                op: op.name(),
                c_in,
                c_out,
            });
        }
        let groups = match op {
            LayerOp::Gconv1x1 | LayerOp::Gconv3x3 | LayerOp::Lgconv1x1 => {
                resolve_groups(c_in, c_out, requested_groups)
            }
            LayerOp::Dwconv3x3 => c_in,
            _ => 1,
        };
        let params = match op {
            LayerOp::Id => OpParams::Identity,
            LayerOp::Bn | LayerOp::BnRelu => OpParams::Norm(BatchNorm::new(c_in)),
            LayerOp::Conv1x1 => OpParams::Conv {
                weights: uniform_init(rng, c_out * c_in, c_in),
                k: 1,
            },
            LayerOp::Conv3x3 => OpParams::Conv {
                weights: uniform_init(rng, c_out * c_in * 9, c_in * 9),
                k: 3,
            },
            LayerOp::Gconv1x1 => OpParams::Conv {
                weights: uniform_init(rng, c_out * (c_in / groups), c_in / groups),
                k: 1,
            },
            LayerOp::Gconv3x3 => OpParams::Conv {
                weights: uniform_init(rng, c_out * (c_in / groups) * 9, (c_in / groups) * 9),
                k: 3,
            },
            LayerOp::Dwconv3x3 => OpParams::Conv {
                weights: uniform_init(rng, c_out * 9, 9),
                k: 3,
            },
            LayerOp::Lgconv1x1 => match mode {
                Mode::Train => OpParams::LgDense {
                    weights: uniform_init(rng, c_out * c_in, c_in),
                },
                // identity selection until a trainer condenses it
                Mode::Eval => OpParams::LgCondensed {
                    gather: (0..c_in).collect(),
                    weights: uniform_init(rng, c_out * (c_in / groups), c_in / groups),
                },
            },
        };
        Ok(OpState {
            op,
            c_in,
            c_out,
            groups,
            mode,
            params,
        })
    }

    pub fn from_shaped<R: Rng>(
        layer: &ShapedLayer,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        Self::new(layer.op, layer.c_in, layer.c_out, layer.groups, mode, rng)
    }

    pub fn op(&self) -> LayerOp {
        self.op
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Direct access to conv weights (dense or condensed), when present.
    pub fn conv_weights(&self) -> Option<&[f64]> {
        match &self.params {
            OpParams::Conv { weights, .. }
            | OpParams::LgDense { weights }
            | OpParams::LgCondensed { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn conv_weights_mut(&mut self) -> Option<&mut [f64]> {
        match &mut self.params {
            OpParams::Conv { weights, .. }
            | OpParams::LgDense { weights }
            | OpParams::LgCondensed { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Trainable parameter blocks in a fixed order (conv weights, then BN
    /// gamma, then BN beta). Gradient blocks in [`OpGradients`] line up.
    pub fn parameter_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.params {
            OpParams::Identity => vec![],
            OpParams::Norm(bn) => vec![bn.gamma.as_mut_slice(), bn.beta.as_mut_slice()],
            OpParams::Conv { weights, .. }
            | OpParams::LgDense { weights }
            | OpParams::LgCondensed { weights, .. } => vec![weights.as_mut_slice()],
        }
    }

    pub fn batch_norm(&self) -> Option<&BatchNorm> {
        match &self.params {
            OpParams::Norm(bn) => Some(bn),
            _ => None,
        }
    }

    pub fn batch_norm_mut(&mut self) -> Option<&mut BatchNorm> {
        match &mut self.params {
            OpParams::Norm(bn) => Some(bn),
            _ => None,
        }
    }

    /// Gather indices of a condensed learned-group conv.
    pub fn lg_gather(&self) -> Option<&[usize]> {
        match &self.params {
            OpParams::LgCondensed { gather, .. } => Some(gather),
            _ => None,
        }
    }

    fn check_input(&self, x: &Tensor4) -> Result<(), KernelError> {
        if x.channels() != self.c_in {
            return Err(KernelError::ShapeMismatch {
                op: self.op.name(),
                expected_channels: self.c_in,
                got: x.dims(),
            });
        }
        Ok(())
    }

    /// Whether this op's output passes through a channel shuffle. Group convs
    /// are implicitly followed by channel shuffle; with a single effective
    /// group the shuffle is the identity and is skipped. The depthwise conv's
    /// fully-grouped shuffle is also the identity.
    fn shuffles(&self) -> bool {
        matches!(
            self.op,
            LayerOp::Gconv1x1 | LayerOp::Gconv3x3 | LayerOp::Lgconv1x1
        ) && self.groups > 1
    }

    /// Forward pass. Mutates state only through batch-norm running statistics
    /// in train mode; eval-mode forwards never mutate.
    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4, KernelError> {
        self.check_input(x)?;
        let shuffles = self.shuffles();
        let groups = self.groups;
        let c_out = self.c_out;
        let mode = self.mode;
        let out = match &mut self.params {
            OpParams::Identity => x.clone(),
            OpParams::Norm(bn) => {
                let y = match mode {
                    Mode::Train => bn.forward_train(x, true),
                    Mode::Eval => bn.forward_eval(x),
                };
                if self.op == LayerOp::BnRelu {
                    relu(y)
                } else {
                    y
                }
            }
            OpParams::Conv { weights, k } => {
                let y = if groups == 1 {
                    conv::conv2d(x, weights, c_out, *k)
                } else {
                    conv::conv2d_grouped(x, weights, c_out, *k, groups)
                };
                if shuffles {
                    channel_shuffle(&y, groups)?
                } else {
                    y
                }
            }
            OpParams::LgDense { weights } => conv::conv2d(x, weights, c_out, 1),
            OpParams::LgCondensed { gather, weights } => {
                let gathered = conv::gather_channels(x, gather);
                let y = if groups == 1 {
                    conv::conv2d(&gathered, weights, c_out, 1)
                } else {
                    conv::conv2d_grouped(&gathered, weights, c_out, 1, groups)
                };
                if shuffles {
                    channel_shuffle(&y, groups)?
                } else {
                    y
                }
            }
        };
        Ok(out)
    }

    /// Exact reverse-mode gradients of [`OpState::forward`] in train mode.
    /// Recomputes forward internals from `x`; never updates running stats.
    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<OpGradients, KernelError> {
        if self.mode != Mode::Train {
            return Err(KernelError::ModeMismatch { op: self.op.name() });
        }
        self.check_input(x)?;
        let empty = || Vec::new();
        let gradients = match &self.params {
            OpParams::Identity => OpGradients {
                grad_input: grad_out.clone(),
                grad_weights: empty(),
                grad_gamma: empty(),
                grad_beta: empty(),
            },
            OpParams::Norm(bn) => {
                let grad_out = if self.op == LayerOp::BnRelu {
                    // mask where the pre-activation (bn output) was negative
                    let pre = bn.clone().forward_train(x, false);
                    let mut masked = grad_out.clone();
                    for (g, p) in masked.data_mut().iter_mut().zip(pre.data()) {
                        if *p <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    masked
                } else {
                    grad_out.clone()
                };
                let (grad_input, grad_gamma, grad_beta) = bn.backward_train(x, &grad_out);
                OpGradients {
                    grad_input,
                    grad_weights: empty(),
                    grad_gamma,
                    grad_beta,
                }
            }
            OpParams::Conv { weights, k } => {
                let go = if self.shuffles() {
                    channel_unshuffle(grad_out, self.groups)?
                } else {
                    grad_out.clone()
                };
                let (grad_input, grad_weights) =
                    conv::conv2d_grouped_backward(x, weights, &go, self.c_out, *k, self.groups);
                OpGradients {
                    grad_input,
                    grad_weights,
                    grad_gamma: empty(),
                    grad_beta: empty(),
                }
            }
            OpParams::LgDense { weights } => {
                let (grad_input, grad_weights) =
                    conv::conv2d_grouped_backward(x, weights, grad_out, self.c_out, 1, 1);
                OpGradients {
                    grad_input,
                    grad_weights,
                    grad_gamma: empty(),
                    grad_beta: empty(),
                }
            }
            OpParams::LgCondensed { gather, weights } => {
                let go = if self.shuffles() {
                    channel_unshuffle(grad_out, self.groups)?
                } else {
                    grad_out.clone()
                };
                let gathered = conv::gather_channels(x, gather);
                let (grad_gathered, grad_weights) = conv::conv2d_grouped_backward(
                    &gathered,
                    weights,
                    &go,
                    self.c_out,
                    1,
                    self.groups,
                );
                OpGradients {
                    grad_input: conv::scatter_add_channels(&grad_gathered, gather, self.c_in),
                    grad_weights,
                    grad_gamma: empty(),
                    grad_beta: empty(),
                }
            }
        };
        Ok(gradients)
    }

    /// Group-lasso gradient of a dense learned-group conv: for each output
    /// group and input channel, the column's weights scaled by
    /// `lambda / column_norm`. Zero for anything else.
    pub fn lasso_gradient(&self, lambda: f64) -> Option<Vec<f64>> {
        let OpParams::LgDense { weights } = &self.params else {
            return None;
        };
        let out_pg = self.c_out / self.groups;
        let mut grad = vec![0.0; weights.len()];
        for g in 0..self.groups {
            for j in 0..self.c_in {
                let mut norm_sq = 0.0;
                for og in 0..out_pg {
                    let v = weights[(g * out_pg + og) * self.c_in + j];
                    norm_sq += v * v;
                }
                let norm = norm_sq.sqrt();
                if norm > 1e-12 {
                    for og in 0..out_pg {
                        let idx = (g * out_pg + og) * self.c_in + j;
                        grad[idx] = lambda * weights[idx] / norm;
                    }
                }
            }
        }
        Some(grad)
    }

    /// Condenses a dense learned-group conv: per output group, keeps the
    /// `c_in / groups` input channels with the largest column norms (ties to
    /// the lower channel index) and switches to the gather-then-group-conv
    /// form. Training may continue on the condensed weights.
    pub fn condense(&mut self) -> Result<(), KernelError> {
        let OpParams::LgDense { weights } = &self.params else {
            return Err(KernelError::NotCondensable { op: self.op.name() });
        };
        let out_pg = self.c_out / self.groups;
        let in_pg = self.c_in / self.groups;
        let mut gather = Vec::with_capacity(self.groups * in_pg);
        let mut condensed = vec![0.0; self.c_out * in_pg];
        for g in 0..self.groups {
            let mut norms: Vec<(usize, f64)> = (0..self.c_in)
                .map(|j| {
                    let mut s = 0.0;
                    for og in 0..out_pg {
                        let v = weights[(g * out_pg + og) * self.c_in + j];
                        s += v * v;
                    }
                    (j, s)
                })
                .collect();
            norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut selected: Vec<usize> = norms[..in_pg].iter().map(|&(j, _)| j).collect();
            selected.sort_unstable();
            for (slot, &j) in selected.iter().enumerate() {
                for og in 0..out_pg {
                    condensed[(g * out_pg + og) * in_pg + slot] =
                        weights[(g * out_pg + og) * self.c_in + j];
                }
            }
            gather.extend_from_slice(&selected);
        }
        self.params = OpParams::LgCondensed {
            gather,
            weights: condensed,
        };
        Ok(())
    }
}

fn relu(mut x: Tensor4) -> Tensor4 {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    x
}

/// 2x2 average pooling, stride 2, floor semantics on odd extents.
pub fn avg_pool2(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..oh {
                for xw in 0..ow {
                    let s = x.at(ni, ci, 2 * y, 2 * xw)
                        + x.at(ni, ci, 2 * y, 2 * xw + 1)
                        + x.at(ni, ci, 2 * y + 1, 2 * xw)
                        + x.at(ni, ci, 2 * y + 1, 2 * xw + 1);
                    *out.at_mut(ni, ci, y, xw) = s * 0.25;
                }
            }
        }
    }
    out
}

/// Gradient of [`avg_pool2`] back to the input shape.
pub fn avg_pool2_backward(grad_out: &Tensor4, in_h: usize, in_w: usize) -> Tensor4 {
    let (n, c, oh, ow) = grad_out.dims();
    let mut grad = Tensor4::zeros((n, c, in_h, in_w));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..oh {
                for xw in 0..ow {
                    let g = grad_out.at(ni, ci, y, xw) * 0.25;
                    *grad.at_mut(ni, ci, 2 * y, 2 * xw) += g;
                    *grad.at_mut(ni, ci, 2 * y, 2 * xw + 1) += g;
                    *grad.at_mut(ni, ci, 2 * y + 1, 2 * xw) += g;
                    *grad.at_mut(ni, ci, 2 * y + 1, 2 * xw + 1) += g;
                }
            }
        }
    }
    grad
}

/// Global average pooling to a `(n, c, 1, 1)` tensor.
pub fn global_avg_pool(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.dims();
    let scale = 1.0 / (h * w) as f64;
    let mut out = Tensor4::zeros((n, c, 1, 1));
    for ni in 0..n {
        for ci in 0..c {
            *out.at_mut(ni, ci, 0, 0) = x.plane(ni, ci).iter().sum::<f64>() * scale;
        }
    }
    out
}

pub fn global_avg_pool_backward(grad_out: &Tensor4, in_h: usize, in_w: usize) -> Tensor4 {
    let (n, c, _, _) = grad_out.dims();
    let scale = 1.0 / (in_h * in_w) as f64;
    let mut grad = Tensor4::zeros((n, c, in_h, in_w));
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.at(ni, ci, 0, 0) * scale;
            for v in grad.plane_mut(ni, ci) {
                *v = g;
            }
        }
    }
    grad
}

/// Concatenates along the channel axis.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    let (n, ca, h, w) = a.dims();
    let (nb, cb, hb, wb) = b.dims();
    assert_eq!((n, h, w), (nb, hb, wb), "concat shape mismatch");
    let mut out = Tensor4::zeros((n, ca + cb, h, w));
    for ni in 0..n {
        for ci in 0..ca {
            out.plane_mut(ni, ci).copy_from_slice(a.plane(ni, ci));
        }
        for ci in 0..cb {
            out.plane_mut(ni, ca + ci).copy_from_slice(b.plane(ni, ci));
        }
    }
    out
}

/// Splits the gradient of a channel concatenation back into the two parts.
pub fn split_channels(grad: &Tensor4, ca: usize) -> (Tensor4, Tensor4) {
    let (n, c, h, w) = grad.dims();
    let cb = c - ca;
    let mut a = Tensor4::zeros((n, ca, h, w));
    let mut b = Tensor4::zeros((n, cb, h, w));
    for ni in 0..n {
        for ci in 0..ca {
            a.plane_mut(ni, ci).copy_from_slice(grad.plane(ni, ci));
        }
        for ci in 0..cb {
            b.plane_mut(ni, ci).copy_from_slice(grad.plane(ni, ca + ci));
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::op_macs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn op(op: LayerOp, c_in: usize, c_out: usize, g: usize, mode: Mode, seed: u64) -> OpState {
        OpState::new(op, c_in, c_out, g, mode, &mut rng(seed)).unwrap()
    }

    #[test]
    fn identity_passes_input_through_bitwise() {
        let x = Tensor4::random(&mut rng(1), (2, 4, 5, 5));
        let mut id = op(LayerOp::Id, 4, 4, 1, Mode::Eval, 0);
        assert_eq!(id.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_is_deterministic() {
        let x = Tensor4::random(&mut rng(2), (2, 4, 6, 6));
        let mut c = op(LayerOp::Conv3x3, 4, 3, 1, Mode::Eval, 7);
        let a = c.forward(&x).unwrap();
        let b = c.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grouped_conv_with_one_group_matches_standard_conv() {
        let x = Tensor4::random(&mut rng(3), (2, 4, 6, 6));
        for k in [1usize, 3] {
            let weights: Vec<f64> = rng(4 + k as u64)
                .sample_iter(rand::distributions::Uniform::new(-0.5, 0.5))
                .take(3 * 4 * k * k)
                .collect();
            let standard = conv::conv2d(&x, &weights, 3, k);
            let grouped = conv::conv2d_grouped(&x, &weights, 3, k, 1);
            for (a, b) in standard.data().iter().zip(grouped.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn depthwise_matches_fully_grouped_conv() {
        let x = Tensor4::random(&mut rng(5), (2, 4, 6, 6));
        let mut dw = op(LayerOp::Dwconv3x3, 4, 4, 1, Mode::Eval, 9);
        let weights = dw.conv_weights().unwrap().to_vec();
        // fully grouped conv with one input channel per group shares the
        // depthwise weight layout directly
        let grouped = conv::conv2d_grouped(&x, &weights, 4, 3, 4);
        let out = dw.forward(&x).unwrap();
        for (a, b) in out.data().iter().zip(grouped.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn shuffle_identity_cases() {
        let x = Tensor4::random(&mut rng(6), (1, 8, 2, 2));
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
        assert_eq!(channel_shuffle(&x, 8).unwrap(), x);
        assert!(channel_shuffle(&x, 3).is_err());
    }

    #[test]
    fn shuffle_follows_index_formula() {
        // C=8, g=4: source channel i*4 + j lands at j*2 + i
        let mut x = Tensor4::zeros((1, 8, 1, 1));
        for c in 0..8 {
            *x.at_mut(0, c, 0, 0) = c as f64;
        }
        let y = channel_shuffle(&x, 4).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                assert_eq!(y.at(0, j * 2 + i, 0, 0), (i * 4 + j) as f64);
            }
        }
    }

    #[test]
    fn shuffle_composition_matches_composed_permutation() {
        let c = 8;
        let mut x = Tensor4::zeros((1, c, 1, 1));
        for ci in 0..c {
            *x.at_mut(0, ci, 0, 0) = ci as f64;
        }
        let two_step = channel_shuffle(&channel_shuffle(&x, 4).unwrap(), 2).unwrap();

        // independent composition of the two index maps
        let perm = |g: usize, src: usize| {
            let cpg = c / g;
            let (i, j) = (src / g, src % g);
            j * cpg + i
        };
        let mut expected = Tensor4::zeros((1, c, 1, 1));
        for src in 0..c {
            let dst = perm(2, perm(4, src));
            *expected.at_mut(0, dst, 0, 0) = src as f64;
        }
        assert_eq!(two_step, expected);
    }

    #[test]
    fn unshuffle_inverts_shuffle() {
        let x = Tensor4::random(&mut rng(7), (2, 12, 3, 3));
        for g in [2, 3, 4, 6] {
            let y = channel_unshuffle(&channel_shuffle(&x, g).unwrap(), g).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn shuffle_preserves_value_multiset() {
        let x = Tensor4::random(&mut rng(8), (1, 12, 2, 2));
        let y = channel_shuffle(&x, 3).unwrap();
        let mut a: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_backward_passes_gradient_through() {
        let x = Tensor4::random(&mut rng(9), (2, 4, 3, 3));
        let g = Tensor4::random(&mut rng(10), (2, 4, 3, 3));
        let id = op(LayerOp::Id, 4, 4, 1, Mode::Train, 0);
        let grads = id.backward(&x, &g).unwrap();
        assert_eq!(grads.grad_input, g);
        assert!(grads.grad_weights.is_empty());
    }

    #[test]
    fn backward_rejects_eval_mode() {
        let x = Tensor4::random(&mut rng(11), (1, 4, 3, 3));
        let c = op(LayerOp::Conv1x1, 4, 2, 1, Mode::Eval, 3);
        assert!(matches!(
            c.backward(&x, &Tensor4::zeros((1, 2, 3, 3))),
            Err(KernelError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn forward_rejects_channel_mismatch() {
        let x = Tensor4::random(&mut rng(12), (1, 5, 3, 3));
        let mut c = op(LayerOp::Conv1x1, 4, 2, 1, Mode::Eval, 3);
        assert!(matches!(
            c.forward(&x),
            Err(KernelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn all_ops_pass_finite_difference_gradcheck() {
        let x = Tensor4::random(&mut rng(20), (2, 4, 6, 6));
        let cases = [
            (LayerOp::BnRelu, 4, 1),
            (LayerOp::Bn, 4, 1),
            (LayerOp::Id, 4, 1),
            (LayerOp::Conv1x1, 3, 1),
            (LayerOp::Conv3x3, 3, 1),
            (LayerOp::Gconv1x1, 4, 2),
            (LayerOp::Gconv3x3, 4, 2),
            (LayerOp::Lgconv1x1, 6, 2),
            (LayerOp::Dwconv3x3, 4, 1),
        ];
        for (which, c_out, g) in cases {
            let mut state = op(which, 4, c_out, g, Mode::Train, 21);
            let target = Tensor4::random(&mut rng(22), (2, c_out, 6, 6));
            let err = fdcheck::max_gradient_error(&mut state, &x, &target);
            assert!(err <= 1e-4, "{which}: max relative error {err}");
        }
    }

    #[test]
    fn condensed_learned_group_conv_still_passes_gradcheck() {
        let x = Tensor4::random(&mut rng(23), (2, 4, 6, 6));
        let mut state = op(LayerOp::Lgconv1x1, 4, 6, 2, Mode::Train, 24);
        state.condense().unwrap();
        assert_eq!(state.lg_gather().unwrap().len(), 4);
        let target = Tensor4::random(&mut rng(25), (2, 6, 6, 6));
        let err = fdcheck::max_gradient_error(&mut state, &x, &target);
        assert!(err <= 1e-4, "condensed lgconv: max relative error {err}");
    }

    #[test]
    fn condense_selects_largest_column_norms() {
        let mut state = op(LayerOp::Lgconv1x1, 4, 4, 2, Mode::Train, 30);
        // make columns 1 and 3 dominant for group 0, columns 0 and 2 for group 1
        let w = state.conv_weights_mut().unwrap();
        for v in w.iter_mut() {
            *v = 0.01;
        }
        for oc in 0..2 {
            w[oc * 4 + 1] = 5.0;
            w[oc * 4 + 3] = 4.0;
        }
        for oc in 2..4 {
            w[oc * 4] = 3.0;
            w[oc * 4 + 2] = 2.0;
        }
        state.condense().unwrap();
        assert_eq!(state.lg_gather().unwrap(), &[1, 3, 0, 2]);
    }

    #[test]
    fn relu_blocks_gradient_where_preactivation_negative() {
        let x = Tensor4::random(&mut rng(31), (2, 3, 4, 4));
        let state = op(LayerOp::BnRelu, 3, 3, 1, Mode::Train, 32);
        let bn = state.batch_norm().unwrap().clone();
        let pre = bn.clone().forward_train(&x, false);

        let g1 = Tensor4::random(&mut rng(33), (2, 3, 4, 4));
        let mut g2 = g1.clone();
        for (gv, pv) in g2.data_mut().iter_mut().zip(pre.data()) {
            if *pv <= 0.0 {
                *gv += 17.0; // perturb only masked positions
            }
        }
        let a = state.backward(&x, &g1).unwrap();
        let b = state.backward(&x, &g2).unwrap();
        assert_eq!(a.grad_input, b.grad_input);
        assert_eq!(a.grad_gamma, b.grad_gamma);
    }

    #[test]
    fn eval_forward_never_mutates_state() {
        let x = Tensor4::random(&mut rng(34), (2, 4, 4, 4));
        let mut state = op(LayerOp::BnRelu, 4, 4, 1, Mode::Eval, 35);
        let before = state.clone();
        state.forward(&x).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn train_forward_updates_running_stats() {
        let x = Tensor4::random(&mut rng(36), (2, 4, 4, 4));
        let mut state = op(LayerOp::Bn, 4, 4, 1, Mode::Train, 37);
        let before = state.batch_norm().unwrap().running_mean.clone();
        state.forward(&x).unwrap();
        assert_ne!(state.batch_norm().unwrap().running_mean, before);
    }

    #[test]
    fn instrumented_macs_match_cost_model_on_a_grid() {
        let shapes = [(2usize, 4usize, 6usize, 6usize), (1, 8, 5, 5), (3, 6, 4, 4)];
        for (n, c, h, w) in shapes {
            let x = Tensor4::random(&mut rng(40), (n, c, h, w));
            for which in crate::cellspace::ALL_OPS {
                let c_out = match which {
                    LayerOp::Dwconv3x3 => c,
                    _ if which.is_norm() => c,
                    _ => 2 * c,
                };
                let mut state = op(which, c, c_out, 2, Mode::Eval, 41);
                macs::take();
                state.forward(&x).unwrap();
                let counted = macs::take();
                let expected =
                    n as u64 * op_macs(which, c, c_out, h, w, state.groups()).unwrap();
                assert_eq!(counted, expected, "{which} on {n}x{c}x{h}x{w}");
            }
        }
    }

    #[test]
    fn pooling_and_linear_gradients_match_finite_differences() {
        // avg pool
        let x = Tensor4::random(&mut rng(50), (2, 3, 4, 4));
        let target = Tensor4::random(&mut rng(51), (2, 3, 2, 2));
        let loss = |x: &Tensor4| {
            let y = avg_pool2(x);
            0.5 * y
                .data()
                .iter()
                .zip(target.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let y = avg_pool2(&x);
        let mut go = y.clone();
        for (g, t) in go.data_mut().iter_mut().zip(target.data()) {
            *g -= t;
        }
        let analytic = avg_pool2_backward(&go, 4, 4);
        let mut xp = x.clone();
        for i in 0..xp.data().len() {
            xp.data_mut()[i] += 1e-4;
            let up = loss(&xp);
            xp.data_mut()[i] -= 2e-4;
            let down = loss(&xp);
            xp.data_mut()[i] += 1e-4;
            let numeric = (up - down) / 2e-4;
            assert!(fdcheck::relative_error(analytic.data()[i], numeric) <= 1e-4);
        }

        // global pool + linear head, composed
        let lin = network::Linear::new(3, 2, &mut rng(52));
        let tgt = [0.3, -0.2, 0.1, 0.4];
        let loss2 = |x: &Tensor4| {
            let pooled = global_avg_pool(x);
            let out = lin.forward(&pooled);
            0.5 * out
                .iter()
                .zip(tgt)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let pooled = global_avg_pool(&x);
        let out = lin.forward(&pooled);
        let go2: Vec<f64> = out.iter().zip(tgt).map(|(a, b)| a - b).collect();
        let (grad_pooled, _gw) = lin.backward(&pooled, &go2);
        let analytic2 = global_avg_pool_backward(&grad_pooled, 4, 4);
        let mut xp = x.clone();
        for i in 0..xp.data().len() {
            xp.data_mut()[i] += 1e-4;
            let up = loss2(&xp);
            xp.data_mut()[i] -= 2e-4;
            let down = loss2(&xp);
            xp.data_mut()[i] += 1e-4;
            let numeric = (up - down) / 2e-4;
            assert!(fdcheck::relative_error(analytic2.data()[i], numeric) <= 1e-4);
        }
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor4::random(&mut rng(60), (2, 3, 4, 4));
        let b = Tensor4::random(&mut rng(61), (2, 5, 4, 4));
        let joined = concat_channels(&a, &b);
        assert_eq!(joined.channels(), 8);
        let (sa, sb) = split_channels(&joined, 3);
        assert_eq!(sa, a);
        assert_eq!(sb, b);
    }
}
