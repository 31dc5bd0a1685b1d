//! Assembling a full dense network out of op states, following a
//! [`NetworkPlan`]: stem conv, densely concatenated cells per stage, 2x2
//! average pooling between stages, global average pooling and a bias-free
//! linear classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    avg_pool2, concat_channels, global_avg_pool, KernelError, Mode, OpState, Tensor4,
};
use crate::cellspace::LayerOp;
use crate::costmodel::NetworkPlan;

/// Bias-free fully connected layer, weights `[out][in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weights: Vec<f64>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (in_features as f64).sqrt();
        Linear {
            weights: (0..in_features * out_features)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
            in_features,
            out_features,
        }
    }

    /// Input is a pooled `(n, c, 1, 1)` tensor; output is row-major
    /// `(n, out_features)`.
    pub fn forward(&self, x: &Tensor4) -> Vec<f64> {
        let n = x.batch();
        let mut out = vec![0.0; n * self.out_features];
        for ni in 0..n {
            for o in 0..self.out_features {
                let mut acc = 0.0;
                for i in 0..self.in_features {
                    acc += self.weights[o * self.in_features + i] * x.at(ni, i, 0, 0);
                }
                out[ni * self.out_features + o] = acc;
            }
        }
        out
    }

    /// Returns `(grad_x, grad_weights)` for a row-major `(n, out)` gradient.
    pub fn backward(&self, x: &Tensor4, grad_out: &[f64]) -> (Tensor4, Vec<f64>) {
        let n = x.batch();
        let mut grad_x = Tensor4::zeros(x.dims());
        let mut grad_w = vec![0.0; self.weights.len()];
        for ni in 0..n {
            for o in 0..self.out_features {
                let g = grad_out[ni * self.out_features + o];
                for i in 0..self.in_features {
                    grad_w[o * self.in_features + i] += g * x.at(ni, i, 0, 0);
                    *grad_x.at_mut(ni, i, 0, 0) += g * self.weights[o * self.in_features + i];
                }
            }
        }
        (grad_x, grad_w)
    }
}

/// One cell instance: its body ops plus the appended transition, if any.
#[derive(Debug, Clone)]
pub struct CellInstance {
    pub ops: Vec<OpState>,
}

impl CellInstance {
    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4, KernelError> {
        let mut h = x.clone();
        for op in &mut self.ops {
            h = op.forward(&h)?;
        }
        Ok(h)
    }
}

/// A fully instantiated network, weights and all.
#[derive(Debug, Clone)]
pub struct NetInstance {
    pub stem: OpState,
    pub stages: Vec<Vec<CellInstance>>,
    pub classifier: Linear,
    pub num_classes: usize,
}

impl NetInstance {
    /// Deterministic construction: op states are initialized in forward
    /// order from a ChaCha stream seeded with `seed`.
    pub fn build(plan: &NetworkPlan, mode: Mode, seed: u64) -> Result<Self, KernelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, _, c0) = plan.input;
        let stem = OpState::new(
            LayerOp::Conv3x3,
            c0,
            plan.stem_channels,
            1,
            mode,
            &mut rng,
        )?;
        let mut stages = Vec::with_capacity(plan.stages.len());
        for stage in &plan.stages {
            let mut cells = Vec::with_capacity(stage.cells.len());
            for shaped in &stage.cells {
                let ops = shaped
                    .all_layers()
                    .map(|layer| OpState::from_shaped(layer, mode, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?;
                cells.push(CellInstance { ops });
            }
            stages.push(cells);
        }
        let classifier = Linear::new(plan.classifier_in, plan.num_classes, &mut rng);
        Ok(NetInstance {
            stem,
            stages,
            classifier,
            num_classes: plan.num_classes,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.stem.set_mode(mode);
        for stage in &mut self.stages {
            for cell in stage {
                for op in &mut cell.ops {
                    op.set_mode(mode);
                }
            }
        }
    }

    /// Plain forward pass to logits, row-major `(n, num_classes)`.
    pub fn forward_logits(&mut self, x: &Tensor4) -> Result<Vec<f64>, KernelError> {
        let mut h = self.stem.forward(x)?;
        for (s, stage) in self.stages.iter_mut().enumerate() {
            if s > 0 {
                h = avg_pool2(&h);
            }
            for cell in stage {
                let y = cell.forward(&h)?;
                h = concat_channels(&h, &y);
            }
        }
        let pooled = global_avg_pool(&h);
        Ok(self.classifier.forward(&pooled))
    }
}
