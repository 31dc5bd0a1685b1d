//! Batch normalization forward and reverse passes.

use super::tensor::Tensor4;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Learnable affine plus running statistics of one batch-norm instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    /// Per-channel batch statistics over (batch, height, width).
    fn batch_stats(&self, x: &Tensor4) -> (Vec<f64>, Vec<f64>) {
        let (n, c, h, w) = x.dims();
        let m = (n * h * w) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ci in 0..c {
            let mut sum = 0.0;
            for ni in 0..n {
                sum += x.plane(ni, ci).iter().sum::<f64>();
            }
            mean[ci] = sum / m;
            let mut sq = 0.0;
            for ni in 0..n {
                for &v in x.plane(ni, ci) {
                    let d = v - mean[ci];
                    sq += d * d;
                }
            }
            var[ci] = sq / m;
        }
        (mean, var)
    }

    /// Train-mode forward with batch statistics; updates running stats only
    /// when `update_running` is set (the backward pass recomputes the forward
    /// internals and must not double-update).
    pub fn forward_train(&mut self, x: &Tensor4, update_running: bool) -> Tensor4 {
        let (mean, var) = self.batch_stats(x);
        if update_running {
            for ci in 0..mean.len() {
                self.running_mean[ci] =
                    BN_MOMENTUM * self.running_mean[ci] + (1.0 - BN_MOMENTUM) * mean[ci];
                self.running_var[ci] =
                    BN_MOMENTUM * self.running_var[ci] + (1.0 - BN_MOMENTUM) * var[ci];
            }
        }
        self.normalize(x, &mean, &var)
    }

    /// Eval-mode forward with running statistics; never mutates state.
    pub fn forward_eval(&self, x: &Tensor4) -> Tensor4 {
        self.normalize(x, &self.running_mean, &self.running_var)
    }

    fn normalize(&self, x: &Tensor4, mean: &[f64], var: &[f64]) -> Tensor4 {
        let (n, c, _, _) = x.dims();
        let mut out = x.clone();
        for ci in 0..c {
            let inv_std = 1.0 / (var[ci] + BN_EPS).sqrt();
            let g = self.gamma[ci];
            let b = self.beta[ci];
            let mu = mean[ci];
            for ni in 0..n {
                for v in out.plane_mut(ni, ci) {
                    *v = g * (*v - mu) * inv_std + b;
                }
            }
        }
        out
    }

    /// Train-mode backward through the batch statistics. Returns
    /// `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward_train(&self, x: &Tensor4, grad_out: &Tensor4) -> (Tensor4, Vec<f64>, Vec<f64>) {
        let (n, c, h, w) = x.dims();
        let m = (n * h * w) as f64;
        let (mean, var) = self.batch_stats(x);

        let mut grad_gamma = vec![0.0; c];
        let mut grad_beta = vec![0.0; c];
        let mut grad_x = Tensor4::zeros(x.dims());

        for ci in 0..c {
            let inv_std = 1.0 / (var[ci] + BN_EPS).sqrt();
            let mu = mean[ci];

            // accumulate the three reductions the gradient needs
            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for ni in 0..n {
                let xs = x.plane(ni, ci);
                let gs = grad_out.plane(ni, ci);
                for (xv, gv) in xs.iter().zip(gs) {
                    let xhat = (xv - mu) * inv_std;
                    sum_gy += gv;
                    sum_gy_xhat += gv * xhat;
                }
            }
            grad_beta[ci] = sum_gy;
            grad_gamma[ci] = sum_gy_xhat;

            let g = self.gamma[ci];
            let mean_gy = sum_gy / m;
            let mean_gy_xhat = sum_gy_xhat / m;
            for ni in 0..n {
                let xs = x.plane(ni, ci).to_vec();
                let gs = grad_out.plane(ni, ci).to_vec();
                let out = grad_x.plane_mut(ni, ci);
                for k in 0..xs.len() {
                    let xhat = (xs[k] - mu) * inv_std;
                    out[k] = g * inv_std * (gs[k] - mean_gy - xhat * mean_gy_xhat);
                }
            }
        }
        (grad_x, grad_gamma, grad_beta)
    }
}
