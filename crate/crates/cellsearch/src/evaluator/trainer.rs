//! Desk-scale trainer: builds the macro network out of the reference
//! kernels, trains it with Nesterov SGD (momentum 0.9, initial lr 0.1,
//! per-step cosine decay to zero) and softmax cross-entropy on the generated
//! dataset, then reports test accuracy. Dense learned-group convs train with
//! a group-lasso penalty and condense once at the halfway epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cellspace::CellSpec;
use crate::costmodel::{plan_network, MacroConfig};
use crate::kernels::network::NetInstance;
use crate::kernels::{
    avg_pool2, avg_pool2_backward, concat_channels, global_avg_pool, global_avg_pool_backward,
    split_channels, Mode, OpState, Tensor4,
};

use super::dataset::{make_dataset, Sample, IMAGE_SHAPE};
use super::{EvalError, Evaluation, Evaluator};

pub const INITIAL_LR: f64 = 0.1;
pub const MOMENTUM: f64 = 0.9;
pub const MAX_BATCH: usize = 256;
pub const LASSO_LAMBDA: f64 = 1e-5;

/// Per-epoch mean training loss, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

/// The opt-in real evaluator. Slow next to the oracle but still desk-scale;
/// expects a small macro config such as [`MacroConfig::desk`].
#[derive(Debug, Clone)]
pub struct TrainerEvaluator {
    pub epochs: usize,
    pub dataset_seed: u64,
}

impl Default for TrainerEvaluator {
    fn default() -> Self {
        TrainerEvaluator {
            epochs: 10,
            dataset_seed: 0,
        }
    }
}

impl Evaluator for TrainerEvaluator {
    fn evaluate(
        &self,
        cell: &CellSpec,
        macro_cfg: &MacroConfig,
        seed: u64,
    ) -> Result<Evaluation, EvalError> {
        let (evaluation, _) = train_and_eval(cell, macro_cfg, self.epochs, self.dataset_seed, seed)?;
        Ok(evaluation)
    }

    fn id(&self) -> &str {
        "trainer"
    }
}

/// Velocity buffers mirroring one op's parameter blocks.
type Velocity = Vec<Vec<f64>>;

fn zero_velocity(op: &mut OpState) -> Velocity {
    op.parameter_blocks_mut()
        .iter()
        .map(|b| vec![0.0; b.len()])
        .collect()
}

/// Nesterov update, applied in place:
/// `v = mu * v + g; w -= lr * (g + mu * v)`.
fn nesterov_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64) {
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = MOMENTUM * *v + g;
        *w -= lr * (g + MOMENTUM * *v);
    }
}

fn update_op(op: &mut OpState, grads: &crate::kernels::OpGradients, vel: &mut Velocity, lr: f64) {
    let grad_blocks: Vec<&[f64]> = [
        grads.grad_weights.as_slice(),
        grads.grad_gamma.as_slice(),
        grads.grad_beta.as_slice(),
    ]
    .into_iter()
    .filter(|b| !b.is_empty())
    .collect();
    let mut blocks = op.parameter_blocks_mut();
    debug_assert_eq!(blocks.len(), grad_blocks.len());
    for ((block, grad), v) in blocks.iter_mut().zip(grad_blocks).zip(vel.iter_mut()) {
        nesterov_step(block, grad, v, lr);
    }
}

struct TrainState {
    net: NetInstance,
    stem_vel: Velocity,
    cell_vel: Vec<Vec<Vec<Velocity>>>, // stage / cell / op
    classifier_vel: Vec<f64>,
}

impl TrainState {
    fn build(net: NetInstance) -> Self {
        let mut net = net;
        let stem_vel = zero_velocity(&mut net.stem);
        let cell_vel = net
            .stages
            .iter_mut()
            .map(|stage| {
                stage
                    .iter_mut()
                    .map(|cell| cell.ops.iter_mut().map(zero_velocity).collect())
                    .collect()
            })
            .collect();
        let classifier_vel = vec![0.0; net.classifier.weights.len()];
        TrainState {
            net,
            stem_vel,
            cell_vel,
            classifier_vel,
        }
    }

    /// Condenses every dense learned-group conv and resets the affected
    /// velocity buffers to the new weight shape.
    fn condense_all(&mut self) {
        for (s, stage) in self.net.stages.iter_mut().enumerate() {
            for (j, cell) in stage.iter_mut().enumerate() {
                for (k, op) in cell.ops.iter_mut().enumerate() {
                    if op.condense().is_ok() {
                        self.cell_vel[s][j][k] = zero_velocity(op);
                    }
                }
            }
        }
    }
}

/// Forward activations kept for the backward sweep.
struct Trace {
    /// Input of every op: [stage][cell][op].
    op_inputs: Vec<Vec<Vec<Tensor4>>>,
    /// Feature tensor leaving each stage (before pooling).
    stage_outputs: Vec<Tensor4>,
    pooled_in: Tensor4,
    pooled: Tensor4,
    logits: Vec<f64>,
}

fn forward_cached(state: &mut TrainState, x: &Tensor4) -> Result<Trace, EvalError> {
    let mut h = state.net.stem.forward(x)?;
    let mut op_inputs = Vec::with_capacity(state.net.stages.len());
    let mut stage_outputs = Vec::new();
    for (s, stage) in state.net.stages.iter_mut().enumerate() {
        if s > 0 {
            h = avg_pool2(&h);
        }
        let mut stage_trace = Vec::with_capacity(stage.len());
        for cell in stage.iter_mut() {
            let mut cell_trace = Vec::with_capacity(cell.ops.len());
            let mut y = h.clone();
            for op in &mut cell.ops {
                cell_trace.push(y.clone());
                y = op.forward(&y)?;
            }
            stage_trace.push(cell_trace);
            h = concat_channels(&h, &y);
        }
        op_inputs.push(stage_trace);
        stage_outputs.push(h.clone());
    }
    let pooled_in = h;
    let pooled = global_avg_pool(&pooled_in);
    let logits = state.net.classifier.forward(&pooled);
    Ok(Trace {
        op_inputs,
        stage_outputs,
        pooled_in,
        pooled,
        logits,
    })
}

/// Mean cross-entropy and the gradient w.r.t. logits (already divided by the
/// batch size).
fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        loss += -(exp[label] / z).ln();
        for c in 0..classes {
            let p = exp[c] / z;
            grad[i * classes + c] = (p - if c == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

fn backward_and_update(
    state: &mut TrainState,
    trace: &Trace,
    grad_logits: &[f64],
    stem_input: &Tensor4,
    lr: f64,
) -> Result<(), EvalError> {
    let (grad_pooled, grad_cls) = state.net.classifier.backward(&trace.pooled, grad_logits);
    nesterov_step(
        &mut state.net.classifier.weights,
        &grad_cls,
        &mut state.classifier_vel,
        lr,
    );
    let (_, _, fh, fw) = trace.pooled_in.dims();
    let mut grad_feature = global_avg_pool_backward(&grad_pooled, fh, fw);

    for s in (0..state.net.stages.len()).rev() {
        let stage = &mut state.net.stages[s];
        for j in (0..stage.len()).rev() {
            let cell = &mut stage[j];
            let prefix_channels = trace.op_inputs[s][j][0].channels();
            let (grad_prev, mut grad_y) = split_channels(&grad_feature, prefix_channels);
            for k in (0..cell.ops.len()).rev() {
                let grads = cell.ops[k].backward(&trace.op_inputs[s][j][k], &grad_y)?;
                let mut grads = grads;
                if !grads.grad_weights.is_empty() {
                    if let Some(lasso) = cell.ops[k].lasso_gradient(LASSO_LAMBDA) {
                        for (g, l) in grads.grad_weights.iter_mut().zip(lasso) {
                            *g += l;
                        }
                    }
                }
                update_op(&mut cell.ops[k], &grads, &mut state.cell_vel[s][j][k], lr);
                grad_y = grads.grad_input;
            }
            grad_feature = grad_prev;
            for (gf, gy) in grad_feature.data_mut().iter_mut().zip(grad_y.data()) {
                *gf += gy;
            }
        }
        if s > 0 {
            let (_, _, ph, pw) = trace.stage_outputs[s - 1].dims();
            grad_feature = avg_pool2_backward(&grad_feature, ph, pw);
        }
    }

    let stem_grads = state.net.stem.backward(stem_input, &grad_feature)?;
    update_op(&mut state.net.stem, &stem_grads, &mut state.stem_vel, lr);
    Ok(())
}

fn batch_tensor(samples: &[&Sample]) -> (Tensor4, Vec<usize>) {
    let (c, h, w) = IMAGE_SHAPE;
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    let mut labels = Vec::with_capacity(samples.len());
    for (image, label) in samples {
        data.extend_from_slice(image);
        labels.push(*label);
    }
    (
        Tensor4::from_vec(data, (samples.len(), c, h, w)),
        labels,
    )
}

/// Trains the assembled network for `epochs` and returns the test-set
/// accuracy plus the per-epoch training-loss log. Deterministic given
/// `(cell, macro, epochs, dataset_seed, seed)`: weight init order and batch
/// order are fixed functions of the seed.
pub fn train_and_eval(
    cell: &CellSpec,
    macro_cfg: &MacroConfig,
    epochs: usize,
    dataset_seed: u64,
    seed: u64,
) -> Result<(Evaluation, TrainLog), EvalError> {
    if epochs == 0 {
        return Err(EvalError::InvalidArgument(
            "epochs must be at least 1".to_string(),
        ));
    }
    let plan = plan_network(macro_cfg, cell)?;
    let dataset = make_dataset(dataset_seed);
    let net = NetInstance::build(&plan, Mode::Train, seed)?;
    let mut state = TrainState::build(net);

    let batch_size = MAX_BATCH.min(dataset.train.len());
    let batches_per_epoch = dataset.train.len() / batch_size;
    let total_steps = (epochs * batches_per_epoch).max(1);
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let condense_epoch = if epochs >= 2 { Some(epochs / 2) } else { None };

    let mut epoch_loss = Vec::with_capacity(epochs);
    let mut step = 0usize;
    for epoch in 0..epochs {
        if condense_epoch == Some(epoch) {
            state.condense_all();
        }
        let mut indices: Vec<usize> = (0..dataset.train.len()).collect();
        indices.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for b in 0..batches_per_epoch {
            let members: Vec<&Sample> = indices[b * batch_size..(b + 1) * batch_size]
                .iter()
                .map(|&i| &dataset.train[i])
                .collect();
            let (x, labels) = batch_tensor(&members);
            let trace = forward_cached(&mut state, &x)?;
            let (loss, grad_logits) =
                softmax_cross_entropy(&trace.logits, &labels, macro_cfg.num_classes);
            if !loss.is_finite() {
                return Err(EvalError::Diverged { epoch });
            }
            loss_sum += loss;
            let lr = 0.5
                * INITIAL_LR
                * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos());
            backward_and_update(&mut state, &trace, &grad_logits, &x, lr)?;
            step += 1;
        }
        epoch_loss.push(loss_sum / batches_per_epoch as f64);
    }

    state.net.set_mode(Mode::Eval);
    let mut correct = 0usize;
    let mut offset = 0;
    while offset < dataset.test.len() {
        let end = (offset + MAX_BATCH).min(dataset.test.len());
        let members: Vec<&Sample> = dataset.test[offset..end].iter().collect();
        let (x, labels) = batch_tensor(&members);
        let logits = state.net.forward_logits(&x)?;
        for (i, &label) in labels.iter().enumerate() {
            let row = &logits[i * macro_cfg.num_classes..(i + 1) * macro_cfg.num_classes];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
        offset = end;
    }
    let accuracy = correct as f64 / dataset.test.len() as f64;

    Ok((
        Evaluation {
            accuracy,
            epochs_used: epochs,
            evaluator_id: "trainer".to_string(),
            seed,
        },
        TrainLog { epoch_loss },
    ))
}
