//! The accuracy predictor: a single-layer LSTM with layer normalization on
//! each gate's pre-activation block, over learned token embeddings of the
//! cell, finished by a bias-2 sigmoid head. Trained with Adam on observed
//! (cell, accuracy) pairs under a mean-squared-error loss; retrained from
//! scratch on the cumulative set at every search iteration.
//!
//! Everything is written out by hand — forward, backprop through time and
//! the layer-norm backward — and validated against central finite
//! differences by [`gradient_check`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const VOCAB: usize = 9;
pub const HIDDEN: usize = 128;
pub const EMBED: usize = 128;
pub const HEAD_BIAS_INIT: f64 = 2.0;
pub const DEFAULT_LR: f64 = 0.008;
pub const DEFAULT_EPOCHS: usize = 200;
/// Sets larger than this train in sequential chunks of this size.
pub const FULL_BATCH_LIMIT: usize = 512;
const LN_EPS: f64 = 1e-5;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Checkpoint format tag.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("token {token} at position {position} outside the 0..=8 vocabulary")]
    BadToken { position: usize, token: u8 },
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("training set needs at least 2 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("duplicate cell in training set")]
    DuplicateCell,
    #[error("accuracy {value} outside [0, 1]")]
    BadAccuracy { value: f64 },
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
}

const GATES: usize = 4; // input, forget, cell, output — fixed order

/// Cumulative observed (token sequence, accuracy) pairs. Duplicate cells are
/// rejected; re-encounters should reuse the stored evaluation instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSet {
    pairs: Vec<(Vec<u8>, f64)>,
}

impl TrainSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tokens: Vec<u8>, accuracy: f64) -> Result<(), SurrogateError> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(SurrogateError::BadAccuracy { value: accuracy });
        }
        check_tokens(&tokens)?;
        if self.pairs.iter().any(|(t, _)| *t == tokens) {
            return Err(SurrogateError::DuplicateCell);
        }
        self.pairs.push((tokens, accuracy));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Vec<u8>, f64)] {
        &self.pairs
    }
}

fn check_tokens(tokens: &[u8]) -> Result<(), SurrogateError> {
    if tokens.is_empty() {
        return Err(SurrogateError::EmptySequence);
    }
    for (position, &token) in tokens.iter().enumerate() {
        if token as usize >= VOCAB {
            return Err(SurrogateError::BadToken { position, token });
        }
    }
    Ok(())
}

/// The regressor state: embeddings, per-gate LSTM weights with layer-norm
/// gain/bias, the sigmoid head, and Adam moments.
///
/// Initialization: embeddings uniform in [0, 1]; weight matrices centered
/// uniform at scale `1 / sqrt(fan_in)`; layer-norm gains 1, biases 0; head
/// bias 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub seed: u64,
    embed: Vec<f64>,           // VOCAB x EMBED
    wx: [Vec<f64>; GATES],     // each HIDDEN x EMBED
    wh: [Vec<f64>; GATES],     // each HIDDEN x HIDDEN
    gain: [Vec<f64>; GATES],   // each HIDDEN
    bias: [Vec<f64>; GATES],   // each HIDDEN
    head_w: Vec<f64>,          // HIDDEN
    head_b: f64,
    #[serde(default)]
    adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Gradients for every parameter block, in the fixed block order used by
/// [`SurrogateModel::blocks`].
#[derive(Debug, Clone)]
struct Gradients {
    blocks: Vec<Vec<f64>>,
}

impl SurrogateModel {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = (0..VOCAB * EMBED).map(|_| rng.gen_range(0.0..1.0)).collect();
        let uniform = |rng: &mut ChaCha8Rng, len: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.gen_range(-s..s)).collect()
        };
        let wx = std::array::from_fn(|_| uniform(&mut rng, HIDDEN * EMBED, EMBED));
        let wh = std::array::from_fn(|_| uniform(&mut rng, HIDDEN * HIDDEN, HIDDEN));
        let gain = std::array::from_fn(|_| vec![1.0; HIDDEN]);
        let bias = std::array::from_fn(|_| vec![0.0; HIDDEN]);
        let head_w = uniform(&mut rng, HIDDEN, HIDDEN);
        SurrogateModel {
            seed,
            embed,
            wx,
            wh,
            gain,
            bias,
            head_w,
            head_b: HEAD_BIAS_INIT,
            adam: None,
        }
    }

    /// Parameter blocks in fixed order: embeddings, wx gates, wh gates,
    /// gains, biases, head weights, head bias.
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = vec![self.embed.as_mut_slice()];
        for w in &mut self.wx {
            blocks.push(w.as_mut_slice());
        }
        for w in &mut self.wh {
            blocks.push(w.as_mut_slice());
        }
        for g in &mut self.gain {
            blocks.push(g.as_mut_slice());
        }
        for b in &mut self.bias {
            blocks.push(b.as_mut_slice());
        }
        blocks.push(self.head_w.as_mut_slice());
        blocks.push(std::slice::from_mut(&mut self.head_b));
        blocks
    }

    fn zero_gradients(&self) -> Gradients {
        let mut blocks = vec![vec![0.0; VOCAB * EMBED]];
        for _ in 0..GATES {
            blocks.push(vec![0.0; HIDDEN * EMBED]);
        }
        for _ in 0..GATES {
            blocks.push(vec![0.0; HIDDEN * HIDDEN]);
        }
        for _ in 0..2 * GATES {
            blocks.push(vec![0.0; HIDDEN]);
        }
        blocks.push(vec![0.0; HIDDEN]);
        blocks.push(vec![0.0; 1]);
        Gradients { blocks }
    }

    /// Deterministic forward pass; accepts any sequence length.
    pub fn predict(&self, tokens: &[u8]) -> Result<f64, SurrogateError> {
        check_tokens(tokens)?;
        Ok(self.forward(tokens).output)
    }

    fn forward(&self, tokens: &[u8]) -> Trace {
        let mut h = vec![0.0; HIDDEN];
        let mut c = vec![0.0; HIDDEN];
        let mut steps = Vec::with_capacity(tokens.len());
        for &token in tokens {
            let x = &self.embed[token as usize * EMBED..(token as usize + 1) * EMBED];
            let mut step = StepTrace {
                token,
                h_prev: h.clone(),
                c_prev: c.clone(),
                ..StepTrace::zeroed()
            };
            let mut acts = [[0.0f64; HIDDEN]; GATES];
            for g in 0..GATES {
                let mut z = vec![0.0; HIDDEN];
                matvec_into(&self.wx[g], x, EMBED, &mut z);
                matvec_add(&self.wh[g], &h, HIDDEN, &mut z);
                let (zhat, inv_std) = layer_norm(&z);
                for i in 0..HIDDEN {
                    acts[g][i] = self.gain[g][i] * zhat[i] + self.bias[g][i];
                }
                step.zhat[g] = zhat;
                step.inv_std[g] = inv_std;
            }
            for i in 0..HIDDEN {
                step.gate_i[i] = sigmoid(acts[0][i]);
                step.gate_f[i] = sigmoid(acts[1][i]);
                step.gate_c[i] = acts[2][i].tanh();
                step.gate_o[i] = sigmoid(acts[3][i]);
                c[i] = step.gate_f[i] * step.c_prev[i] + step.gate_i[i] * step.gate_c[i];
                step.c[i] = c[i];
                step.tanh_c[i] = c[i].tanh();
                h[i] = step.gate_o[i] * step.tanh_c[i];
            }
            steps.push(step);
        }
        let logit = dot(&self.head_w, &h) + self.head_b;
        Trace {
            steps,
            h_last: h,
            output: sigmoid(logit),
        }
    }

    /// Accumulates MSE-loss gradients for one sample into `grads`; returns
    /// the sample's squared error.
    fn backward_into(&self, tokens: &[u8], target: f64, grads: &mut Gradients) -> f64 {
        let trace = self.forward(tokens);
        let out = trace.output;
        let loss = (out - target) * (out - target);
        // d(mse)/d(logit) through the output sigmoid
        let dlogit = 2.0 * (out - target) * out * (1.0 - out);

        let mut dh = vec![0.0; HIDDEN];
        for i in 0..HIDDEN {
            grads.blocks[HEAD_W_BLOCK][i] += dlogit * trace.h_last[i];
            dh[i] = dlogit * self.head_w[i];
        }
        grads.blocks[HEAD_B_BLOCK][0] += dlogit;

        let mut dc = vec![0.0; HIDDEN];
        for step in trace.steps.iter().rev() {
            let x_index = step.token as usize * EMBED;
            let mut da = [[0.0f64; HIDDEN]; GATES];
            for i in 0..HIDDEN {
                // h = o * tanh(c)
                let do_ = dh[i] * step.tanh_c[i];
                da[3][i] = do_ * step.gate_o[i] * (1.0 - step.gate_o[i]);
                dc[i] += dh[i] * step.gate_o[i] * (1.0 - step.tanh_c[i] * step.tanh_c[i]);
                // c = f * c_prev + i * c~
                da[1][i] = dc[i] * step.c_prev[i] * step.gate_f[i] * (1.0 - step.gate_f[i]);
                da[0][i] = dc[i] * step.gate_c[i] * step.gate_i[i] * (1.0 - step.gate_i[i]);
                da[2][i] = dc[i] * step.gate_i[i] * (1.0 - step.gate_c[i] * step.gate_c[i]);
            }

            let mut dh_prev = vec![0.0; HIDDEN];
            let mut dx = vec![0.0; EMBED];
            for g in 0..GATES {
                // layer norm backward: a = gain * zhat + bias
                let mut dzhat = vec![0.0; HIDDEN];
                for i in 0..HIDDEN {
                    grads.blocks[GAIN_BLOCK + g][i] += da[g][i] * step.zhat[g][i];
                    grads.blocks[BIAS_BLOCK + g][i] += da[g][i];
                    dzhat[i] = da[g][i] * self.gain[g][i];
                }
                let mean_dzhat = mean(&dzhat);
                let mut mean_dzhat_zhat = 0.0;
                for i in 0..HIDDEN {
                    mean_dzhat_zhat += dzhat[i] * step.zhat[g][i];
                }
                mean_dzhat_zhat /= HIDDEN as f64;
                let mut dz = vec![0.0; HIDDEN];
                for i in 0..HIDDEN {
                    dz[i] = step.inv_std[g]
                        * (dzhat[i] - mean_dzhat - step.zhat[g][i] * mean_dzhat_zhat);
                }
                // z = wx * x + wh * h_prev
                let x = &self.embed[x_index..x_index + EMBED];
                for i in 0..HIDDEN {
                    let dzi = dz[i];
                    if dzi == 0.0 {
                        continue;
                    }
                    let wx_row = &self.wx[g][i * EMBED..(i + 1) * EMBED];
                    let gx_row = &mut grads.blocks[WX_BLOCK + g][i * EMBED..(i + 1) * EMBED];
                    for j in 0..EMBED {
                        gx_row[j] += dzi * x[j];
                        dx[j] += dzi * wx_row[j];
                    }
                    let wh_row = &self.wh[g][i * HIDDEN..(i + 1) * HIDDEN];
                    let gh_row =
                        &mut grads.blocks[WH_BLOCK + g][i * HIDDEN..(i + 1) * HIDDEN];
                    for j in 0..HIDDEN {
                        gh_row[j] += dzi * step.h_prev[j];
                        dh_prev[j] += dzi * wh_row[j];
                    }
                }
            }
            for j in 0..EMBED {
                grads.blocks[EMBED_BLOCK][x_index + j] += dx[j];
            }
            for i in 0..HIDDEN {
                dh[i] = dh_prev[i];
                dc[i] *= step.gate_f[i];
            }
        }
        loss
    }

    fn adam_step(&mut self, grads: &Gradients, lr: f64) {
        if self.adam.is_none() {
            self.adam = Some(AdamState {
                step: 0,
                m: grads.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
                v: grads.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            });
        }
        let mut adam = self.adam.take().unwrap();
        adam.step += 1;
        let t = adam.step as f64;
        let correct1 = 1.0 - ADAM_BETA1.powf(t);
        let correct2 = 1.0 - ADAM_BETA2.powf(t);
        {
            let mut blocks = self.blocks_mut();
            for (b, block) in blocks.iter_mut().enumerate() {
                let g = &grads.blocks[b];
                let m = &mut adam.m[b];
                let v = &mut adam.v[b];
                for i in 0..block.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let mhat = m[i] / correct1;
                    let vhat = v[i] / correct2;
                    block[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
        self.adam = Some(adam);
    }

    /// Trains on the set with Adam, minimizing mean squared error. Full
    /// batch when the set fits [`FULL_BATCH_LIMIT`], otherwise sequential
    /// chunks of `batch` in set order. Returns the per-epoch mean loss.
    pub fn fit(
        &mut self,
        trainset: &TrainSet,
        epochs: usize,
        lr: f64,
        batch: usize,
    ) -> Result<Vec<f64>, SurrogateError> {
        if trainset.len() < 2 {
            return Err(SurrogateError::TooFewPoints {
                got: trainset.len(),
            });
        }
        let n = trainset.len();
        let chunk = if n <= FULL_BATCH_LIMIT { n } else { batch.max(1) };
        let mut log = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut epoch_loss = 0.0;
            let mut start = 0;
            while start < n {
                let end = (start + chunk).min(n);
                let mut grads = self.zero_gradients();
                let mut batch_loss = 0.0;
                for (tokens, target) in &trainset.pairs()[start..end] {
                    batch_loss += self.backward_into(tokens, *target, &mut grads);
                }
                let scale = 1.0 / (end - start) as f64;
                for block in &mut grads.blocks {
                    for g in block.iter_mut() {
                        *g *= scale;
                    }
                }
                epoch_loss += batch_loss;
                self.adam_step(&grads, lr);
                start = end;
            }
            log.push(epoch_loss / n as f64);
        }
        Ok(log)
    }

    /// Serializes a field-tagged, versioned checkpoint.
    pub fn to_checkpoint(&self) -> String {
        #[derive(Serialize)]
        struct Checkpoint<'a> {
            version: u32,
            model: &'a SurrogateModel,
        }
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self,
        })
        .expect("surrogate serialization")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, SurrogateError> {
        #[derive(Deserialize)]
        struct Checkpoint {
            version: u32,
            model: SurrogateModel,
        }
        let parsed: Checkpoint =
            serde_json::from_str(text).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
        if parsed.version != CHECKPOINT_VERSION {
            return Err(SurrogateError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                parsed.version
            )));
        }
        Ok(parsed.model)
    }
}

// parameter block indices for Gradients / blocks_mut
const EMBED_BLOCK: usize = 0;
const WX_BLOCK: usize = 1;
const WH_BLOCK: usize = WX_BLOCK + GATES;
const GAIN_BLOCK: usize = WH_BLOCK + GATES;
const BIAS_BLOCK: usize = GAIN_BLOCK + GATES;
const HEAD_W_BLOCK: usize = BIAS_BLOCK + GATES;
const HEAD_B_BLOCK: usize = HEAD_W_BLOCK + 1;

struct StepTrace {
    token: u8,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    zhat: [Vec<f64>; GATES],
    inv_std: [f64; GATES],
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_c: Vec<f64>,
    gate_o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl StepTrace {
    fn zeroed() -> Self {
        StepTrace {
            token: 0,
            h_prev: vec![],
            c_prev: vec![],
            zhat: std::array::from_fn(|_| vec![]),
            inv_std: [0.0; GATES],
            gate_i: vec![0.0; HIDDEN],
            gate_f: vec![0.0; HIDDEN],
            gate_c: vec![0.0; HIDDEN],
            gate_o: vec![0.0; HIDDEN],
            c: vec![0.0; HIDDEN],
            tanh_c: vec![0.0; HIDDEN],
        }
    }
}

struct Trace {
    steps: Vec<StepTrace>,
    h_last: Vec<f64>,
    output: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Normalizes to zero mean / unit variance; returns (zhat, 1/std).
fn layer_norm(z: &[f64]) -> (Vec<f64>, f64) {
    let mu = mean(z);
    let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / z.len() as f64;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    (z.iter().map(|v| (v - mu) * inv_std).collect(), inv_std)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec_into(matrix: &[f64], x: &[f64], cols: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&matrix[i * cols..(i + 1) * cols], x);
    }
}

fn matvec_add(matrix: &[f64], x: &[f64], cols: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&matrix[i * cols..(i + 1) * cols], x);
    }
}

/// Central finite differences (step 1e-4) over every parameter block against
/// the analytic gradients of the MSE loss on one sample. Returns the maximum
/// relative error, with the same near-zero floor as the kernel checker.
pub fn gradient_check(model: &mut SurrogateModel, tokens: &[u8], target: f64) -> f64 {
    const STEP: f64 = 1e-4;
    let mut grads = model.zero_gradients();
    model.backward_into(tokens, target, &mut grads);

    let mut max_err: f64 = 0.0;
    let block_count = grads.blocks.len();
    for b in 0..block_count {
        for i in 0..grads.blocks[b].len() {
            {
                let mut blocks = model.blocks_mut();
                blocks[b][i] += STEP;
            }
            let up = {
                let t = model.forward(tokens);
                (t.output - target) * (t.output - target)
            };
            {
                let mut blocks = model.blocks_mut();
                blocks[b][i] -= 2.0 * STEP;
            }
            let down = {
                let t = model.forward(tokens);
                (t.output - target) * (t.output - target)
            };
            {
                let mut blocks = model.blocks_mut();
                blocks[b][i] += STEP;
            }
            let numeric = (up - down) / (2.0 * STEP);
            let err = crate::kernels::fdcheck::relative_error(grads.blocks[b][i], numeric);
            max_err = max_err.max(err);
        }
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_model_outputs_near_sigmoid_of_two() {
        let model = SurrogateModel::new(0);
        for tokens in [vec![0u8, 3], vec![1, 8, 2], vec![2, 4, 0, 6]] {
            let out = model.predict(&tokens).unwrap();
            assert!((0.5..=0.99).contains(&out), "untrained output {out}");
            assert!((out - 0.881).abs() < 0.12);
        }
    }

    #[test]
    fn predict_is_deterministic_and_length_agnostic() {
        let model = SurrogateModel::new(3);
        let a = model.predict(&[0, 3]).unwrap();
        let b = model.predict(&[0, 3]).unwrap();
        assert_eq!(a, b);
        // one model handles length 2 and length 4
        model.predict(&[0, 4, 1, 7]).unwrap();
    }

    #[test]
    fn predict_rejects_bad_tokens() {
        let model = SurrogateModel::new(0);
        assert_eq!(
            model.predict(&[0, 9]),
            Err(SurrogateError::BadToken {
                position: 1,
                token: 9
            })
        );
        assert_eq!(model.predict(&[]), Err(SurrogateError::EmptySequence));
    }

    #[test]
    fn trainset_rejects_duplicates_and_bad_targets() {
        let mut set = TrainSet::new();
        set.insert(vec![0, 3], 0.5).unwrap();
        assert_eq!(
            set.insert(vec![0, 3], 0.6),
            Err(SurrogateError::DuplicateCell)
        );
        assert!(matches!(
            set.insert(vec![0, 4], 1.5),
            Err(SurrogateError::BadAccuracy { .. })
        ));
    }

    #[test]
    fn fit_requires_two_points() {
        let mut model = SurrogateModel::new(0);
        let mut set = TrainSet::new();
        set.insert(vec![0, 3], 0.5).unwrap();
        assert!(matches!(
            model.fit(&set, 1, DEFAULT_LR, 64),
            Err(SurrogateError::TooFewPoints { got: 1 })
        ));
    }

    #[test]
    fn zero_learning_rate_leaves_loss_unchanged() {
        let mut model = SurrogateModel::new(1);
        let mut set = TrainSet::new();
        set.insert(vec![0, 3], 0.4).unwrap();
        set.insert(vec![1, 4], 0.8).unwrap();
        let log = model.fit(&set, 5, 0.0, 64).unwrap();
        for loss in &log[1..] {
            assert_eq!(*loss, log[0]);
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let mut model = SurrogateModel::new(2);
        let mut set = TrainSet::new();
        // eight distinct cells, all with accuracy 0.7
        for tokens in [
            vec![0u8, 3],
            vec![0, 4],
            vec![1, 5],
            vec![1, 6],
            vec![2, 7],
            vec![2, 8],
            vec![0, 5, 1],
            vec![1, 3, 2],
        ] {
            set.insert(tokens, 0.7).unwrap();
        }
        model.fit(&set, DEFAULT_EPOCHS, DEFAULT_LR, 64).unwrap();
        for (tokens, _) in set.pairs() {
            let out = model.predict(tokens).unwrap();
            assert!((out - 0.7).abs() <= 0.02, "prediction {out} not near 0.7");
        }
    }

    #[test]
    fn training_is_invariant_to_set_order() {
        let pairs = [
            (vec![0u8, 3], 0.61),
            (vec![0, 4], 0.72),
            (vec![1, 5], 0.55),
            (vec![2, 8], 0.64),
            (vec![1, 6, 0], 0.69),
        ];
        let mut forward_set = TrainSet::new();
        for (t, a) in pairs.iter() {
            forward_set.insert(t.clone(), *a).unwrap();
        }
        let mut reverse_set = TrainSet::new();
        for (t, a) in pairs.iter().rev() {
            reverse_set.insert(t.clone(), *a).unwrap();
        }
        let mut m1 = SurrogateModel::new(9);
        let mut m2 = SurrogateModel::new(9);
        m1.fit(&forward_set, 50, DEFAULT_LR, 64).unwrap();
        m2.fit(&reverse_set, 50, DEFAULT_LR, 64).unwrap();
        for (t, _) in pairs.iter() {
            let a = m1.predict(t).unwrap();
            let b = m2.predict(t).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = SurrogateModel::new(5);
        let err = gradient_check(&mut model, &[0, 4, 2], 0.63);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn zeroed_embeddings_still_give_finite_gradients() {
        let mut model = SurrogateModel::new(6);
        model.embed.iter_mut().for_each(|v| *v = 0.0);
        let mut grads = model.zero_gradients();
        let loss = model.backward_into(&[0, 3, 1], 0.5, &mut grads);
        assert!(loss.is_finite());
        for block in &grads.blocks {
            assert!(block.iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn zero_gains_pass_gradient_check() {
        let mut model = SurrogateModel::new(7);
        for g in &mut model.gain {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let err = gradient_check(&mut model, &[1, 7], 0.4);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn checkpoint_round_trips() {
        let mut model = SurrogateModel::new(11);
        let mut set = TrainSet::new();
        set.insert(vec![0, 3], 0.6).unwrap();
        set.insert(vec![1, 4], 0.7).unwrap();
        model.fit(&set, 3, DEFAULT_LR, 64).unwrap();
        let text = model.to_checkpoint();
        let restored = SurrogateModel::from_checkpoint(&text).unwrap();
        assert_eq!(restored.predict(&[0, 3]), model.predict(&[0, 3]));
        assert!(SurrogateModel::from_checkpoint("{\"version\":99}").is_err());
    }
}
