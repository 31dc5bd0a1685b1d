//! Device-aware objectives: per-device inference latency (from a loadable
//! synthetic device profile or a real wall-clock measurement on the host)
//! and memory usage.
//!
//! Two profiles ship with the crate: `gpu-like` (cheap MACs, expensive per-op
//! dispatch) and `mobile-like` (expensive MACs — depthwise especially — and
//! cheap dispatch). Their coefficients were tuned until the two latency
//! orderings of the full depth-4 space genuinely disagree, then frozen.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cellspace::{CellSpec, LayerOp, ALL_OPS};
use crate::costmodel::{network_cost, plan_network, CostError, MacroConfig};
use crate::kernels::network::NetInstance;
use crate::kernels::{Mode, Tensor4};

/// Serializes every measured-latency call in the process; profiled latency
/// and memory estimates are pure and run freely in parallel.
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

pub const DEFAULT_REPEATS: usize = 50;
pub const DEFAULT_WARMUP: usize = 10;
const MEASURE_WEIGHT_SEED: u64 = 0x6d656173;
const MEASURE_INPUT_SEED: u64 = 0x696e7075;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("profile {profile}: missing per-op entry for {token}")]
    MissingToken { profile: String, token: String },
    #[error("profile {profile}: negative cost in {field}")]
    NegativeCost { profile: String, field: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("profile parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
}

/// Latency coefficients of one op token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpCost {
    /// Seconds per multiply-accumulate.
    pub cost_per_mac: f64,
    /// Fixed per-instance dispatch cost in seconds.
    pub overhead: f64,
}

/// A simulated device: per-op latency coefficients plus optional hard
/// constraints, loadable from a JSON document with exactly these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    /// Keyed by op token name; must cover all nine tokens.
    pub per_op: BTreeMap<String, OpCost>,
    /// Seconds per element pushed through a batch-norm op.
    pub norm_cost_per_element: f64,
    /// Objective-name -> threshold; direction comes from the objective
    /// schema at use time.
    #[serde(default)]
    pub hard_constraints: Option<BTreeMap<String, f64>>,
    /// Whether runs on this device also optimize the memory objective.
    #[serde(default)]
    pub contributes_memory: bool,
}

impl DeviceProfile {
    pub fn from_json(text: &str) -> Result<Self, DeviceError> {
        let profile: DeviceProfile =
            serde_json::from_str(text).map_err(|e| DeviceError::Parse(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    /// The two profiles bundled with the crate, by name.
    pub fn bundled(name: &str) -> Option<DeviceProfile> {
        let text = match name {
            "gpu-like" => include_str!("../profiles/gpu_like.json"),
            "mobile-like" => include_str!("../profiles/mobile_like.json"),
            _ => return None,
        };
        Some(DeviceProfile::from_json(text).expect("bundled profiles are valid"))
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        for op in ALL_OPS {
            let entry = self.per_op.get(op.name()).ok_or_else(|| {
                DeviceError::MissingToken {
                    profile: self.name.clone(),
                    token: op.name().to_string(),
                }
            })?;
            if entry.cost_per_mac < 0.0 || entry.overhead < 0.0 {
                return Err(DeviceError::NegativeCost {
                    profile: self.name.clone(),
                    field: op.name().to_string(),
                });
            }
        }
        if self.norm_cost_per_element < 0.0 {
            return Err(DeviceError::NegativeCost {
                profile: self.name.clone(),
                field: "norm_cost_per_element".to_string(),
            });
        }
        Ok(())
    }

    fn op_cost(&self, op: LayerOp) -> Result<OpCost, DeviceError> {
        self.per_op
            .get(op.name())
            .copied()
            .ok_or_else(|| DeviceError::MissingToken {
                profile: self.name.clone(),
                token: op.name().to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyMethod {
    Profile,
    Measured,
}

impl LatencyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LatencyMethod::Profile => "profile",
            LatencyMethod::Measured => "measured",
        }
    }
}

/// One latency figure for one cell's assembled network on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub device_name: String,
    pub cell: CellSpec,
    pub seconds: f64,
    pub method: LatencyMethod,
    pub repeats: usize,
    /// Interquartile range of the timed repeats; measured reports only.
    pub iqr_seconds: Option<f64>,
}

/// Deterministic latency under a device profile: the sum over every op
/// instance of the assembled network of `macs * cost_per_mac + overhead`,
/// plus `elements * norm_cost_per_element` for each batch-norm instance.
/// Pooling layers contribute nothing.
pub fn profile_latency(
    profile: &DeviceProfile,
    cell: &CellSpec,
    macro_cfg: &MacroConfig,
) -> Result<LatencyReport, DeviceError> {
    let plan = plan_network(macro_cfg, cell)?;
    let mut seconds = 0.0;
    for instance in plan.op_instances() {
        let cost = profile.op_cost(instance.op)?;
        seconds += instance.macs()? as f64 * cost.cost_per_mac + cost.overhead;
        if matches!(instance.op, LayerOp::Bn | LayerOp::BnRelu) {
            let elements = (instance.c_out * instance.h * instance.w) as f64;
            seconds += elements * profile.norm_cost_per_element;
        }
    }
    Ok(LatencyReport {
        device_name: profile.name.clone(),
        cell: cell.clone(),
        seconds,
        method: LatencyMethod::Profile,
        repeats: 1,
        iqr_seconds: None,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Wall-clock latency of the assembled network's forward pass on this host:
/// batch-1 input, fixed seeded weights, `warmup` discarded runs, then the
/// median of `repeats` monotonic-clock timings. Calls are serialized
/// process-wide and single-threaded; weights are never mutated (eval mode).
pub fn measure_latency(
    cell: &CellSpec,
    macro_cfg: &MacroConfig,
    repeats: usize,
    warmup: usize,
) -> Result<LatencyReport, DeviceError> {
    if repeats < 3 {
        return Err(DeviceError::InvalidArgument(format!(
            "repeats must be at least 3, got {repeats}"
        )));
    }
    if warmup < 1 {
        return Err(DeviceError::InvalidArgument(format!(
            "warmup must be at least 1, got {warmup}"
        )));
    }
    let _guard = MEASURE_LOCK.lock().expect("measurement lock poisoned");

    let plan = plan_network(macro_cfg, cell)?;
    let mut net = NetInstance::build(&plan, Mode::Eval, MEASURE_WEIGHT_SEED)?;
    let (h, w, c) = macro_cfg.input;
    let mut rng = ChaCha8Rng::seed_from_u64(MEASURE_INPUT_SEED);
    let input = Tensor4::random(&mut rng, (1, c, h, w));

    for _ in 0..warmup {
        net.forward_logits(&input)?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        net.forward_logits(&input)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let seconds = percentile(&times, 0.5);
    let iqr = percentile(&times, 0.75) - percentile(&times, 0.25);

    Ok(LatencyReport {
        device_name: "host".to_string(),
        cell: cell.clone(),
        seconds,
        method: LatencyMethod::Measured,
        repeats,
        iqr_seconds: Some(iqr),
    })
}

/// Batch-1 memory estimate: parameter bytes plus peak activation bytes.
pub fn memory_usage(cell: &CellSpec, macro_cfg: &MacroConfig) -> Result<u64, DeviceError> {
    let report = network_cost(macro_cfg, cell)?;
    Ok(report.param_bytes + report.peak_activation_bytes)
}
