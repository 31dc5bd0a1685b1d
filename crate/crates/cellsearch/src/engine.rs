//! The progressive search loop: exhaustively evaluate a shallow base
//! population, then repeatedly (1) mutate every population member by one
//! layer, (2) score all children analytically and rank their accuracy with
//! the surrogate, (3) select K by Pareto optimality (or top predicted
//! accuracy) under the hard constraints, truly evaluate the selected set and
//! refit the surrogate on everything observed so far. The final front is
//! computed over truly evaluated candidates only, on observed error.

pub mod ledger;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cellspace::{enumerate_with_cap, CellError, CellSpec, DEFAULT_ENUMERATION_CAP};
use crate::costmodel::{network_cost, CostError, CostReport, MacroConfig};
use crate::devices::{measure_latency, profile_latency, DeviceError, DeviceProfile, LatencyReport};
use crate::evaluator::{
    EvalError, Evaluation, Evaluator, OracleEvaluator, TrainerEvaluator,
};
use crate::parallel::map_batch;
use crate::pareto::{
    self, pareto_front, HardConstraint, HardConstraintSet, ObjectiveSchema, ObjectiveVector,
    ParetoError,
};
use crate::surrogate::{SurrogateError, SurrogateModel, TrainSet, DEFAULT_EPOCHS, DEFAULT_LR};

pub const OBJ_ERROR: &str = "error";
pub const OBJ_PARAMS: &str = "params";
pub const OBJ_MACS: &str = "macs";
pub const OBJ_MEMORY: &str = "memory";

pub fn latency_objective(device: &str) -> String {
    format!("latency_{device}")
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no feasible candidate at depth {depth}; binding constraints: {}",
            .violations.iter().map(|(n, c)| format!("{n} ({c} violations)"))
                .collect::<Vec<_>>().join(", "))]
    Infeasible {
        depth: usize,
        violations: Vec<(String, usize)>,
    },
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// Candidate selection rule. The serialized names are the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Pareto-optimal selection over all objectives.
    #[serde(rename = "dpp")]
    Pareto,
    /// Top K by predicted accuracy only.
    #[serde(rename = "pnas")]
    TopAccuracy,
}

impl SelectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMode::Pareto => "dpp",
            SelectionMode::TopAccuracy => "pnas",
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dpp" => Ok(SelectionMode::Pareto),
            "pnas" => Ok(SelectionMode::TopAccuracy),
            other => Err(format!("unknown mode {other:?} (expected dpp or pnas)")),
        }
    }
}

/// Which accuracy evaluator a run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Oracle {
        #[serde(default = "default_noise")]
        noise: bool,
    },
    Trainer {
        #[serde(default = "default_trainer_epochs")]
        epochs: usize,
        #[serde(default)]
        dataset_seed: u64,
    },
}

fn default_noise() -> bool {
    true
}

fn default_trainer_epochs() -> usize {
    10
}

impl EvaluatorConfig {
    fn build(&self) -> Box<dyn Evaluator> {
        match self {
            EvaluatorConfig::Oracle { noise } => Box::new(OracleEvaluator { noise: *noise }),
            EvaluatorConfig::Trainer {
                epochs,
                dataset_seed,
            } => Box::new(TrainerEvaluator {
                epochs: *epochs,
                dataset_seed: *dataset_seed,
            }),
        }
    }
}

/// A full run specification. Serialized verbatim into the run directory so a
/// run can be replayed from its own snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: u64,
    pub mode: SelectionMode,
    pub start_depth: usize,
    pub end_depth: usize,
    pub k: usize,
    pub evaluator: EvaluatorConfig,
    pub macro_config: MacroConfig,
    /// Fully resolved device profiles (latency objective per profile).
    pub devices: Vec<DeviceProfile>,
    /// Also wall-clock-measure every truly evaluated candidate on this host.
    /// Measured seconds are recorded in the ledger but are never a selection
    /// objective (children are scored analytically only).
    #[serde(default)]
    pub measure_host_latency: bool,
    /// Objective name -> upper bound (lower bound for maximize objectives).
    #[serde(default)]
    pub hard_constraints: BTreeMap<String, f64>,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u128,
    /// Timing repeats per measured candidate (only with
    /// `measure_host_latency`); smaller than the standalone default because
    /// a run measures every truly evaluated candidate.
    #[serde(default = "default_measure_repeats")]
    pub measure_repeats: usize,
    #[serde(default = "default_measure_warmup")]
    pub measure_warmup: usize,
}

fn default_cap() -> u128 {
    DEFAULT_ENUMERATION_CAP
}

fn default_measure_repeats() -> usize {
    10
}

fn default_measure_warmup() -> usize {
    2
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            mode: SelectionMode::Pareto,
            start_depth: 2,
            end_depth: 4,
            k: 128,
            evaluator: EvaluatorConfig::Oracle { noise: true },
            macro_config: MacroConfig::cifar_like(),
            devices: vec![
                DeviceProfile::bundled("gpu-like").unwrap(),
                DeviceProfile::bundled("mobile-like").unwrap(),
            ],
            measure_host_latency: false,
            hard_constraints: BTreeMap::new(),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            measure_repeats: default_measure_repeats(),
            measure_warmup: default_measure_warmup(),
        }
    }
}

impl SearchConfig {
    /// The run's objective schema: error, params, MACs, one latency per
    /// device, and memory when any device contributes it. All minimized.
    pub fn objective_schema(&self) -> Arc<ObjectiveSchema> {
        let mut objectives = vec![
            (OBJ_ERROR.to_string(), pareto::Direction::Min),
            (OBJ_PARAMS.to_string(), pareto::Direction::Min),
            (OBJ_MACS.to_string(), pareto::Direction::Min),
        ];
        for device in &self.devices {
            objectives.push((latency_objective(&device.name), pareto::Direction::Min));
        }
        if self.devices.iter().any(|d| d.contributes_memory) {
            objectives.push((OBJ_MEMORY.to_string(), pareto::Direction::Min));
        }
        ObjectiveSchema::new(objectives).expect("objective names are unique")
    }

    /// Constraints from the config map plus any embedded in device profiles.
    pub fn constraint_set(&self) -> Result<HardConstraintSet, EngineError> {
        let schema = self.objective_schema();
        let mut merged: BTreeMap<String, f64> = self.hard_constraints.clone();
        for device in &self.devices {
            if let Some(map) = &device.hard_constraints {
                for (name, bound) in map {
                    merged.entry(name.clone()).or_insert(*bound);
                }
            }
        }
        let mut constraints = Vec::new();
        for (name, bound) in merged {
            let index = schema.index_of(&name).ok_or_else(|| {
                EngineError::Config(format!("hard constraint on unknown objective {name:?}"))
            })?;
            constraints.push(HardConstraint {
                direction: schema.direction(index),
                name,
                bound,
            });
        }
        Ok(HardConstraintSet { constraints })
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.start_depth == 0 || self.start_depth > self.end_depth {
            return Err(EngineError::Config(format!(
                "need 1 <= start_depth <= end_depth, got {}..{}",
                self.start_depth, self.end_depth
            )));
        }
        if self.k == 0 {
            return Err(EngineError::Config("K must be at least 1".to_string()));
        }
        if self.devices.is_empty() {
            return Err(EngineError::Config(
                "at least one device profile is required".to_string(),
            ));
        }
        self.macro_config.validate().map_err(EngineError::Cost)?;
        for device in &self.devices {
            device.validate()?;
        }
        let mut names: Vec<&str> = self.devices.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.devices.len() {
            return Err(EngineError::Config(
                "device profile names must be unique".to_string(),
            ));
        }
        self.constraint_set()?;
        Ok(())
    }
}

/// Everything known about one scored cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cell: CellSpec,
    pub depth: usize,
    /// Iteration at which the cell was first scored (0 = base population).
    pub iteration: usize,
    pub evaluation: Option<Evaluation>,
    pub predicted_accuracy: Option<f64>,
    pub cost: CostReport,
    /// Profile latencies, one per configured device, in config order.
    pub latencies: Vec<LatencyReport>,
    /// Host wall-clock measurement, when enabled and truly evaluated.
    pub measured: Option<LatencyReport>,
    pub memory_bytes: u64,
    /// Whether the cell was ever part of a selected population.
    pub selected: bool,
}

impl Candidate {
    /// Error value used for selection and reporting: observed when a true
    /// evaluation exists (`observed` = true forces it), else predicted.
    fn error_value(&self, observed: bool) -> Option<f64> {
        if observed {
            self.evaluation.as_ref().map(|e| e.error_rate())
        } else {
            self.predicted_accuracy
                .map(|a| 1.0 - a)
                .or_else(|| self.evaluation.as_ref().map(|e| e.error_rate()))
        }
    }

    /// Objective vector under the run schema. `observed` selects which error
    /// source is allowed.
    pub fn objective_vector(
        &self,
        schema: &Arc<ObjectiveSchema>,
        observed: bool,
    ) -> Option<ObjectiveVector> {
        let error = self.error_value(observed)?;
        let mut values = vec![error, self.cost.params as f64, self.cost.macs as f64];
        for report in &self.latencies {
            values.push(report.seconds);
        }
        if schema.len() > values.len() {
            values.push(self.memory_bytes as f64);
        }
        ObjectiveVector::new(schema.clone(), values).ok()
    }
}

/// Per-iteration surrogate training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFitLog {
    pub iteration: usize,
    pub train_points: usize,
    pub epoch_loss: Vec<f64>,
}

/// Named picks out of the final front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    /// Canonical strings of the final front, in canonical order.
    pub front: Vec<String>,
    /// Per device: the front member with the lowest latency on that device
    /// among the best decile by error.
    pub device_picks: BTreeMap<String, String>,
    /// The front member minimizing its worst normalized rank across all
    /// objectives.
    pub panacea_pick: String,
}

/// The complete, replayable record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLedger {
    pub config: SearchConfig,
    /// Every candidate ever scored, ordered by (iteration, canonical cell).
    pub candidates: Vec<Candidate>,
    pub surrogate_logs: Vec<SurrogateFitLog>,
    /// Serialized surrogate checkpoint per fit, aligned with
    /// `surrogate_logs`.
    pub surrogate_checkpoints: Vec<String>,
    /// Indices into `candidates`: the final front over truly evaluated
    /// candidates, on observed error.
    pub front: Vec<usize>,
    pub report: FinalReport,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn surrogate_seed(run_seed: u64, iteration: usize) -> u64 {
    splitmix64(run_seed ^ splitmix64(iteration as u64 + 1))
}

struct ScoredCosts {
    cost: CostReport,
    latencies: Vec<LatencyReport>,
    memory_bytes: u64,
}

fn score_costs(cell: &CellSpec, config: &SearchConfig) -> Result<ScoredCosts, EngineError> {
    let cost = network_cost(&config.macro_config, cell)?;
    let mut latencies = Vec::with_capacity(config.devices.len());
    for device in &config.devices {
        latencies.push(profile_latency(device, cell, &config.macro_config)?);
    }
    Ok(ScoredCosts {
        cost,
        latencies,
        memory_bytes: cost.param_bytes + cost.peak_activation_bytes,
    })
}

/// Runs the full progressive search. Deterministic: identical configs
/// produce identical ledgers, byte for byte once serialized.
pub fn run(config: &SearchConfig) -> Result<RunLedger, EngineError> {
    config.validate()?;
    let schema = config.objective_schema();
    let constraints = config.constraint_set()?;
    let evaluator = config.evaluator.build();

    // base population: exhaustive at start depth, truncated to K in
    // canonical order if oversized
    let mut base = enumerate_with_cap(config.start_depth, config.enumeration_cap)?;
    base.sort();
    base.truncate(config.k);

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut trainset = TrainSet::new();
    let mut surrogate_logs = Vec::new();
    let mut surrogate_checkpoints = Vec::new();

    let evaluate_cells = |cells: &[CellSpec],
                          config: &SearchConfig,
                          evaluator: &dyn Evaluator|
     -> Result<Vec<(Evaluation, Option<LatencyReport>)>, EngineError> {
        let results = map_batch(cells, |cell| -> Result<_, EngineError> {
            let evaluation = evaluator.evaluate(cell, &config.macro_config, config.seed)?;
            // measured calls serialize on a process-wide lock inside
            let measured = if config.measure_host_latency {
                Some(measure_latency(
                    cell,
                    &config.macro_config,
                    config.measure_repeats,
                    config.measure_warmup,
                )?)
            } else {
                None
            };
            Ok((evaluation, measured))
        });
        results.into_iter().collect()
    };

    // iteration 0: truly evaluate the base population
    let base_scores = {
        let results = map_batch(&base, |cell| score_costs(cell, config));
        results.into_iter().collect::<Result<Vec<_>, _>>()?
    };
    let base_evals = evaluate_cells(&base, config, evaluator.as_ref())?;
    for ((cell, scored), (evaluation, measured)) in
        base.iter().zip(base_scores).zip(base_evals)
    {
        trainset
            .insert(cell.encode_tokens(), evaluation.accuracy)
            .map_err(EngineError::Surrogate)?;
        index_of.insert(cell.canonical(), candidates.len());
        candidates.push(Candidate {
            cell: cell.clone(),
            depth: config.start_depth,
            iteration: 0,
            evaluation: Some(evaluation),
            predicted_accuracy: None,
            cost: scored.cost,
            latencies: scored.latencies,
            measured,
            memory_bytes: scored.memory_bytes,
            selected: true,
        });
    }

    let refit = |trainset: &TrainSet,
                     iteration: usize,
                     logs: &mut Vec<SurrogateFitLog>,
                     checkpoints: &mut Vec<String>|
     -> Result<SurrogateModel, EngineError> {
        let mut model = SurrogateModel::new(surrogate_seed(config.seed, iteration));
        let losses = model.fit(trainset, DEFAULT_EPOCHS, DEFAULT_LR, 512)?;
        logs.push(SurrogateFitLog {
            iteration,
            train_points: trainset.len(),
            epoch_loss: losses,
        });
        checkpoints.push(model.to_checkpoint());
        Ok(model)
    };

    let mut surrogate = refit(&trainset, 0, &mut surrogate_logs, &mut surrogate_checkpoints)?;
    let mut population = base;

    for depth in config.start_depth..config.end_depth {
        let iteration = depth - config.start_depth + 1;

        // (1) mutation: every population member grows by one layer
        let mut children: Vec<CellSpec> =
            population.iter().flat_map(|cell| cell.mutate()).collect();
        children.sort();
        children.dedup();

        // (2) analytic costs + surrogate inference for all children
        let child_scores = {
            let results = map_batch(&children, |cell| score_costs(cell, config));
            results.into_iter().collect::<Result<Vec<_>, _>>()?
        };
        let predictions = children
            .iter()
            .map(|cell| surrogate.predict(&cell.encode_tokens()))
            .collect::<Result<Vec<_>, _>>()?;

        let first_child = candidates.len();
        for ((cell, scored), predicted) in children
            .iter()
            .zip(child_scores)
            .zip(predictions.iter().copied())
        {
            index_of.insert(cell.canonical(), candidates.len());
            candidates.push(Candidate {
                cell: cell.clone(),
                depth: depth + 1,
                iteration,
                evaluation: None,
                predicted_accuracy: Some(predicted),
                cost: scored.cost,
                latencies: scored.latencies,
                measured: None,
                memory_bytes: scored.memory_bytes,
                selected: false,
            });
        }

        // (3) model selection on predicted error + device objectives
        let vectors: Vec<ObjectiveVector> = candidates[first_child..]
            .iter()
            .map(|c| {
                c.objective_vector(&schema, false)
                    .expect("children always carry predictions")
            })
            .collect();
        let tie_keys: Vec<String> = children.iter().map(|c| c.canonical()).collect();
        let mode = match config.mode {
            SelectionMode::Pareto => pareto::SelectionMode::Pareto,
            SelectionMode::TopAccuracy => pareto::SelectionMode::TopObjective,
        };
        let chosen =
            pareto::select_k(&vectors, config.k, mode, &constraints, &tie_keys, OBJ_ERROR)?;
        if chosen.is_empty() {
            let mut violations: Vec<(String, usize)> = Vec::new();
            for c in &constraints.constraints {
                let single = HardConstraintSet {
                    constraints: vec![c.clone()],
                };
                let passing = pareto::filter_hard(&vectors, &single)?.len();
                let violating = vectors.len() - passing;
                if violating > 0 {
                    violations.push((c.name.clone(), violating));
                }
            }
            return Err(EngineError::Infeasible {
                depth: depth + 1,
                violations,
            });
        }

        let selected_cells: Vec<CellSpec> =
            chosen.iter().map(|&i| children[i].clone()).collect();
        for &i in &chosen {
            candidates[first_child + i].selected = true;
        }

        // true evaluation of the selected set; re-encounters would reuse the
        // stored evaluation, though one-layer growth cannot revisit a cell
        let to_evaluate: Vec<CellSpec> = selected_cells
            .iter()
            .filter(|cell| {
                let idx = index_of[&cell.canonical()];
                candidates[idx].evaluation.is_none()
            })
            .cloned()
            .collect();
        let evals = evaluate_cells(&to_evaluate, config, evaluator.as_ref())?;
        for (cell, (evaluation, measured)) in to_evaluate.iter().zip(evals) {
            trainset
                .insert(cell.encode_tokens(), evaluation.accuracy)
                .map_err(EngineError::Surrogate)?;
            let idx = index_of[&cell.canonical()];
            candidates[idx].evaluation = Some(evaluation);
            candidates[idx].measured = measured;
        }

        surrogate = refit(
            &trainset,
            iteration,
            &mut surrogate_logs,
            &mut surrogate_checkpoints,
        )?;
        population = selected_cells;
    }

    // final front over all truly evaluated candidates, observed error only
    let evaluated: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].evaluation.is_some())
        .collect();
    let vectors: Vec<ObjectiveVector> = evaluated
        .iter()
        .map(|&i| {
            candidates[i]
                .objective_vector(&schema, true)
                .expect("evaluated candidates have observed error")
        })
        .collect();
    let front_local = pareto_front(&vectors)?;
    let mut front: Vec<usize> = front_local.iter().map(|&i| evaluated[i]).collect();
    front.sort_by(|&a, &b| candidates[a].cell.cmp(&candidates[b].cell));

    let report = final_report(&candidates, &front, &schema, config)?;

    Ok(RunLedger {
        config: config.clone(),
        candidates,
        surrogate_logs,
        surrogate_checkpoints,
        front,
        report,
    })
}

/// Names the front's picks: per device, the lowest-latency member among the
/// best decile by observed error; plus the "panacea" member minimizing the
/// maximum normalized rank across all objectives. Both are always front
/// members.
pub fn final_report(
    candidates: &[Candidate],
    front: &[usize],
    schema: &Arc<ObjectiveSchema>,
    config: &SearchConfig,
) -> Result<FinalReport, EngineError> {
    assert!(!front.is_empty(), "front of a nonempty set is nonempty");
    let members: Vec<&Candidate> = front.iter().map(|&i| &candidates[i]).collect();
    let front_cells: Vec<String> = members.iter().map(|c| c.cell.canonical()).collect();

    // device picks: best decile by error, then min latency on the device
    let mut by_error: Vec<usize> = (0..members.len()).collect();
    by_error.sort_by(|&a, &b| {
        let ea = members[a].evaluation.as_ref().unwrap().error_rate();
        let eb = members[b].evaluation.as_ref().unwrap().error_rate();
        ea.partial_cmp(&eb)
            .unwrap()
            .then_with(|| front_cells[a].cmp(&front_cells[b]))
    });
    let decile = members.len().div_ceil(10);
    let eligible = &by_error[..decile.max(1)];
    let mut device_picks = BTreeMap::new();
    for (d, device) in config.devices.iter().enumerate() {
        let best = eligible
            .iter()
            .copied()
            .min_by(|&a, &b| {
                members[a].latencies[d]
                    .seconds
                    .partial_cmp(&members[b].latencies[d].seconds)
                    .unwrap()
                    .then_with(|| front_cells[a].cmp(&front_cells[b]))
            })
            .unwrap();
        device_picks.insert(device.name.clone(), front_cells[best].clone());
    }

    // panacea pick: min over members of (max over objectives of the
    // member's normalized average rank)
    let vectors: Vec<ObjectiveVector> = members
        .iter()
        .map(|c| c.objective_vector(schema, true).unwrap())
        .collect();
    let n = members.len();
    let mut worst_rank = vec![0.0f64; n];
    for obj in 0..schema.len() {
        let oriented: Vec<f64> = vectors
            .iter()
            .map(|v| match schema.direction(obj) {
                pareto::Direction::Min => v.values()[obj],
                pareto::Direction::Max => -v.values()[obj],
            })
            .collect();
        let ranks = crate::stats::average_ranks(&oriented);
        for i in 0..n {
            let normalized = if n > 1 {
                (ranks[i] - 1.0) / (n as f64 - 1.0)
            } else {
                0.0
            };
            worst_rank[i] = worst_rank[i].max(normalized);
        }
    }
    let panacea = (0..n)
        .min_by(|&a, &b| {
            worst_rank[a]
                .partial_cmp(&worst_rank[b])
                .unwrap()
                .then_with(|| front_cells[a].cmp(&front_cells[b]))
        })
        .unwrap();

    Ok(FinalReport {
        front: front_cells.clone(),
        device_picks,
        panacea_pick: front_cells[panacea].clone(),
    })
}
