//! Device-aware progressive search for Pareto-optimal convolutional cells.
//!
//! The library searches over "cells" — short alternating sequences of
//! normalization and convolution ops — that are repeated densely to form a
//! full network. Candidates are scored on several objectives at once
//! (error rate, parameter count, multiply-accumulates, per-device latency,
//! memory) and selected by Pareto optimality, with a learned LSTM surrogate
//! standing in for expensive training when ranking mutated candidates.
//!
//! Module map:
//! - [`cellspace`]: the op vocabulary, cell validity, enumeration and mutation.
//! - [`costmodel`]: analytic parameter / MAC / memory counting for a cell and
//!   the assembled dense network.
//! - [`kernels`]: reference f64 forward/backward implementations of every op,
//!   used as the cost-model oracle, the tiny trainer's substrate and the
//!   payload for host latency measurements.
//! - [`evaluator`]: accuracy evaluators — a deterministic synthetic oracle and
//!   a small real trainer on a generated dataset.
//! - [`devices`]: device profiles, profiled and measured latency, memory.
//! - [`surrogate`]: the layer-normalized LSTM accuracy regressor.
//! - [`pareto`]: dominance, non-dominated sorting, crowding distance and
//!   K-selection.
//! - [`engine`]: the progressive search loop and its persisted run ledger.

pub mod cellspace;
pub mod costmodel;
pub mod devices;
pub mod engine;
pub mod evaluator;
pub mod kernels;
pub mod parallel;
pub mod pareto;
pub mod stats;
pub mod surrogate;

pub use cellspace::{CellSpec, LayerOp};
pub use costmodel::{CostReport, MacroConfig};
pub use devices::{DeviceProfile, LatencyReport};
pub use engine::{RunLedger, SearchConfig, SelectionMode};
pub use evaluator::Evaluation;
pub use pareto::{Direction, ObjectiveSchema, ObjectiveVector};
