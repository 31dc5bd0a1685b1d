//! Accuracy evaluators. The default is a deterministic synthetic oracle so
//! search-loop runs and tests finish in seconds and reproduce anywhere; a
//! tiny real trainer over the reference kernels is available as an opt-in
//! evaluator on a generated dataset.

pub mod dataset;
pub mod oracle;
pub mod trainer;

pub use dataset::{make_dataset, SyntheticDataset};
pub use oracle::OracleEvaluator;
pub use trainer::TrainerEvaluator;

use serde::{Deserialize, Serialize};

use crate::cellspace::CellSpec;
use crate::costmodel::{CostError, MacroConfig};
use crate::kernels::KernelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One accuracy measurement for one cell. Deterministic given
/// `(cell, macro config, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub epochs_used: usize,
    pub evaluator_id: String,
    pub seed: u64,
}

impl Evaluation {
    pub fn error_rate(&self) -> f64 {
        1.0 - self.accuracy
    }
}

/// Anything that maps `(cell, macro, seed)` to an accuracy, deterministically.
/// The search engine is agnostic to which evaluator is plugged in.
pub trait Evaluator: Sync + Send {
    fn evaluate(
        &self,
        cell: &CellSpec,
        macro_cfg: &MacroConfig,
        seed: u64,
    ) -> Result<Evaluation, EvalError>;

    fn id(&self) -> &str;
}
