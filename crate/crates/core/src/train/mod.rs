//! Metrics, training loop, evaluation and ablation.

mod ablate;
mod evaluate;
pub mod metrics;
mod trainer;

pub use ablate::{ablate, AblationRow, AblationTable, VARIANTS};
pub use evaluate::{evaluate, EvalOptions, EvalReport, RefinerHistogram, ScenarioReport};
pub use metrics::{auc, pcoc, Metric};
pub use trainer::{check_schema, train, EpochLog, TrainConfig, TrainOutcome};
