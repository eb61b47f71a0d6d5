//! Group-level selection.

pub mod checkpoint;
pub mod cma;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader, SCHEMA_VERSION};
pub use cma::{parent_count, CmaSnapshot, CmaState};
pub use train::{
    evaluate_genome, scenario_seeds, write_generations_csv, Evaluation, Evaluator, GenerationRecord,
    RolloutEvaluator, Trainer,
};
