//! Multi-level selection in a boid ecology: agent dynamics, ray sensing,
//! CTRNN controllers with a learned mutation operator, resource exchange,
//! a deterministic rollout engine, CMA-ES training and analysis tools.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod ecology;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod genome;
pub mod neural;
pub mod rng;
pub mod sensing;

pub use analysis::{classify_role, AblationSetting, Role};
pub use config::{AnalysisConfig, ExperimentConfig, RolloutConfig, TrainConfig};
pub use ecology::ExchangeClip;
pub use engine::{run_rollout, GroupController, LogOptions, RolloutMetrics, Simulation, StepSummary, World};
pub use error::{Error, Result};
pub use evolution::{Checkpoint, CmaState, Evaluation, GenerationRecord, Trainer};
pub use genome::{Genome, GenomeLayout};
pub use neural::{MutationNet, MutationRule, Substrate};
