//! Update pipelines: batch update, meta gradient descent and future gradient descent.

mod config;
mod driver;
mod generator;
mod inner;

pub use config::{AlgorithmKind, Forecast, MetaRate, NeuralSettings, NeuralVariant, TrainerConfig, WarmStart};
pub use driver::{
    run, run_bu, run_fgd_linear, run_fgd_neural, run_mgd, Checkpoint, RoundOutcome, RunOptions, RunOutput,
    TracePoint,
};
pub use inner::{inner_descent, one_pass_steps, InnerResult, Schedule, Termination};
