//! Synthetic drifting streams, per-round risk oracles and probe sets.

mod batch;
mod probe;
mod scenario;
mod source;

pub use batch::DomainBatch;
pub use probe::{build_probe_set, ProbeConfig, ProbeSet};
pub use scenario::{
    next_domain, write_stream_csv, DriftKind, DriftScenario, Moments, RoundParams, ScenarioSpec, Task,
};
pub use source::{
    population_gradient, EmpiricalSource, GradientSource, History, MiniBatchPart, PopulationSource,
    SourceKind, StreamEvent,
};
