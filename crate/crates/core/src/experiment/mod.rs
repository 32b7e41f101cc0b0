//! Experiment matrices: config parsing, parallel execution, tables, bound reports and plot data.

mod artifacts;
mod config;
mod matrix;

pub use artifacts::{emit_plot_data, write_atomic};
pub use config::{
    parse_config, validate_config, AlgorithmEntry, EmitFlags, ExperimentConfig, GradientKind, ScenarioEntry,
    ALGORITHM_NAMES,
};
pub use matrix::{
    cell_metrics, make_source, report, run_bounds, run_matrix, BoundRow, CellMetrics, CellResult, ComparisonRow,
    ComparisonTable, MatrixOutcome, ROUNDING_TOL,
};
