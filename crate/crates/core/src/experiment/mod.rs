//! Phase-diagram experiments: configuration, Monte Carlo error estimation
//! and output.

mod config;
mod output;
mod runner;

pub use config::{ExperimentConfig, Model, OutputConfig, SignalConfig, TestSpec, SCHEMA_VERSION};
pub use output::{
    emit_phase_csv, emit_phase_plot, error_color, format_real, parse_phase_csv, read_phase_csv, render_phase_svg,
    write_phase_csv, PHASE_COLUMNS,
};
pub use runner::{run_experiment, run_experiment_with_threads, PhaseRow, PhaseTable};
