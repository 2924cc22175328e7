//! Experiment orchestration: configuration, sweeps, metric aggregation
//! and CSV emission.

mod config;
mod engine;
mod report;

pub use config::{
    load_config, ExperimentConfig, Mode, ReceiverSettings, SweepAxes, SweepPoint, ZedSettings,
};
pub use engine::{run_point, run_spec, run_sweep, simulate_observables, RunSpec};
pub use report::{emit_report, summary_lines, DetectionReport, FrameRecord};
