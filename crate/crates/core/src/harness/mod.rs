//! Scenario orchestration: single runs, communication baselines, threshold
//! sweeps, and the metrics they report.

pub mod engine;
pub mod metrics;
pub mod sweep;

pub use engine::{
    run_baseline, run_scenario, run_scenario_with, RecordOptions, SimError, SimulationResult,
};
pub use metrics::{compute_metrics, Metrics};
pub use sweep::{sweep_delta, sweep_delta_sequential, SweepError, SweepRow};
