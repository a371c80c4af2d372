//! Deterministic, seedable simulator for event-triggered distributed state
//! estimation over sensor networks.
//!
//! Each node measures a linear plant, converts the measurement to
//! information form, and runs a continuous dynamic-average-consensus filter
//! over it. Nodes broadcast only when a local trigger fires; at those events
//! a discrete matrix-consensus update averages the information matrices. The
//! consensus outputs drive a per-node Kalman-Bucy filter.
//!
//! The [`harness`] module orchestrates full runs, ideal-communication
//! baselines, and threshold sweeps; [`bounds`] evaluates the theoretical
//! consensus-error bounds against realized runs.

pub mod bounds;
pub mod consensus;
pub mod estimator;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod output;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod sensing;

pub use harness::{run_baseline, run_scenario, run_scenario_with, RecordOptions, SimulationResult};
pub use scenario::{tracking_2d, CommMode, Scenario, ScenarioConfig};
