//! Run metrics: time-averaged estimation error and event frequency.

use serde::Serialize;

use crate::scenario::Scenario;

use super::engine::SimulationResult;

/// Scalar summary of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Time- and node-averaged estimation error
    /// `(1 / (N T)) sum_i integral |xhat_i - x| dt` (trapezoid on the
    /// recorded grid).
    pub e_s: f64,
    /// Events per node per unit time, t = 0 seeds excluded.
    pub f_s: f64,
    /// Events per node per grid step; 1 means a broadcast at every step.
    /// Algebraically `f_s * h`, computed exactly from step counts.
    pub f_norm: f64,
}

pub fn compute_metrics(res: &SimulationResult, s: &Scenario) -> Metrics {
    let nn = res.network_size as f64;
    let t_end = s.t_end();
    let steps = s.steps();

    let mut error_integral = 0.0;
    for node in 0..res.network_size {
        let series = &res.estimates[node];
        for k in 0..series.len().saturating_sub(1) {
            let f0 = (&series[k] - &res.truth[k]).norm();
            let f1 = (&series[k + 1] - &res.truth[k + 1]).norm();
            error_integral += 0.5 * (f0 + f1) * (res.times[k + 1] - res.times[k]);
        }
    }
    let e_s = error_integral / (nn * t_end);

    let total_events: u64 = res.event_counts.iter().sum();
    let f_s = total_events as f64 / (nn * t_end);
    let f_norm = total_events as f64 / (nn * steps as f64);

    Metrics { e_s, f_s, f_norm }
}
