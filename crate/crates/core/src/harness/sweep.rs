//! Threshold sweeps: run a scenario across trigger thresholds and seeds and
//! average the metrics per threshold.
//!
//! Runs are independent, so the sweep fans them out across a rayon pool when
//! the `parallel` feature is on. Aggregation always happens in a fixed order
//! (thresholds as given, seeds ascending), so sequential and parallel sweeps
//! produce identical tables.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::Scenario;

use super::engine::{run_scenario, SimError};
use super::metrics::Metrics;

#[derive(Debug, Error)]
#[error("run failed for delta = {delta}, repetition {repetition} (seed {seed}): {source}")]
pub struct SweepError {
    pub delta: f64,
    pub repetition: u32,
    pub seed: u64,
    pub source: SimError,
}

/// One row of the threshold/frequency/error trade-off table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    /// Estimation error averaged over the repetitions.
    pub e_avg: f64,
    /// Event frequency averaged over the repetitions.
    pub f_avg: f64,
    /// Normalized event frequency averaged over the repetitions.
    pub f_norm_avg: f64,
}

/// Run `repetitions` seeds (base seed, base seed + 1, ...) for every
/// threshold and average. Dispatches to the rayon pool when available.
pub fn sweep_delta(
    base: &Scenario,
    deltas: &[f64],
    repetitions: u32,
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>, SweepError> {
    #[cfg(feature = "parallel")]
    {
        sweep_delta_parallel(base, deltas, repetitions, jobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        sweep_delta_sequential(base, deltas, repetitions)
    }
}

/// Single-threaded sweep; always available and byte-identical to the
/// parallel path.
pub fn sweep_delta_sequential(
    base: &Scenario,
    deltas: &[f64],
    repetitions: u32,
) -> Result<Vec<SweepRow>, SweepError> {
    let tasks = task_list(base, deltas, repetitions);
    let metrics: Result<Vec<Metrics>, SweepError> =
        tasks.iter().map(run_task).collect();
    Ok(aggregate(deltas, repetitions, &metrics?))
}

#[cfg(feature = "parallel")]
fn sweep_delta_parallel(
    base: &Scenario,
    deltas: &[f64],
    repetitions: u32,
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>, SweepError> {
    use rayon::prelude::*;

    let tasks = task_list(base, deltas, repetitions);
    let run_all = || -> Result<Vec<Metrics>, SweepError> {
        tasks.par_iter().map(run_task).collect()
    };
    let metrics = match jobs {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("rayon pool");
            pool.install(run_all)?
        }
        _ => run_all()?,
    };
    Ok(aggregate(deltas, repetitions, &metrics))
}

struct Task {
    scenario: Scenario,
    delta: f64,
    repetition: u32,
}

fn task_list(base: &Scenario, deltas: &[f64], repetitions: u32) -> Vec<Task> {
    let mut tasks = Vec::with_capacity(deltas.len() * repetitions as usize);
    for &delta in deltas {
        for rep in 0..repetitions {
            tasks.push(Task {
                scenario: base.with_delta(delta).with_seed(base.seed + rep as u64),
                delta,
                repetition: rep,
            });
        }
    }
    tasks
}

fn run_task(task: &Task) -> Result<Metrics, SweepError> {
    run_scenario(&task.scenario).map(|res| res.metrics).map_err(|source| SweepError {
        delta: task.delta,
        repetition: task.repetition,
        seed: task.scenario.seed,
        source,
    })
}

fn aggregate(deltas: &[f64], repetitions: u32, metrics: &[Metrics]) -> Vec<SweepRow> {
    let reps = repetitions as usize;
    deltas
        .iter()
        .enumerate()
        .map(|(d_idx, &delta)| {
            let chunk = &metrics[d_idx * reps..(d_idx + 1) * reps];
            let mut e = 0.0;
            let mut f = 0.0;
            let mut f_norm = 0.0;
            for m in chunk {
                e += m.e_s;
                f += m.f_s;
                f_norm += m.f_norm;
            }
            SweepRow {
                delta,
                e_avg: e / reps as f64,
                f_avg: f / reps as f64,
                f_norm_avg: f_norm / reps as f64,
            }
        })
        .collect()
}
