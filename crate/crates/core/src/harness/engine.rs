//! The fixed-step simulation loop.
//!
//! Each step advances the truth, samples measurements, integrates the
//! consensus states against the latched neighbor broadcasts, processes
//! trigger events in ascending node order, and advances the per-node
//! filters. Filters consume the consensus values from the start of the step,
//! so a value broadcast at step k first influences neighbors during step
//! k+1. Everything is deterministic given the scenario (seed included).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::consensus::{
    apply_z_event, check_trigger, step_consensus, tau_min_steps, BroadcastPayload, EventRecord,
    NodeState,
};
use crate::estimator::{step_filter_in_place, EstimatorError, FilterScratch, FilterState};
use crate::linalg;
use crate::plant::{step_sde, PlantError, PlantState, TruthMode};
use crate::rng::{NoiseStream, StreamPurpose};
use crate::scenario::{CommMode, Scenario};

use super::metrics::{compute_metrics, Metrics};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("plant diverged at step {step} (t = {t}): {source}")]
    Plant {
        step: u64,
        t: f64,
        source: PlantError,
    },
    #[error("consensus state non-finite at node {node} (1-based), step {step}, t = {t}")]
    ConsensusNonFinite { node: usize, step: u64, t: f64 },
    #[error("filter aborted at node {node} (1-based), step {step}, t = {t}: {source}")]
    Filter {
        node: usize,
        step: u64,
        t: f64,
        source: EstimatorError,
    },
}

/// What to keep while running.
#[derive(Debug, Clone)]
pub struct RecordOptions {
    /// Keep every `stride`-th grid point in the output series.
    pub stride: usize,
    /// Additionally keep the full-resolution information-vector series
    /// (needed by the bound estimators).
    pub full_series: bool,
    /// Attach broadcast payloads to the event log.
    pub broadcast_payloads: bool,
}

impl RecordOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self { stride: s.output_stride, full_series: false, broadcast_payloads: false }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub network_size: usize,
    pub state_dim: usize,
    /// Recorded grid times (stride applied), starting at t = 0.
    pub times: Vec<f64>,
    /// Ground truth at the recorded times.
    pub truth: Vec<DVector<f64>>,
    /// Per-node state estimates at the recorded times, `[node][record]`.
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// Per-node covariance traces at the recorded times.
    pub trace_p: Vec<Vec<f64>>,
    /// Per-node consensus estimates of the average information vector.
    pub z_hat: Vec<Vec<DVector<f64>>>,
    /// Per-node `|zbar - zhat_i|` at the recorded times.
    pub zbar_err: Vec<Vec<f64>>,
    /// Event log, including the index-0 seed broadcasts at t = 0.
    pub events: Vec<EventRecord>,
    /// Triggered events per node (seeds excluded).
    pub event_counts: Vec<u64>,
    /// Full-resolution stacked local information vectors, one entry per grid
    /// point, when requested.
    pub full_z: Option<Vec<DVector<f64>>>,
    /// Full-resolution stacked consensus estimates, when requested.
    pub full_z_hat: Option<Vec<DVector<f64>>>,
    pub metrics: Metrics,
}

impl SimulationResult {
    /// Average of the stacked per-node blocks in one full-resolution entry.
    pub fn stacked_average(stacked: &DVector<f64>, n_nodes: usize) -> DVector<f64> {
        let dim = stacked.len() / n_nodes;
        let mut avg = DVector::zeros(dim);
        for i in 0..n_nodes {
            for c in 0..dim {
                avg[c] += stacked[i * dim + c];
            }
        }
        avg / n_nodes as f64
    }
}

/// Run a scenario with its configured recording stride.
pub fn run_scenario(s: &Scenario) -> Result<SimulationResult, SimError> {
    run_scenario_with(s, &RecordOptions::from_scenario(s))
}

/// Run the ideal-communication reference for a scenario: event triggering is
/// replaced by an unconditional broadcast at every step. A scenario already
/// set to a baseline mode runs unchanged.
pub fn run_baseline(s: &Scenario) -> Result<SimulationResult, SimError> {
    match s.comm_mode {
        CommMode::EventTriggered => run_scenario(&s.with_mode(CommMode::EveryStep)),
        CommMode::EveryStep | CommMode::CentralizedOracle => run_scenario(s),
    }
}

pub fn run_scenario_with(
    s: &Scenario,
    rec: &RecordOptions,
) -> Result<SimulationResult, SimError> {
    let n = s.state_dim();
    let nn = s.network_size();
    let h = s.h;
    let steps = s.steps();
    let stride = rec.stride as u64;
    let oracle_mode = s.comm_mode == CommMode::CentralizedOracle;
    let min_gap = tau_min_steps(s.consensus.tau_min, h);

    let mut plant_stream = NoiseStream::new(s.seed, StreamPurpose::Plant);
    let mut meas_streams: Vec<NoiseStream> = (0..nn)
        .map(|i| NoiseStream::new(s.seed, StreamPurpose::Measurement(i)))
        .collect();
    let neighbor_lists: Vec<Vec<usize>> =
        (0..nn).map(|i| s.graph.neighbors(i).expect("validated").to_vec()).collect();

    // Truth at t = 0.
    let mut truth = match s.truth_mode {
        TruthMode::Trajectory => PlantState { t: 0.0, x: crate::plant::trajectory_state(0.0) },
        TruthMode::SdeSample => {
            PlantState { t: 0.0, x: s.plant.sample_initial_state(&mut plant_stream) }
        }
    };

    // Measurement-noise states (stationary start) and information vectors
    // at t = 0.
    let mut y_buf: Vec<DVector<f64>> =
        s.sensors.iter().map(|sm| DVector::zeros(sm.output_dim())).collect();
    let mut noise: Vec<DVector<f64>> =
        s.sensors.iter().map(|sm| DVector::zeros(sm.output_dim())).collect();
    let mut z_local: Vec<DVector<f64>> = vec![DVector::zeros(n); nn];
    let mut z_next: Vec<DVector<f64>> = vec![DVector::zeros(n); nn];
    for i in 0..nn {
        if !s.noise_free {
            s.sensors[i].sample_noise(&mut meas_streams[i], &mut noise[i]);
        }
        measure(s, i, &truth.x, &noise[i], &mut y_buf[i]);
        s.sensors[i].info_vector_into(&y_buf[i], &mut z_local[i]);
    }

    // In oracle mode every node holds the exact averages from the start.
    let zbar_init = average_of(&z_local);
    let z_mat_oracle: DMatrix<f64> = {
        let mut acc = DMatrix::zeros(n, n);
        for sm in &s.sensors {
            acc += sm.info_matrix();
        }
        acc / nn as f64
    };

    let mut nodes: Vec<NodeState> = (0..nn)
        .map(|i| {
            if oracle_mode {
                NodeState::new(zbar_init.clone(), z_mat_oracle.clone())
            } else {
                NodeState::new(z_local[i].clone(), s.sensors[i].info_matrix().clone())
            }
        })
        .collect();
    let mut latched: Vec<DVector<f64>> = nodes.iter().map(|nd| nd.z_hat.clone()).collect();

    let mut filters: Vec<FilterState> = (0..nn)
        .map(|_| FilterState::new(s.plant.x0_mean().clone(), s.plant.p0().clone()))
        .collect();
    let mut scratch = FilterScratch::new(n);

    // Recording storage.
    let rec_count = (steps / stride + 1) as usize;
    let mut times = Vec::with_capacity(rec_count);
    let mut truth_rec = Vec::with_capacity(rec_count);
    let mut estimates = vec![Vec::with_capacity(rec_count); nn];
    let mut trace_p = vec![Vec::with_capacity(rec_count); nn];
    let mut z_hat_rec = vec![Vec::with_capacity(rec_count); nn];
    let mut zbar_err = vec![Vec::with_capacity(rec_count); nn];
    let mut events: Vec<EventRecord> = Vec::new();
    let mut full_z = rec.full_series.then(|| Vec::with_capacity(steps as usize + 1));
    let mut full_z_hat = rec.full_series.then(|| Vec::with_capacity(steps as usize + 1));

    // The t = 0 seed: every node's initial value counts as broadcast.
    if !oracle_mode {
        for (i, node) in nodes.iter().enumerate() {
            events.push(EventRecord {
                t: 0.0,
                step: 0,
                node: i,
                index: 0,
                payload: rec.broadcast_payloads.then(|| BroadcastPayload {
                    z: node.z_hat.clone(),
                    z_mat: node.z_hat_mat.clone(),
                }),
            });
        }
    }

    let mut record = |k: u64,
                      truth: &PlantState,
                      nodes: &[NodeState],
                      filters: &[FilterState],
                      z_local: &[DVector<f64>]| {
        if !k.is_multiple_of(stride) {
            return;
        }
        let zbar = average_of(z_local);
        times.push(k as f64 * h);
        truth_rec.push(truth.x.clone());
        for i in 0..nn {
            estimates[i].push(filters[i].x_hat.clone());
            trace_p[i].push(filters[i].p.trace());
            z_hat_rec[i].push(nodes[i].z_hat.clone());
            zbar_err[i].push((&zbar - &nodes[i].z_hat).norm());
        }
    };
    let push_full = |store_z: &mut Option<Vec<DVector<f64>>>,
                     store_zh: &mut Option<Vec<DVector<f64>>>,
                     z_local: &[DVector<f64>],
                     nodes: &[NodeState]| {
        if let Some(fz) = store_z.as_mut() {
            fz.push(stack(z_local));
        }
        if let Some(fzh) = store_zh.as_mut() {
            let hats: Vec<DVector<f64>> = nodes.iter().map(|nd| nd.z_hat.clone()).collect();
            fzh.push(stack(&hats));
        }
    };

    record(0, &truth, &nodes, &filters, &z_local);
    push_full(&mut full_z, &mut full_z_hat, &z_local, &nodes);

    for k in 0..steps {
        let step_next = k + 1;
        let t_next = step_next as f64 * h;

        // Filters first: they consume the consensus values at the start of
        // the step (explicit Euler on the coupled system).
        for i in 0..nn {
            step_filter_in_place(
                &mut filters[i],
                &nodes[i].z_hat,
                &nodes[i].z_hat_mat,
                &s.plant,
                nn,
                h,
                &mut scratch,
            )
            .map_err(|source| SimError::Filter { node: i + 1, step: step_next, t: t_next, source })?;
        }

        // Advance truth.
        truth = match s.truth_mode {
            TruthMode::Trajectory => {
                PlantState { t: t_next, x: crate::plant::trajectory_state(t_next) }
            }
            TruthMode::SdeSample => step_sde(&truth, &s.plant, h, &mut plant_stream)
                .map_err(|source| SimError::Plant { step: step_next, t: t_next, source })?,
        };

        // Measurements at the new grid point.
        for i in 0..nn {
            if !s.noise_free {
                s.sensors[i].noise_step(s.noise_alpha, &mut meas_streams[i], &mut noise[i]);
            }
            measure(s, i, &truth.x, &noise[i], &mut y_buf[i]);
            s.sensors[i].info_vector_into(&y_buf[i], &mut z_next[i]);
        }

        if oracle_mode {
            let zbar = average_of(&z_next);
            for node in nodes.iter_mut() {
                node.z_hat.copy_from(&zbar);
            }
        } else {
            // Consensus integration against the latched broadcasts.
            for i in 0..nn {
                step_consensus(
                    &mut nodes[i],
                    &z_next[i],
                    neighbor_lists[i].iter().map(|&j| &latched[j]),
                    s.consensus.kappa1,
                    s.consensus.kappa2,
                    h,
                );
                if !linalg::vec_all_finite(&nodes[i].z_hat) {
                    return Err(SimError::ConsensusNonFinite {
                        node: i + 1,
                        step: step_next,
                        t: t_next,
                    });
                }
            }

            // Trigger checks and events, ascending node order. Matrix
            // updates read the current (possibly just-updated) neighbor
            // values; fresh vector broadcasts latch for the next step.
            for i in 0..nn {
                let fire = match s.comm_mode {
                    CommMode::EveryStep => true,
                    CommMode::EventTriggered => {
                        check_trigger(&nodes[i], step_next, s.consensus.delta[i], min_gap)
                    }
                    CommMode::CentralizedOracle => unreachable!(),
                };
                if fire {
                    nodes[i].last_event_step = step_next;
                    nodes[i].event_count += 1;
                    let broadcast = nodes[i].z_hat.clone();
                    nodes[i].last_broadcast_z.copy_from(&broadcast);
                    latched[i].copy_from(&broadcast);
                    apply_z_event(&mut nodes, &s.graph, i);
                    events.push(EventRecord {
                        t: t_next,
                        step: step_next,
                        node: i,
                        index: nodes[i].event_count,
                        payload: rec.broadcast_payloads.then(|| BroadcastPayload {
                            z: nodes[i].z_hat.clone(),
                            z_mat: nodes[i].z_hat_mat.clone(),
                        }),
                    });
                }
            }
        }

        std::mem::swap(&mut z_local, &mut z_next);
        record(step_next, &truth, &nodes, &filters, &z_local);
        push_full(&mut full_z, &mut full_z_hat, &z_local, &nodes);
    }

    let event_counts: Vec<u64> = nodes.iter().map(|nd| nd.event_count).collect();
    let mut result = SimulationResult {
        network_size: nn,
        state_dim: n,
        times,
        truth: truth_rec,
        estimates,
        trace_p,
        z_hat: z_hat_rec,
        zbar_err,
        events,
        event_counts,
        full_z,
        full_z_hat,
        metrics: Metrics::default(),
    };
    result.metrics = compute_metrics(&result, s);
    Ok(result)
}

fn measure(s: &Scenario, i: usize, x: &DVector<f64>, noise: &DVector<f64>, y: &mut DVector<f64>) {
    s.sensors[i].measure_noise_free_into(x, y);
    if !s.noise_free {
        *y += noise;
    }
}

fn average_of(vectors: &[DVector<f64>]) -> DVector<f64> {
    let mut avg = DVector::zeros(vectors[0].len());
    for v in vectors {
        avg += v;
    }
    avg / vectors.len() as f64
}

fn stack(vectors: &[DVector<f64>]) -> DVector<f64> {
    let dim = vectors[0].len();
    let mut out = DVector::zeros(dim * vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        out.rows_mut(i * dim, dim).copy_from(v);
    }
    out
}
