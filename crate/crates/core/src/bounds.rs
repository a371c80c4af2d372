//! Theoretical consensus-error bounds and their empirical inputs.
//!
//! For a connected graph the steady-state distance between any node's
//! consensus estimate and the true network average is bounded by the sum of
//! two terms: a disagreement bound
//!
//! ```text
//! K_tilde = (L' + k2 sigma_HA sqrt(N) delta_max) / (k2 lambda2)
//! ```
//!
//! and an average-tracking bound
//!
//! ```text
//! K_bar = exp(-k1 T) |e(0)| + (k2 / k1) sigma_1A sqrt(N) delta_max
//! ```
//!
//! `L'` bounds the centered drive `(H (x) I)(z' + k1 z)` of the stacked
//! signals; it is estimated on the realized grid rather than assumed.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("graph is disconnected (lambda2 = 0); the bounds require connectivity")]
    DisconnectedGraph,
    #[error("need at least two grid steps to estimate the drive bound")]
    SeriesTooShort,
    #[error("the run was recorded without full-resolution series")]
    MissingFullSeries,
}

/// Scalar inputs to the bound formulas.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    /// On-grid bound on the centered drive.
    pub l_prime: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Largest per-node trigger threshold.
    pub delta_max: f64,
    pub network_size: usize,
    /// Algebraic connectivity of the communication graph.
    pub lambda2: f64,
    /// Largest singular value of the centered adjacency operator.
    pub sigma_ha: f64,
    /// Largest singular value of the averaged adjacency row.
    pub sigma_1a: f64,
    /// Initial average-tracking error magnitude.
    pub e0_norm: f64,
}

/// Evaluate `(K_tilde, K_bar)` at horizon `t`.
pub fn consensus_error_bounds(b: &BoundInputs, t: f64) -> Result<(f64, f64), BoundsError> {
    if b.lambda2.is_nan() || b.lambda2 <= 0.0 {
        return Err(BoundsError::DisconnectedGraph);
    }
    let sqrt_n = (b.network_size as f64).sqrt();
    let k_tilde =
        (b.l_prime + b.kappa2 * b.sigma_ha * sqrt_n * b.delta_max) / (b.kappa2 * b.lambda2);
    let k_bar = (-b.kappa1 * t).exp() * b.e0_norm
        + (b.kappa2 / b.kappa1) * b.sigma_1a * sqrt_n * b.delta_max;
    Ok((k_tilde, k_bar))
}

/// On-grid estimate of `L'`: the max over steps of the centered
/// `(dz/h + k1 z)` of the stacked per-node signals, with `dz` the forward
/// difference. `series[k]` stacks the N node vectors at step k.
pub fn l_prime_from_series(
    series: &[DVector<f64>],
    n_nodes: usize,
    h: f64,
    kappa1: f64,
) -> Result<f64, BoundsError> {
    if series.len() < 2 {
        return Err(BoundsError::SeriesTooShort);
    }
    let total = series[0].len();
    assert_eq!(total % n_nodes, 0, "stacked length must be divisible by node count");
    let dim = total / n_nodes;
    let mut worst: f64 = 0.0;
    let mut centered = DVector::zeros(total);
    for k in 0..series.len() - 1 {
        let z = &series[k];
        let z_next = &series[k + 1];
        for idx in 0..total {
            centered[idx] = (z_next[idx] - z[idx]) / h + kappa1 * z[idx];
        }
        // Subtract the cross-node mean of each state component.
        for c in 0..dim {
            let mut mean = 0.0;
            for i in 0..n_nodes {
                mean += centered[i * dim + c];
            }
            mean /= n_nodes as f64;
            for i in 0..n_nodes {
                centered[i * dim + c] -= mean;
            }
        }
        worst = worst.max(centered.norm());
    }
    Ok(worst)
}

/// `L'` estimated from a run's full-resolution information-vector series.
pub fn estimate_l_prime(
    run: &crate::harness::SimulationResult,
    kappa1: f64,
    h: f64,
) -> Result<f64, BoundsError> {
    let series = run.full_z.as_ref().ok_or(BoundsError::MissingFullSeries)?;
    l_prime_from_series(series, run.network_size, h, kappa1)
}

/// Worst observed consensus error `max_i |zbar(t) - zhat_i(t)|` over all
/// grid times `t >= t_from`. Requires full-resolution recording.
pub fn empirical_sup_consensus_error(
    run: &crate::harness::SimulationResult,
    t_from: f64,
    h: f64,
) -> Result<f64, BoundsError> {
    let z_series = run.full_z.as_ref().ok_or(BoundsError::MissingFullSeries)?;
    let zh_series = run.full_z_hat.as_ref().ok_or(BoundsError::MissingFullSeries)?;
    let n_nodes = run.network_size;
    let dim = run.state_dim;
    let start = ((t_from / h).ceil().max(0.0)) as usize;
    let mut worst: f64 = 0.0;
    for k in start..z_series.len() {
        let zbar = crate::harness::SimulationResult::stacked_average(&z_series[k], n_nodes);
        let zh = &zh_series[k];
        for i in 0..n_nodes {
            let mut dist_sq = 0.0;
            for c in 0..dim {
                let d = zbar[c] - zh[i * dim + c];
                dist_sq += d * d;
            }
            worst = worst.max(dist_sq.sqrt());
        }
    }
    Ok(worst)
}

/// The quantities written to `bounds.json`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub lambda2: f64,
    #[serde(rename = "sigma_HA")]
    pub sigma_ha: f64,
    #[serde(rename = "sigma_1A")]
    pub sigma_1a: f64,
    #[serde(rename = "L_prime")]
    pub l_prime: f64,
    #[serde(rename = "K_tilde")]
    pub k_tilde: f64,
    #[serde(rename = "K_bar")]
    pub k_bar: f64,
    pub empirical_sup_error: f64,
}

impl BoundsReport {
    /// Assemble the report for a scenario from a full-resolution run. The
    /// bound horizon is half the simulation span, i.e. the empirical
    /// supremum ranges over the second half of the run.
    pub fn from_run(
        scenario: &crate::scenario::Scenario,
        run: &crate::harness::SimulationResult,
    ) -> Result<Self, BoundsError> {
        let lambda2 = scenario.graph.algebraic_connectivity();
        let (sigma_ha, sigma_1a) =
            scenario.graph.centering_adjacency_gain(scenario.state_dim());
        let l_prime = estimate_l_prime(run, scenario.consensus.kappa1, scenario.h)?;
        let delta_max = scenario
            .consensus
            .delta
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let e0_norm = initial_average_error(run)?;
        let horizon = scenario.t_end() / 2.0;
        let inputs = BoundInputs {
            l_prime,
            kappa1: scenario.consensus.kappa1,
            kappa2: scenario.consensus.kappa2,
            delta_max,
            network_size: scenario.network_size(),
            lambda2,
            sigma_ha,
            sigma_1a,
            e0_norm,
        };
        let (k_tilde, k_bar) = consensus_error_bounds(&inputs, horizon)?;
        let empirical_sup_error = empirical_sup_consensus_error(run, horizon, scenario.h)?;
        Ok(Self { lambda2, sigma_ha, sigma_1a, l_prime, k_tilde, k_bar, empirical_sup_error })
    }
}

/// `|e(0)| = |mean_i zhat_i(0) - zbar(0)|`; identically zero with the
/// standard initialization, but measured from the data regardless.
fn initial_average_error(
    run: &crate::harness::SimulationResult,
) -> Result<f64, BoundsError> {
    let z0 = run.full_z.as_ref().ok_or(BoundsError::MissingFullSeries)?;
    let zh0 = run.full_z_hat.as_ref().ok_or(BoundsError::MissingFullSeries)?;
    if z0.is_empty() || zh0.is_empty() {
        return Err(BoundsError::SeriesTooShort);
    }
    let zbar = crate::harness::SimulationResult::stacked_average(&z0[0], run.network_size);
    let sbar = crate::harness::SimulationResult::stacked_average(&zh0[0], run.network_size);
    Ok((sbar - zbar).norm())
}
