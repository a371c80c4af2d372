//! Per-node continuous-time Kalman-Bucy filter driven by the consensus
//! outputs.
//!
//! The filter consumes the node's estimates of the average information
//! vector and matrix verbatim; no compensation is applied for
//! event-induced consensus error.
//!
//! The covariance advances by a Strang split: half an Euler step of the
//! linear drift `A P + P A^T + B W B^T`, the exact flow
//! `P <- P (I + h N Zhat P)^-1` of the quadratic correction, then the
//! second drift half. The correction flow is unconditionally stable, which
//! matters when a burst of information reaches a node whose covariance grew
//! large during a communication lull: a fully explicit step would overshoot
//! and lose definiteness there. The symmetric split keeps the equilibrium
//! bias at O(h^2). The state estimate then advances with explicit Euler
//! using the updated gain.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::plant::PlantModel;

/// A covariance whose smallest eigenvalue drops below `-PSD_LOSS_TOL * trace`
/// aborts the run.
const PSD_LOSS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("non-finite filter state")]
    NonFinite,
    #[error("covariance lost positive semidefiniteness (min eigenvalue {min_eig:.3e}, trace {trace:.3e})")]
    CovarianceNotPsd { min_eig: f64, trace: f64 },
    #[error("covariance correction step is singular")]
    SingularCorrection,
}

/// Kalman-Bucy filter state of one node.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Self {
        Self { x_hat, p }
    }
}

/// Preallocated temporaries for the filter update, reused across steps.
#[derive(Debug, Clone)]
pub struct FilterScratch {
    drift: DMatrix<f64>,
    correction: DMatrix<f64>,
    work: DMatrix<f64>,
    x_dot: DVector<f64>,
    gain_v: DVector<f64>,
}

impl FilterScratch {
    pub fn new(n: usize) -> Self {
        Self {
            drift: DMatrix::zeros(n, n),
            correction: DMatrix::zeros(n, n),
            work: DMatrix::zeros(n, n),
            x_dot: DVector::zeros(n),
            gain_v: DVector::zeros(n),
        }
    }
}

/// One step of the filter:
///
/// ```text
/// M     = P + (h/2) (A P + P A^T + B W B^T)
/// C     = M (I + h N Zhat M)^-1
/// P+    = sym(C + (h/2) (A C + C A^T + B W B^T))
/// xhat+ = xhat + h (A xhat + N P+ zhat - N P+ Zhat xhat)
/// ```
pub fn step_filter(
    state: &FilterState,
    z_hat: &DVector<f64>,
    z_hat_mat: &DMatrix<f64>,
    model: &PlantModel,
    network_size: usize,
    h: f64,
) -> Result<FilterState, EstimatorError> {
    let mut next = state.clone();
    let mut scratch = FilterScratch::new(state.x_hat.len());
    step_filter_in_place(&mut next, z_hat, z_hat_mat, model, network_size, h, &mut scratch)?;
    Ok(next)
}

/// Allocation-conscious variant of [`step_filter`] for the simulation hot
/// loop.
pub fn step_filter_in_place(
    state: &mut FilterState,
    z_hat: &DVector<f64>,
    z_hat_mat: &DMatrix<f64>,
    model: &PlantModel,
    network_size: usize,
    h: f64,
    scratch: &mut FilterScratch,
) -> Result<(), EstimatorError> {
    debug_assert!(h > 0.0);
    debug_assert!(network_size >= 1);
    let n_f = network_size as f64;
    let a = model.a();

    // First drift half: P <- P + (h/2)(A P + P A^T + BWB^T). P is
    // symmetric, so P A^T is the transpose of A P and one product suffices.
    drift_half_step(&mut state.p, model, 0.5 * h, scratch);

    // Correction, exact flow of P' = -N P Zhat P over the full step:
    // P <- P (I + h N Zhat P)^-1.
    scratch.correction.fill(0.0);
    scratch.correction.fill_diagonal(1.0);
    scratch.correction.gemm(h * n_f, z_hat_mat, &state.p, 1.0);
    let inverse = scratch
        .correction
        .clone()
        .try_inverse()
        .ok_or(EstimatorError::SingularCorrection)?;
    scratch.work.gemm(1.0, &state.p, &inverse, 0.0);
    state.p.copy_from(&scratch.work);

    // Second drift half.
    drift_half_step(&mut state.p, model, 0.5 * h, scratch);
    linalg::symmetrize(&mut state.p);

    // State estimate with the updated gain:
    // x_dot = A xhat + N P+ zhat - N P+ Zhat xhat.
    scratch.gain_v.gemv(1.0, &state.p, z_hat, 0.0);
    scratch.x_dot.gemv(1.0, a, &state.x_hat, 0.0);
    scratch.x_dot.axpy(n_f, &scratch.gain_v, 1.0);
    scratch.work.gemm(1.0, &state.p, z_hat_mat, 0.0);
    scratch.gain_v.gemv(1.0, &scratch.work, &state.x_hat, 0.0);
    scratch.x_dot.axpy(-n_f, &scratch.gain_v, 1.0);
    state.x_hat.axpy(h, &scratch.x_dot, 1.0);

    if !linalg::vec_all_finite(&state.x_hat) || !linalg::all_finite(&state.p) {
        return Err(EstimatorError::NonFinite);
    }
    let trace = state.p.trace();
    let threshold = -PSD_LOSS_TOL * trace;
    // Cheap Gershgorin bound first; the full eigensolve only runs when the
    // bound cannot certify the covariance.
    if linalg::gershgorin_min_bound(&state.p) < threshold {
        let min_eig = linalg::min_eigenvalue(&state.p);
        if min_eig < threshold {
            return Err(EstimatorError::CovarianceNotPsd { min_eig, trace });
        }
    }
    Ok(())
}

/// `P <- P + dt (A P + P A^T + BWB^T)`, exploiting the symmetry of `P`.
fn drift_half_step(p: &mut DMatrix<f64>, model: &PlantModel, dt: f64, scratch: &mut FilterScratch) {
    let n = p.nrows();
    scratch.work.gemm(1.0, model.a(), p, 0.0);
    scratch.drift.copy_from(model.bwbt());
    for i in 0..n {
        for j in 0..n {
            scratch.drift[(i, j)] += scratch.work[(i, j)] + scratch.work[(j, i)];
        }
    }
    p.zip_apply(&scratch.drift, |v, d| *v += dt * d);
}
