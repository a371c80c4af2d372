//! The monitored plant: a linear SDE stepped with Euler-Maruyama, plus the
//! deterministic benchmark trajectory used as ground truth in the bundled
//! tracking scenario.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::rng::NoiseStream;

/// Absolute tolerance on symmetry checks at model construction.
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative slack on the smallest eigenvalue of a nominally PSD matrix.
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{name} must be symmetric (max asymmetry {asym:.3e})")]
    NotSymmetric { name: &'static str, asym: f64 },
    #[error("{name} must be positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { name: &'static str, min_eig: f64 },
    #[error("non-finite plant state at t = {t}")]
    NonFinite { t: f64 },
}

/// Linear plant `dx = A x dt + B dw` with process-noise intensity `W` and
/// Gaussian initial belief `(x0_mean, P0)`.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    w: DMatrix<f64>,
    x0_mean: DVector<f64>,
    p0: DMatrix<f64>,
    /// Cached PSD square root of `W`, used to sample noise increments.
    w_sqrt: DMatrix<f64>,
    /// Cached `B W B^T`, the diffusion term of the covariance dynamics.
    bwbt: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        w: DMatrix<f64>,
        x0_mean: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(PlantError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(PlantError::Dimension(format!(
                "B must have {} rows, got {}",
                n,
                b.nrows()
            )));
        }
        let nw = b.ncols();
        if w.nrows() != nw || w.ncols() != nw {
            return Err(PlantError::Dimension(format!(
                "W must be {}x{}, got {}x{}",
                nw,
                nw,
                w.nrows(),
                w.ncols()
            )));
        }
        if x0_mean.len() != n {
            return Err(PlantError::Dimension(format!(
                "x0 must have length {}, got {}",
                n,
                x0_mean.len()
            )));
        }
        if p0.nrows() != n || p0.ncols() != n {
            return Err(PlantError::Dimension(format!(
                "P0 must be {}x{}, got {}x{}",
                n,
                n,
                p0.nrows(),
                p0.ncols()
            )));
        }
        check_symmetric_psd(&w, "W")?;
        check_symmetric_psd(&p0, "P0")?;
        let w_sqrt = linalg::psd_sqrt(&w);
        let bwbt = &b * &w * b.transpose();
        Ok(Self { a, b, w, x0_mean, p0, w_sqrt, bwbt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn x0_mean(&self) -> &DVector<f64> {
        &self.x0_mean
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p0
    }

    /// `B W B^T`, cached.
    pub fn bwbt(&self) -> &DMatrix<f64> {
        &self.bwbt
    }

    /// Draw an initial state from the `(x0_mean, P0)` belief.
    pub fn sample_initial_state(&self, stream: &mut NoiseStream) -> DVector<f64> {
        let xi = stream.standard_normal_vector(self.state_dim());
        &self.x0_mean + linalg::psd_sqrt(&self.p0) * xi
    }
}

fn check_symmetric_psd(m: &DMatrix<f64>, name: &'static str) -> Result<(), PlantError> {
    let asym = linalg::asymmetry(m);
    if asym > SYMMETRY_TOL * m.norm().max(1.0) {
        return Err(PlantError::NotSymmetric { name, asym });
    }
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig < -PSD_TOL * m.norm().max(1.0) {
        return Err(PlantError::NotPsd { name, min_eig });
    }
    Ok(())
}

/// Plant state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub x: DVector<f64>,
}

/// One Euler-Maruyama step: `x+ = x + h A x + B dw` with
/// `dw ~ Normal(0, W h)` drawn from `stream`.
///
/// The noise increment is drawn even when `W = 0` so stream positions do not
/// depend on model parameters.
pub fn step_sde(
    state: &PlantState,
    model: &PlantModel,
    h: f64,
    stream: &mut NoiseStream,
) -> Result<PlantState, PlantError> {
    debug_assert!(h > 0.0);
    let xi = stream.standard_normal_vector(model.noise_dim());
    let dw = (&model.w_sqrt * xi) * h.sqrt();
    let x = &state.x + (&model.a * &state.x) * h + &model.b * dw;
    let t = state.t + h;
    if !linalg::vec_all_finite(&x) {
        return Err(PlantError::NonFinite { t });
    }
    Ok(PlantState { t, x })
}

/// Deterministic benchmark trajectory for the 2-D tracking scenario:
/// sinusoidal position components with the matching velocities.
pub fn trajectory_state(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![
        (0.5 * t).sin(),
        3.5 * (0.8 * t).sin(),
        0.5 * (0.5 * t).cos(),
        2.8 * (0.8 * t).cos(),
    ])
}

/// Where the simulated ground truth comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthMode {
    /// The deterministic benchmark trajectory (`trajectory_state`).
    #[default]
    Trajectory,
    /// A sample path of the plant SDE, seeded from the scenario seed.
    SdeSample,
}
