//! Scenario configuration: the JSON schema, validation, and conversion into
//! the domain objects the engine runs on.
//!
//! Node indices are 1-based in configuration files; everything behind
//! validation is 0-based.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::ConsensusConfig;
use crate::graph::{Graph, GraphError};
use crate::plant::{PlantError, PlantModel, TruthMode};
use crate::sensing::{self, SensingError, SensorModel};

/// Joint observability requires the smallest singular value of the
/// observability matrix to clear this floor.
pub const OBSERVABILITY_MIN_SV: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("scenario must declare at least one sensor")]
    NoSensors,
    #[error("communication graph must be connected")]
    Disconnected,
    #[error("joint observability fails: smallest singular value {0:.3e} of the observability matrix")]
    NotObservable(f64),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// How nodes exchange consensus information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommMode {
    /// Broadcast only when the local trigger fires.
    EventTriggered,
    /// Broadcast at every step (the ideal-communication baseline).
    EveryStep,
    /// Bypass the network: every filter is fed the exact averages.
    CentralizedOracle,
}

/// A dense matrix literal, row-major.
pub type MatrixRows = Vec<Vec<f64>>;

/// A matrix that may be written as a bare scalar (meaning 1x1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrMatrix {
    Scalar(f64),
    Matrix(MatrixRows),
}

impl ScalarOrMatrix {
    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>, ScenarioError> {
        match self {
            ScalarOrMatrix::Scalar(v) => Ok(DMatrix::from_element(1, 1, *v)),
            ScalarOrMatrix::Matrix(rows) => matrix_from_rows(rows, what),
        }
    }
}

/// A per-node list that may be written as one shared scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

fn matrix_from_rows(rows: &MatrixRows, what: &str) -> Result<DMatrix<f64>, ScenarioError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(ScenarioError::BadParameter(format!("{what} must be non-empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ScenarioError::BadParameter(format!("{what} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    /// 1-based endpoint pairs.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: MatrixRows,
    #[serde(rename = "B")]
    pub b: MatrixRows,
    #[serde(rename = "W")]
    pub w: MatrixRows,
    pub x0: Vec<f64>,
    #[serde(rename = "P0")]
    pub p0: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSection {
    #[serde(rename = "C")]
    pub c: MatrixRows,
    #[serde(rename = "R")]
    pub r: ScalarOrMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSection {
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta: ScalarOrVec,
    /// Defaults to one integration step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TruthSource {
    #[default]
    Trajectory,
    Sde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub h: f64,
    #[serde(rename = "T_f")]
    pub t_f: f64,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub truth: TruthSource,
    /// Test hook: force measurement noise to zero.
    #[serde(default)]
    pub noise_free: bool,
    /// Correlation time of the stationary measurement-noise process, in
    /// time units. 0 resamples the noise independently at every step.
    #[serde(default)]
    pub noise_corr_time: f64,
}

fn default_stride() -> usize {
    1
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub graph: GraphSection,
    pub plant: PlantSection,
    pub sensors: Vec<SensorSection>,
    pub consensus: ConsensusSection,
    pub sim: SimSection,
    pub mode: CommMode,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validate and build the runnable scenario.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        Scenario::from_config(self)
    }
}

/// A validated, runnable scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Graph,
    pub plant: PlantModel,
    pub sensors: Vec<SensorModel>,
    pub consensus: ConsensusConfig,
    pub truth_mode: TruthMode,
    pub comm_mode: CommMode,
    pub h: f64,
    pub t_f: f64,
    pub seed: u64,
    pub output_stride: usize,
    pub noise_free: bool,
    /// Lag-1 autoregression factor of the measurement-noise process on the
    /// grid: `exp(-h / noise_corr_time)`, or 0 for independent sampling.
    pub noise_alpha: f64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        if cfg.sensors.is_empty() {
            return Err(ScenarioError::NoSensors);
        }
        let network_size = cfg.sensors.len();

        let graph = Graph::from_one_based_edges(network_size, &cfg.graph.edges)?;
        if !graph.is_connected() {
            return Err(ScenarioError::Disconnected);
        }

        let plant = PlantModel::new(
            matrix_from_rows(&cfg.plant.a, "plant.A")?,
            matrix_from_rows(&cfg.plant.b, "plant.B")?,
            matrix_from_rows(&cfg.plant.w, "plant.W")?,
            DVector::from_vec(cfg.plant.x0.clone()),
            matrix_from_rows(&cfg.plant.p0, "plant.P0")?,
        )?;
        let n = plant.state_dim();

        let mut sensors = Vec::with_capacity(network_size);
        for (idx, s) in cfg.sensors.iter().enumerate() {
            let c = matrix_from_rows(&s.c, &format!("sensors[{idx}].C"))?;
            if c.ncols() != n {
                return Err(ScenarioError::BadParameter(format!(
                    "sensors[{idx}].C has {} columns, state dimension is {n}",
                    c.ncols()
                )));
            }
            sensors.push(SensorModel::new(c, s.r.to_matrix(&format!("sensors[{idx}].R"))?)?);
        }

        let sigma_min = sensing::observability_min_singular_value(plant.a(), &sensors);
        if sigma_min <= OBSERVABILITY_MIN_SV {
            return Err(ScenarioError::NotObservable(sigma_min));
        }

        let h = cfg.sim.h;
        if !h.is_finite() || h <= 0.0 {
            return Err(ScenarioError::BadParameter("sim.h must be positive".into()));
        }
        let t_f = cfg.sim.t_f;
        if !t_f.is_finite() || t_f <= 0.0 {
            return Err(ScenarioError::BadParameter("sim.T_f must be positive".into()));
        }
        let steps = (t_f / h).round() as u64;
        if steps == 0 {
            return Err(ScenarioError::BadParameter("horizon shorter than one step".into()));
        }
        let stride = cfg.sim.stride;
        if stride == 0 {
            return Err(ScenarioError::BadParameter("sim.stride must be at least 1".into()));
        }
        if !steps.is_multiple_of(stride as u64) {
            return Err(ScenarioError::BadParameter(format!(
                "sim.stride {stride} must divide the {steps} grid steps"
            )));
        }

        let kappa1 = cfg.consensus.kappa1;
        let kappa2 = cfg.consensus.kappa2;
        if !kappa1.is_finite() || kappa1 <= 0.0 || !kappa2.is_finite() || kappa2 <= 0.0 {
            return Err(ScenarioError::BadParameter(
                "consensus gains kappa1 and kappa2 must be positive".into(),
            ));
        }
        let delta = match &cfg.consensus.delta {
            ScalarOrVec::Scalar(d) => vec![*d; network_size],
            ScalarOrVec::Vec(v) => {
                if v.len() != network_size {
                    return Err(ScenarioError::BadParameter(format!(
                        "consensus.delta has {} entries for {network_size} nodes",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        // delta = 0 is allowed: it degenerates to broadcasting every step,
        // the continuous-communication endpoint of the threshold sweep.
        if delta.iter().any(|&d| d.is_nan() || d < 0.0) {
            return Err(ScenarioError::BadParameter(
                "trigger thresholds must be non-negative".into(),
            ));
        }
        let tau_min = cfg.consensus.tau_min.unwrap_or(h);
        if !tau_min.is_finite() || tau_min < h {
            return Err(ScenarioError::BadParameter(format!(
                "consensus.tau_min {tau_min} must be at least one step ({h})"
            )));
        }

        let truth_mode = match cfg.sim.truth {
            TruthSource::Trajectory => TruthMode::Trajectory,
            TruthSource::Sde => TruthMode::SdeSample,
        };
        if truth_mode == TruthMode::Trajectory && n != 4 {
            return Err(ScenarioError::BadParameter(format!(
                "the benchmark trajectory is 4-dimensional; plant has n = {n}. Use sim.truth = \"sde\""
            )));
        }

        let corr_time = cfg.sim.noise_corr_time;
        if !corr_time.is_finite() || corr_time < 0.0 {
            return Err(ScenarioError::BadParameter(
                "sim.noise_corr_time must be finite and non-negative".into(),
            ));
        }
        let noise_alpha = if corr_time > 0.0 { (-h / corr_time).exp() } else { 0.0 };

        Ok(Self {
            graph,
            plant,
            sensors,
            consensus: ConsensusConfig { kappa1, kappa2, delta, tau_min },
            truth_mode,
            comm_mode: cfg.mode,
            h,
            t_f,
            seed: cfg.sim.seed,
            output_stride: stride,
            noise_free: cfg.sim.noise_free,
            noise_alpha,
        })
    }

    pub fn network_size(&self) -> usize {
        self.sensors.len()
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    /// Number of integration steps; the grid has `steps() + 1` points.
    pub fn steps(&self) -> u64 {
        (self.t_f / self.h).round() as u64
    }

    /// Realized horizon `steps * h`; used by the metrics so the normalized
    /// event frequency hits exactly 1 for every-step communication.
    pub fn t_end(&self) -> f64 {
        self.steps() as f64 * self.h
    }

    /// Copy with a different shared trigger threshold.
    pub fn with_delta(&self, delta: f64) -> Self {
        assert!(delta >= 0.0);
        let mut s = self.clone();
        s.consensus.delta = vec![delta; self.network_size()];
        s
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s
    }

    pub fn with_mode(&self, mode: CommMode) -> Self {
        let mut s = self.clone();
        s.comm_mode = mode;
        s
    }
}

/// The bundled 2-D tracking scenario: a five-node ring observing a
/// constant-velocity plant model, with two x-position sensors, one
/// y-position sensor, and two xy sensors.
pub fn tracking_2d() -> ScenarioConfig {
    ScenarioConfig {
        // Line topology 1-2-3-4-5. Among connected five-node graphs it has
        // the smallest averaged-adjacency gain (the degree profile is as
        // even as a tree allows), which keeps the event-induced error of
        // the average-tracking mode low at these consensus gains.
        graph: GraphSection { edges: vec![(1, 2), (2, 3), (3, 4), (4, 5)] },
        plant: PlantSection {
            a: vec![
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
            ],
            b: vec![
                vec![0.0, 0.0],
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ],
            w: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            x0: vec![0.0, 0.0, 0.5, 2.8],
            p0: vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        },
        sensors: vec![
            SensorSection {
                c: vec![vec![1.0, 0.0, 0.0, 0.0]],
                r: ScalarOrMatrix::Scalar(0.02),
            },
            SensorSection {
                c: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
                r: ScalarOrMatrix::Matrix(vec![vec![0.01, 0.0], vec![0.0, 0.01]]),
            },
            SensorSection {
                c: vec![vec![0.0, 1.0, 0.0, 0.0]],
                r: ScalarOrMatrix::Scalar(0.01),
            },
            SensorSection {
                c: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
                r: ScalarOrMatrix::Matrix(vec![vec![0.01, 0.0], vec![0.0, 0.01]]),
            },
            SensorSection {
                c: vec![vec![1.0, 0.0, 0.0, 0.0]],
                r: ScalarOrMatrix::Scalar(0.015),
            },
        ],
        consensus: ConsensusSection {
            kappa1: 0.5,
            kappa2: 20.0,
            delta: ScalarOrVec::Scalar(25.0),
            // One and a half steps: events land on the grid, so any
            // admissible gap (two steps or more) strictly exceeds the
            // regularization window.
            tau_min: Some(1.5e-4),
        },
        sim: SimSection {
            h: 1e-4,
            t_f: 10.0,
            seed: 1,
            stride: 100,
            truth: TruthSource::Trajectory,
            noise_free: false,
            // Band-limit the sensor noise at two grid steps. The noise keeps
            // its Normal(0, R) marginal but the trigger signals stop
            // chattering on sample-to-sample jumps.
            noise_corr_time: 2e-4,
        },
        mode: CommMode::EventTriggered,
    }
}
