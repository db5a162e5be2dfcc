use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::lie::{LieOrderConfig, MAX_ORDER};
use crate::metrics::{ScalarMode, SelectionSpec};
use crate::optim::{CostKind, CostSpec, Limits, RandomSplineConfig, SolverConfig};
use crate::sim::{QualityLevel, SensorRates};
use crate::system::{idx, ExtrinsicParams, NoiseSpec, Quaternion, StateMatrix};
use crate::{Error, Result};

/// Trajectory source compared in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The random initial spline, not optimized.
    Random,
    Mma,
    Deterministic,
    Stochastic,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::Mma, Method::Deterministic, Method::Stochastic];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Mma => "mma",
            Method::Deterministic => "deterministic",
            Method::Stochastic => "stochastic",
        }
    }

    /// Cost minimized for this method; `None` for the random baseline.
    pub fn cost_kind(&self) -> Option<CostKind> {
        match self {
            Method::Random => None,
            Method::Mma => Some(CostKind::Mma),
            Method::Deterministic => Some(CostKind::Deterministic),
            Method::Stochastic => Some(CostKind::Stochastic),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected random, mma, deterministic or stochastic)"
                ))
            })
    }
}

/// Velocity, acceleration and endpoint-tolerance limits; the endpoints
/// themselves come from each trial's random spline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub v_max: Vector4<f64>,
    pub a_max: Vector4<f64>,
    pub eps: Vector4<f64>,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let l = Limits::default();
        Self {
            v_max: l.v_max,
            a_max: l.a_max,
            eps: l.eps,
        }
    }
}

impl LimitsConfig {
    pub fn with_endpoints(&self, y_start: Vector4<f64>, y_end: Vector4<f64>) -> Limits {
        Limits {
            v_max: self.v_max,
            a_max: self.a_max,
            eps: self.eps,
            y_start,
            y_end,
        }
    }
}

/// Standard deviations of the filter prior, one per 3-dim error block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub position: f64,
    pub attitude_deg: f64,
    pub velocity: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
    pub extrinsic_translation: f64,
    pub extrinsic_rotation_deg: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            position: 0.1,
            attitude_deg: 5.0,
            velocity: 0.1,
            gyro_bias: 0.01,
            accel_bias: 0.01,
            extrinsic_translation: 0.05,
            extrinsic_rotation_deg: 5.0,
        }
    }
}

impl PriorSpec {
    pub fn covariance(&self) -> StateMatrix {
        let blocks = [
            (idx::P, self.position),
            (idx::THETA, self.attitude_deg.to_radians()),
            (idx::V, self.velocity),
            (idx::BG, self.gyro_bias),
            (idx::BA, self.accel_bias),
            (idx::P_IC, self.extrinsic_translation),
            (idx::THETA_IC, self.extrinsic_rotation_deg.to_radians()),
        ];
        let mut p = StateMatrix::zeros();
        for (b, s) in blocks {
            for i in 0..3 {
                p[(b + i, b + i)] = s * s;
            }
        }
        p
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.position,
            self.attitude_deg,
            self.velocity,
            self.gyro_bias,
            self.accel_bias,
            self.extrinsic_translation,
            self.extrinsic_rotation_deg,
        ];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("prior standard deviations must be positive".into()))
        }
    }
}

/// Size of the initial extrinsic error; directions are drawn per trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuessOffset {
    /// [m]
    pub translation: f64,
    /// [deg]
    pub rotation_deg: f64,
}

impl Default for GuessOffset {
    fn default() -> Self {
        Self {
            translation: 0.05,
            rotation_deg: 5.0,
        }
    }
}

/// Full experiment description. Every field has a default, and unknown keys
/// are rejected when parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub n_knots: usize,
    pub dt_knot: f64,
    /// Metric window length [s].
    pub horizon: f64,
    pub lie_order: usize,
    pub qualities: Vec<QualityLevel>,
    pub methods: Vec<Method>,
    pub selection: SelectionSpec,
    pub scalar_mode: ScalarMode,
    /// Weight of `J_accel` added to the observability costs (0 keeps them
    /// separate).
    pub accel_weight: f64,
    pub limits: LimitsConfig,
    pub random: RandomSplineConfig,
    pub solver: SolverConfig,
    pub noise: NoiseSpec,
    pub rates: SensorRates,
    pub truth: ExtrinsicParams,
    pub guess_offset: GuessOffset,
    pub prior: PriorSpec,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_trials: 6,
            n_knots: 15,
            dt_knot: 0.5,
            horizon: 0.2,
            lie_order: 2,
            qualities: vec![QualityLevel::new(4), QualityLevel::new(40), QualityLevel::new(400)],
            methods: Method::ALL.to_vec(),
            selection: SelectionSpec::extrinsic_translation(),
            scalar_mode: ScalarMode::Trace,
            accel_weight: 0.0,
            limits: LimitsConfig::default(),
            random: RandomSplineConfig::default(),
            solver: SolverConfig::default(),
            noise: NoiseSpec::default(),
            rates: SensorRates::default(),
            truth: default_truth(),
            guess_offset: GuessOffset::default(),
            prior: PriorSpec::default(),
            master_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn default_truth() -> ExtrinsicParams {
    ExtrinsicParams {
        p_ic: nalgebra::Vector3::new(0.1, 0.02, -0.03),
        q_ic: Quaternion::from_axis_angle(&nalgebra::Vector3::y(), 5f64.to_radians()),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if !(self.dt_knot > 0.0 && self.dt_knot.is_finite()) {
            return bad("dt_knot must be positive");
        }
        if self.n_knots < 2 * self.random.order {
            return bad("n_knots must be at least twice the spline order");
        }
        if self.lie_order > MAX_ORDER {
            return bad("lie_order above the supported maximum");
        }
        if self.qualities.is_empty() || self.qualities.iter().any(|q| q.n_landmarks == 0) {
            return bad("qualities must be non-empty with at least one landmark each");
        }
        if !(self.accel_weight >= 0.0 && self.accel_weight.is_finite()) {
            return bad("accel_weight must be non-negative");
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty");
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len()
            || self.qualities.iter().collect::<BTreeSet<_>>().len() != self.qualities.len()
        {
            return bad("methods and qualities must not repeat");
        }
        if !(self.guess_offset.translation >= 0.0 && self.guess_offset.rotation_deg >= 0.0) {
            return bad("guess offsets must be non-negative");
        }
        self.selection.validate().map_err(config_err)?;
        self.noise.validate().map_err(config_err)?;
        self.rates.validate().map_err(config_err)?;
        self.prior.validate()?;
        self.limits
            .with_endpoints(Vector4::zeros(), Vector4::zeros())
            .validate()
            .map_err(config_err)?;
        crate::metrics::WindowSpec::new(0.0, self.horizon, self.rates.cam_dt(), self.rates.imu_dt())
            .map_err(config_err)?;
        Ok(())
    }

    /// Cost specification for `kind`, linearized at the nominal extrinsics.
    pub fn cost_spec(&self, kind: CostKind) -> CostSpec {
        let mut spec = CostSpec::new(kind);
        spec.selection = self.selection.clone();
        spec.mode = self.scalar_mode;
        spec.lie = LieOrderConfig::with_order(self.lie_order);
        spec.horizon = self.horizon;
        spec.meas_dt = self.rates.cam_dt();
        spec.imu_dt = self.rates.imu_dt();
        spec.p0 = self.prior.covariance();
        spec.extrinsics = self.truth;
        spec.gravity = self.noise.gravity;
        spec.accel_weight = self.accel_weight;
        spec
    }
}
