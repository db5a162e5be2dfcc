use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::lie::{LieEngine, LieOrderConfig};
use crate::metrics::{
    default_p0, e2log_trajectory, scalarize, stochastic_trajectory, tile_windows, ScalarMode,
    SelectionSpec, WindowSpec,
};
use crate::spline::UniformSpline;
use crate::system::{default_gravity, ExtrinsicParams, StateMatrix};
use crate::Result;

const QUAD_STEP: f64 = 1e-3;

/// `∫ ÿᵀ W₃ ÿ dt` over the valid span, by composite Simpson per segment
/// with a step of at most 1 ms.
pub fn accel_cost(spline: &UniformSpline, w3: &Matrix4<f64>) -> f64 {
    let dt = spline.dt_knot();
    let mut m = (dt / QUAD_STEP).ceil() as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let h = dt / m as f64;
    let (start, _) = spline.span();
    let mut total = 0.0;
    for seg in 0..spline.n_segments() {
        let t0 = start + seg as f64 * dt;
        let mut s = 0.0;
        for j in 0..=m {
            let w = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let a = spline
                .eval(t0 + j as f64 * h, 2)
                .expect("quadrature nodes lie inside the span");
            s += w * (a.transpose() * w3 * a)[0];
        }
        total += s * h / 3.0;
    }
    total
}

/// `Σ_i ‖ÿ_i‖²` over the acceleration knots (all four channels).
pub fn knot_accel_cost(spline: &UniformSpline) -> f64 {
    spline
        .derivative_knots(2)
        .map(|k| k.iter().map(|a| a.norm_squared()).sum())
        .unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// Minimum-acceleration: `∫ ÿᵀ W₃ ÿ dt`.
    Mma,
    /// E²LOG metric.
    Deterministic,
    /// Information-filter metric.
    Stochastic,
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Mma => "mma",
            CostKind::Deterministic => "deterministic",
            CostKind::Stochastic => "stochastic",
        }
    }
}

/// Everything needed to evaluate a trajectory cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub selection: SelectionSpec,
    pub mode: ScalarMode,
    pub lie: LieOrderConfig,
    /// Window length `H`.
    pub horizon: f64,
    /// Exteroceptive measurement period inside a window.
    pub meas_dt: f64,
    pub imu_dt: f64,
    pub p0: StateMatrix,
    /// Extrinsics at which the metrics are linearized.
    pub extrinsics: ExtrinsicParams,
    pub gravity: Vector3<f64>,
    pub w3: Matrix4<f64>,
    /// Weight of `J_accel` added to an observability cost (0 disables).
    pub accel_weight: f64,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        Self {
            kind,
            selection: SelectionSpec::extrinsic_translation(),
            mode: ScalarMode::Trace,
            lie: LieOrderConfig::default(),
            horizon: 0.2,
            meas_dt: 0.1,
            imu_dt: 0.005,
            p0: default_p0(),
            extrinsics: ExtrinsicParams::default(),
            gravity: default_gravity(),
            w3: Matrix4::identity(),
            accel_weight: 0.0,
        }
    }
}

/// A [`CostSpec`] bound to one spline layout (windows are precomputed).
#[derive(Clone, Debug)]
pub struct Objective {
    pub spec: CostSpec,
    engine: LieEngine,
    windows: Vec<WindowSpec>,
}

impl Objective {
    pub fn new(spec: CostSpec, layout: &UniformSpline) -> Result<Self> {
        spec.selection.validate()?;
        let engine = LieEngine::new(spec.lie, spec.gravity)?;
        let windows = match spec.kind {
            CostKind::Mma => Vec::new(),
            _ => tile_windows(layout.span(), spec.horizon, spec.meas_dt, spec.imu_dt)?,
        };
        Ok(Self { spec, engine, windows })
    }

    pub fn windows(&self) -> &[WindowSpec] {
        &self.windows
    }

    pub fn engine(&self) -> &LieEngine {
        &self.engine
    }

    /// Observability part only (`J_obs`), or `J_accel` for the MMA kind.
    pub fn primary(&self, spline: &UniformSpline) -> Result<f64> {
        let s = &self.spec;
        match s.kind {
            CostKind::Mma => Ok(accel_cost(spline, &s.w3)),
            CostKind::Deterministic => {
                let acc = e2log_trajectory(spline, &self.windows, &self.engine, &s.extrinsics)?;
                scalarize(&acc, &s.selection, s.mode)
            }
            CostKind::Stochastic => {
                let acc = stochastic_trajectory(spline, &self.windows, &s.p0, &self.engine, &s.extrinsics)?;
                scalarize(&acc, &s.selection, s.mode)
            }
        }
    }

    /// Total cost minimized by the solver.
    pub fn evaluate(&self, spline: &UniformSpline) -> Result<f64> {
        let mut c = self.primary(spline)?;
        if self.spec.kind != CostKind::Mma && self.spec.accel_weight != 0.0 {
            c += self.spec.accel_weight * accel_cost(spline, &self.spec.w3);
        }
        Ok(c)
    }
}
