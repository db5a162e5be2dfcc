//! Observability metrics over a trajectory.
//!
//! * Deterministic (E²LOG): each window contributes
//!   `Ã_n = O_nᵀ W₁ O_n`, the integral of `∇h_n(t)ᵀ ∇h_n(t)` over the window
//!   when the output gradient is replaced by its truncated Taylor series
//!   `∇h_n(t) = Σ_i tⁱ/i! ∇Lⁱ`.
//! * Stochastic: an information filter over the stacked error/noise vector
//!   `[e; w]` (33-dim). Each window adds `B̃_n = E_nᵀ O_nᵀ W₂ O_n E_n`, where
//!   `W₂` sums the Taylor monomials at the discrete measurement times and
//!   `E_n = [I | √H Φ G]` injects process noise at the window start; the
//!   result is then moved to the next window start with
//!   `Φ_ext⁻ᵀ (·) Φ_ext⁻¹`, `Φ_ext = blockdiag(Φ, I₁₂)`.
//!
//! All scalarizations are returned as costs to be minimized.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use crate::lie::{LieEngine, ObservabilityMatrix};
use crate::spline::UniformSpline;
use crate::system::{
    idx, motion_jacobian, noise_jacobian, quat_to_rotation, skew, AugmentedState, ExtrinsicParams,
    KinematicInput, StateMatrix, MEAS_DIM, NOISE_DIM, STATE_DIM,
};
use crate::{Error, Result};

/// Dimension of the stacked `[e; w]` vector used by the stochastic metric.
pub const JOINT_DIM: usize = STATE_DIM + NOISE_DIM;

const TIME_TOL: f64 = 1e-9;

/// One metric window `[start, start + horizon)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start: f64,
    pub horizon: f64,
    /// Measurement times relative to `start`, in `[0, horizon)`.
    pub meas_times: Vec<f64>,
    pub imu_dt: f64,
}

fn is_multiple(a: f64, b: f64) -> Option<usize> {
    let n = (a / b).round();
    ((a - n * b).abs() <= TIME_TOL * a.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

impl WindowSpec {
    /// Window with measurements every `meas_dt` starting at the window start.
    pub fn new(start: f64, horizon: f64, meas_dt: f64, imu_dt: f64) -> Result<Self> {
        if !(meas_dt > 0.0) {
            return Err(Error::InvalidArgument(format!("measurement period must be positive, got {meas_dt}")));
        }
        let count = is_multiple(horizon, meas_dt).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "window length {horizon} is not a positive multiple of the measurement period {meas_dt}"
            ))
        })?;
        let w = Self {
            start,
            horizon,
            meas_times: (0..count).map(|k| k as f64 * meas_dt).collect(),
            imu_dt,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.start.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid window length {}", self.horizon)));
        }
        if !(self.imu_dt > 0.0) || is_multiple(self.horizon, self.imu_dt).is_none() {
            return Err(Error::InvalidArgument(format!(
                "IMU period {} does not divide the window length {}",
                self.imu_dt, self.horizon
            )));
        }
        if self.meas_times.iter().any(|t| !(*t >= 0.0 && *t < self.horizon)) {
            return Err(Error::InvalidArgument("measurement times must lie in [0, H)".into()));
        }
        if self.meas_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("measurement times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon
    }

    /// Number of IMU steps in the window.
    pub fn imu_steps(&self) -> usize {
        is_multiple(self.horizon, self.imu_dt).unwrap_or(1)
    }
}

/// Consecutive windows tiling `span`.
pub fn tile_windows(span: (f64, f64), horizon: f64, meas_dt: f64, imu_dt: f64) -> Result<Vec<WindowSpec>> {
    let len = span.1 - span.0;
    let n = is_multiple(len, horizon).ok_or_else(|| {
        Error::InvalidArgument(format!("span length {len} is not a multiple of the window length {horizon}"))
    })?;
    (0..n)
        .map(|i| WindowSpec::new(span.0 + i as f64 * horizon, horizon, meas_dt, imu_dt))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Deterministic,
    Stochastic,
}

/// Accumulated metric matrix: `A_Ξ` (21×21) or `B_Ξ` (33×33).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAccumulator {
    pub kind: MetricKind,
    pub matrix: DMatrix<f64>,
    pub window_count: usize,
}

impl MetricAccumulator {
    pub fn deterministic() -> Self {
        Self {
            kind: MetricKind::Deterministic,
            matrix: DMatrix::zeros(STATE_DIM, STATE_DIM),
            window_count: 0,
        }
    }

    /// Error-state block (the whole matrix for the deterministic kind).
    pub fn state_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (STATE_DIM, STATE_DIM)).into_owned()
    }
}

/// Indices into the 21 error-state coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionSpec {
    pub indices: Vec<usize>,
}

impl SelectionSpec {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let s = Self { indices };
        s.validate()?;
        Ok(s)
    }

    pub fn extrinsic_translation() -> Self {
        Self {
            indices: (idx::P_IC..idx::P_IC + 3).collect(),
        }
    }

    pub fn extrinsics() -> Self {
        Self {
            indices: (idx::P_IC..idx::THETA_IC + 3).collect(),
        }
    }

    pub fn all() -> Self {
        Self {
            indices: (0..STATE_DIM).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::InvalidArgument("empty selection".into()));
        }
        if let Some(i) = self.indices.iter().find(|i| **i >= STATE_DIM) {
            return Err(Error::InvalidArgument(format!("selection index {i} out of range")));
        }
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.indices.len() {
            return Err(Error::InvalidArgument("duplicate selection index".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMode {
    Trace,
    MinSingularValue,
    ConditionNumber,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Expands an `(r+1)×(r+1)` scalar pattern into blocks of `I₆`.
fn kron_i6(coeff: impl Fn(usize, usize) -> f64, r: usize) -> DMatrix<f64> {
    let n = (r + 1) * MEAS_DIM;
    DMatrix::from_fn(n, n, |a, b| {
        if a % MEAS_DIM == b % MEAS_DIM {
            coeff(a / MEAS_DIM, b / MEAS_DIM)
        } else {
            0.0
        }
    })
}

/// Continuous-time weight: block `(i, j) = H^{i+j+1} / ((i+j+1) i! j!) I₆`.
pub fn weight_w1(h: f64, r: usize) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("window length must be positive, got {h}")));
    }
    Ok(kron_i6(
        |i, j| {
            let p = i + j + 1;
            h.powi(p as i32) / (p as f64 * factorial(i) * factorial(j))
        },
        r,
    ))
}

/// Discrete-time weight: block `(i, j) = Σ_k t_k^{i+j} / (i! j!) I₆`, `0⁰ = 1`.
pub fn weight_w2(meas_times: &[f64], r: usize) -> Result<DMatrix<f64>> {
    if meas_times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument("measurement times must be non-negative".into()));
    }
    Ok(kron_i6(
        |i, j| {
            let s: f64 = meas_times.iter().map(|t| t.powi((i + j) as i32)).sum();
            s / (factorial(i) * factorial(j))
        },
        r,
    ))
}

fn check_weight(o: &ObservabilityMatrix, w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != o.rows.nrows() {
        return Err(Error::InvalidArgument(format!(
            "weight of size {} does not match observability matrix with {} rows",
            w.nrows(),
            o.rows.nrows()
        )));
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `Ã_n = O_nᵀ W₁ O_n`.
pub fn e2log_window(o: &ObservabilityMatrix, h: f64) -> Result<DMatrix<f64>> {
    let w1 = weight_w1(h, o.order)?;
    check_weight(o, &w1)?;
    let mut a = o.rows.transpose() * &w1 * &o.rows;
    symmetrize(&mut a);
    Ok(a)
}

/// Augmented state and kinematic input on the spline at `t`.
pub fn state_on(
    traj: &UniformSpline,
    t: f64,
    engine: &LieEngine,
    extrinsics: &ExtrinsicParams,
) -> Result<(AugmentedState, KinematicInput)> {
    let (vehicle, u) = traj.state_at(t, &engine.gravity)?;
    Ok((AugmentedState::new(vehicle, *extrinsics), u))
}

fn check_window_in_span(traj: &UniformSpline, w: &WindowSpec) -> Result<()> {
    w.validate()?;
    let (start, end) = traj.span();
    if w.start < start - TIME_TOL || w.end() > end + TIME_TOL {
        return Err(Error::OutOfSpan { t: w.start, start, end });
    }
    Ok(())
}

/// `A_Ξ = Σ_n Ã_n` with each window evaluated at its start.
pub fn e2log_trajectory(
    traj: &UniformSpline,
    windows: &[WindowSpec],
    engine: &LieEngine,
    extrinsics: &ExtrinsicParams,
) -> Result<MetricAccumulator> {
    let mut acc = MetricAccumulator::deterministic();
    for w in windows {
        check_window_in_span(traj, w)?;
        let (s, u) = state_on(traj, w.start, engine, extrinsics)?;
        let o = engine.observability_matrix(&s, &u)?;
        acc.matrix += e2log_window(&o, w.horizon)?;
        acc.window_count += 1;
    }
    Ok(acc)
}

/// `Φ ← (I + dt F) Φ` exploiting the block sparsity of the motion Jacobian.
fn step_transition(phi: &mut StateMatrix, s: &AugmentedState, u: &KinematicInput, dt: f64, gravity: &nalgebra::Vector3<f64>) {
    let r = quat_to_rotation(&s.vehicle.q_wi);
    let a = skew(&(u.a_w - gravity));
    let rows = |m: &StateMatrix, i: usize| m.fixed_rows::<3>(i).into_owned();
    let d_p = rows(phi, idx::V);
    let d_theta = -r * rows(phi, idx::BG);
    let d_v: SMatrix<f64, 3, STATE_DIM> = -a * rows(phi, idx::THETA) - r * rows(phi, idx::BA);
    let mut add = |i: usize, d: SMatrix<f64, 3, STATE_DIM>| {
        let mut blk = phi.fixed_rows_mut::<3>(i);
        blk += d * dt;
    };
    add(idx::P, d_p);
    add(idx::THETA, d_theta);
    add(idx::V, d_v);
}

/// Ordered product `F̃_{K-1} ⋯ F̃_0` of the discrete transitions
/// `F̃_k = I + imu_dt F(t̄ + k imu_dt)` along the true trajectory.
pub fn state_transition_product(
    traj: &UniformSpline,
    window: &WindowSpec,
    engine: &LieEngine,
    extrinsics: &ExtrinsicParams,
) -> Result<StateMatrix> {
    check_window_in_span(traj, window)?;
    let mut phi = StateMatrix::identity();
    for k in 0..window.imu_steps() {
        let t = window.start + k as f64 * window.imu_dt;
        let (s, u) = state_on(traj, t, engine, extrinsics)?;
        step_transition(&mut phi, &s, &u, window.imu_dt, &engine.gravity);
    }
    Ok(phi)
}

/// Ordered product of `I + dt F_k` for explicit continuous Jacobians.
pub fn transition_from_jacobians(f: &[StateMatrix], dt: f64) -> StateMatrix {
    f.iter()
        .fold(StateMatrix::identity(), |phi, fk| (StateMatrix::identity() + fk * dt) * phi)
}

/// `E_n = [I₂₁ | √H Φ G]`, 21×33.
pub fn noise_injection(phi: &StateMatrix, g: &SMatrix<f64, STATE_DIM, NOISE_DIM>, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("window length must be positive, got {h}")));
    }
    let mut e = DMatrix::zeros(STATE_DIM, JOINT_DIM);
    e.view_mut((0, 0), (STATE_DIM, STATE_DIM))
        .fill_with_identity();
    e.view_mut((0, STATE_DIM), (STATE_DIM, NOISE_DIM))
        .copy_from(&(phi * g * h.sqrt()));
    Ok(e)
}

/// `B̃_n = E_nᵀ O_nᵀ W₂ O_n E_n`, 33×33.
pub fn stochastic_window(o: &ObservabilityMatrix, e: &DMatrix<f64>, w2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_weight(o, w2)?;
    if e.nrows() != STATE_DIM || e.ncols() != JOINT_DIM {
        return Err(Error::InvalidArgument(format!(
            "noise injection must be {STATE_DIM}x{JOINT_DIM}, got {}x{}",
            e.nrows(),
            e.ncols()
        )));
    }
    let oe = &o.rows * e;
    let mut b = oe.transpose() * w2 * &oe;
    symmetrize(&mut b);
    Ok(b)
}

/// Relative singular-value floor below which a transition is singular.
const SINGULAR_RCOND: f64 = 1e-12;

/// `B_{n+1} = Φ_ext⁻ᵀ (B_n + B̃) Φ_ext⁻¹`.
pub fn stochastic_propagate(b: &DMatrix<f64>, b_tilde: &DMatrix<f64>, phi: &StateMatrix) -> Result<DMatrix<f64>> {
    for m in [b, b_tilde] {
        if m.nrows() != JOINT_DIM || m.ncols() != JOINT_DIM {
            return Err(Error::InvalidArgument(format!(
                "information matrix must be {JOINT_DIM}x{JOINT_DIM}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let sv = phi.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > SINGULAR_RCOND * max) {
        return Err(Error::SingularTransition { condition: max / min });
    }
    let phi_inv = phi
        .try_inverse()
        .ok_or(Error::SingularTransition { condition: f64::INFINITY })?;
    let mut inv_ext = DMatrix::identity(JOINT_DIM, JOINT_DIM);
    inv_ext
        .view_mut((0, 0), (STATE_DIM, STATE_DIM))
        .copy_from(&phi_inv);
    let mut out = inv_ext.transpose() * (b + b_tilde) * inv_ext;
    symmetrize(&mut out);
    Ok(out)
}

/// `blockdiag(P0⁻¹, I₁₂)`.
pub fn initial_information(p0: &StateMatrix) -> Result<DMatrix<f64>> {
    let sym = (p0 - p0.transpose()).abs().max();
    if sym > 1e-9 * p0.abs().max().max(1.0) {
        return Err(Error::InvalidArgument("initial covariance is not symmetric".into()));
    }
    let chol = p0
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("initial covariance is not positive definite".into()))?;
    let mut b = DMatrix::identity(JOINT_DIM, JOINT_DIM);
    b.view_mut((0, 0), (STATE_DIM, STATE_DIM))
        .copy_from(&chol.inverse());
    Ok(b)
}

/// Information matrix `B_Ξ` after all windows.
pub fn stochastic_trajectory(
    traj: &UniformSpline,
    windows: &[WindowSpec],
    p0: &StateMatrix,
    engine: &LieEngine,
    extrinsics: &ExtrinsicParams,
) -> Result<MetricAccumulator> {
    let mut b = initial_information(p0)?;
    for w in windows {
        check_window_in_span(traj, w)?;
        let (s, u) = state_on(traj, w.start, engine, extrinsics)?;
        let o = engine.observability_matrix(&s, &u)?;
        let phi = state_transition_product(traj, w, engine, extrinsics)?;
        let e = noise_injection(&phi, &noise_jacobian(&s), w.horizon)?;
        let w2 = weight_w2(&w.meas_times, o.order)?;
        let b_tilde = stochastic_window(&o, &e, &w2)?;
        b = stochastic_propagate(&b, &b_tilde, &phi)?;
    }
    Ok(MetricAccumulator {
        kind: MetricKind::Stochastic,
        matrix: b,
        window_count: windows.len(),
    })
}

/// Scalar cost (lower is better) from an accumulated metric.
pub fn scalarize(acc: &MetricAccumulator, sel: &SelectionSpec, mode: ScalarMode) -> Result<f64> {
    sel.validate()?;
    let n = sel.indices.len();
    let sub = DMatrix::from_fn(n, n, |a, b| acc.matrix[(sel.indices[a], sel.indices[b])]);
    match mode {
        ScalarMode::Trace => Ok(-sub.trace()),
        ScalarMode::MinSingularValue => Ok(-sub.singular_values().min()),
        ScalarMode::ConditionNumber => {
            let sv = sub.singular_values();
            let (max, min) = (sv.max(), sv.min());
            if min <= 0.0 {
                Ok(f64::INFINITY)
            } else {
                Ok(max / min)
            }
        }
    }
}

/// Default initial covariance: diagonal with (0.1 m)² position, (5°)²
/// attitude, (0.1 m/s)² velocity, (0.01)² biases, (0.05 m)² extrinsic
/// translation and (5°)² extrinsic rotation.
pub fn default_p0() -> StateMatrix {
    let deg5 = 5f64.to_radians();
    let sig = [0.1, deg5, 0.1, 0.01, 0.01, 0.05, deg5];
    let mut p = StateMatrix::zeros();
    for (b, s) in sig.iter().enumerate() {
        for i in 0..3 {
            p[(3 * b + i, 3 * b + i)] = s * s;
        }
    }
    p
}

/// Continuous motion Jacobians sampled along a window, mainly for tests.
pub fn window_jacobians(
    traj: &UniformSpline,
    window: &WindowSpec,
    engine: &LieEngine,
    extrinsics: &ExtrinsicParams,
) -> Result<Vec<StateMatrix>> {
    (0..window.imu_steps())
        .map(|k| {
            let t = window.start + k as f64 * window.imu_dt;
            let (s, u) = state_on(traj, t, engine, extrinsics)?;
            Ok(motion_jacobian(&s, &u, &engine.gravity))
        })
        .collect()
}
