//! Lie derivatives of the pose measurement along the IMU-driven dynamics,
//! their exact gradients, and the nonlinear observability matrix.
//!
//! With the input held constant, the `i`-th Lie derivative of the output is
//! the `i`-th time derivative of the output along the flow of the dynamics.
//! We therefore integrate the state as a truncated Taylor series in time
//! (Taylor-mode ODE solve) and read `L^i = i! [t^i] y(x(t))`. Running the
//! same computation on [`Dual`] coefficients seeded along the 21 error-state
//! directions yields `∇L^i` to machine precision, with no nested
//! numerical differentiation.
//!
//! The attitude output is expressed in the chart `2 vec(h2 ⊗ c⁻¹)` centred at
//! the nominal camera attitude `c`. It has identity Jacobian at the centre,
//! so `∇L^0` coincides with the log-map residual Jacobian `H`.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3, Vector6};

use crate::jet::{Dual, Ring, Series};
use crate::system::{
    idx, pose_measurement, AugmentedState, ImuInput, KinematicInput, Quaternion, MEAS_DIM,
    STATE_DIM,
};
use crate::{Error, Result};

/// Highest supported Lie derivative order.
pub const MAX_ORDER: usize = 4;

pub type LieGradient = SMatrix<f64, MEAS_DIM, STATE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LieOrderConfig {
    pub max_order: usize,
    /// Finite-difference step used only by validation tooling.
    pub fd_step: f64,
}

impl Default for LieOrderConfig {
    fn default() -> Self {
        Self {
            max_order: 2,
            fd_step: 1e-6,
        }
    }
}

impl LieOrderConfig {
    pub fn with_order(max_order: usize) -> Self {
        Self {
            max_order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "Lie order {} above supported maximum {MAX_ORDER}",
                self.max_order
            )));
        }
        Ok(())
    }
}

/// Stacked Lie-derivative gradients at one evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityMatrix {
    /// `(order + 1) * 6` by 21, row blocks ordered by Lie order.
    pub rows: DMatrix<f64>,
    pub eval_point: AugmentedState,
    pub eval_input: KinematicInput,
    pub order: usize,
}

impl ObservabilityMatrix {
    pub fn block(&self, i: usize) -> LieGradient {
        self.rows.fixed_view::<MEAS_DIM, STATE_DIM>(i * MEAS_DIM, 0).into_owned()
    }
}

/// Scalars that can be seeded along an error-state coordinate.
trait Seed: Ring {
    fn seeded(v: f64, i: usize) -> Self;
}

impl Seed for f64 {
    #[inline]
    fn seeded(v: f64, _i: usize) -> Self {
        v
    }
}

impl Seed for Dual<STATE_DIM> {
    #[inline]
    fn seeded(v: f64, i: usize) -> Self {
        Dual::variable(v, i)
    }
}

#[derive(Clone, Copy)]
struct Quat<T> {
    w: T,
    x: T,
    y: T,
    z: T,
}

type V3<T> = [T; 3];

#[inline]
fn qmul<T: Ring>(a: &Quat<T>, b: &Quat<T>) -> Quat<T> {
    Quat {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    }
}

#[inline]
fn cross<T: Ring>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn add3<T: Ring>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `R(q) v = v + 2w (u × v) + 2 u × (u × v)` for unit `q`.
#[inline]
fn rotate<T: Ring>(q: &Quat<T>, v: &V3<T>) -> V3<T> {
    let u = [q.x, q.y, q.z];
    let uv = cross(&u, v);
    let uuv = cross(&u, &uv);
    [
        v[0] + (q.w * uv[0] + uuv[0]).scale(2.0),
        v[1] + (q.w * uv[1] + uuv[1]).scale(2.0),
        v[2] + (q.w * uv[2] + uuv[2]).scale(2.0),
    ]
}

fn const_quat<T: Ring>(q: &Quaternion) -> Quat<T> {
    Quat {
        w: T::constant(q.w),
        x: T::constant(q.x),
        y: T::constant(q.y),
        z: T::constant(q.z),
    }
}

fn const3<T: Ring>(v: &Vector3<f64>) -> V3<T> {
    [T::constant(v.x), T::constant(v.y), T::constant(v.z)]
}

#[derive(Clone, Copy)]
struct GState<T> {
    p: V3<T>,
    q: Quat<T>,
    v: V3<T>,
    bg: V3<T>,
    ba: V3<T>,
    pic: V3<T>,
    qic: Quat<T>,
}

fn seed3<T: Seed>(v: &Vector3<f64>, offset: usize) -> V3<T> {
    [
        T::seeded(v.x, offset),
        T::seeded(v.y, offset + 1),
        T::seeded(v.z, offset + 2),
    ]
}

/// `Exp(δθ) ⊗ q` to first order in `δθ`, seeded at `offset`.
fn seed_quat<T: Seed>(q: &Quaternion, offset: usize) -> Quat<T> {
    let d = Quat {
        w: T::constant(1.0),
        x: T::seeded(0.0, offset).scale(0.5),
        y: T::seeded(0.0, offset + 1).scale(0.5),
        z: T::seeded(0.0, offset + 2).scale(0.5),
    };
    qmul(&d, &const_quat(q))
}

fn seed_state<T: Seed>(s: &AugmentedState) -> GState<T> {
    let v = &s.vehicle;
    let e = &s.extrinsics;
    GState {
        p: seed3(&v.p_wi, idx::P),
        q: seed_quat(&v.q_wi, idx::THETA),
        v: seed3(&v.v_w, idx::V),
        bg: seed3(&v.b_g, idx::BG),
        ba: seed3(&v.b_a, idx::BA),
        pic: seed3(&e.p_ic, idx::P_IC),
        qic: seed_quat(&e.q_ic, idx::THETA_IC),
    }
}

/// Lift a state to series with only the constant coefficient set.
fn lift<T: Ring, const L: usize>(s: &GState<T>) -> GState<Series<T, L>> {
    let l3 = |a: &V3<T>| a.map(Series::from_constant);
    let lq = |q: &Quat<T>| Quat {
        w: Series::from_constant(q.w),
        x: Series::from_constant(q.x),
        y: Series::from_constant(q.y),
        z: Series::from_constant(q.z),
    };
    GState {
        p: l3(&s.p),
        q: lq(&s.q),
        v: l3(&s.v),
        bg: l3(&s.bg),
        ba: l3(&s.ba),
        pic: l3(&s.pic),
        qic: lq(&s.qic),
    }
}

/// Time derivative of the dynamic components `(p, q, v)`; all other
/// components are constant along the mean dynamics.
fn vector_field<T: Ring>(
    s: &GState<T>,
    imu: &ImuInput,
    gravity: &Vector3<f64>,
) -> (V3<T>, Quat<T>, V3<T>) {
    let om = const3::<T>(&imu.omega_m);
    let am = const3::<T>(&imu.a_m);
    let w = [om[0] - s.bg[0], om[1] - s.bg[1], om[2] - s.bg[2]];
    let pure = Quat {
        w: T::zero(),
        x: w[0],
        y: w[1],
        z: w[2],
    };
    let dq = qmul(&s.q, &pure);
    let dq = Quat {
        w: dq.w.scale(0.5),
        x: dq.x.scale(0.5),
        y: dq.y.scale(0.5),
        z: dq.z.scale(0.5),
    };
    let spec = [am[0] - s.ba[0], am[1] - s.ba[1], am[2] - s.ba[2]];
    let dv = add3(&rotate(&s.q, &spec), &const3(gravity));
    (s.v, dq, dv)
}

/// Output `[h1; 2 vec(h2 ⊗ center⁻¹)]`, with the chart sign fixed by `sign`.
fn output<T: Ring>(s: &GState<T>, center_inv: &Quat<T>, sign: f64) -> [T; MEAS_DIM] {
    let h1 = add3(&s.p, &rotate(&s.q, &s.pic));
    let h2 = qmul(&qmul(&s.q, &s.qic), center_inv);
    let k = 2.0 * sign;
    [h1[0], h1[1], h1[2], h2.x.scale(k), h2.y.scale(k), h2.z.scale(k)]
}

/// Taylor-mode solve of the flow to `L - 1` coefficients, then the output
/// series scaled by `i!` so entry `i` is `L^i`.
fn taylor_lie<T: Seed, const L: usize>(
    s: &AugmentedState,
    imu: &ImuInput,
    center: &Quaternion,
    gravity: &Vector3<f64>,
) -> [[T; MEAS_DIM]; L] {
    let x0 = seed_state::<T>(s);
    let mut x = lift::<T, L>(&x0);
    for m in 0..L - 1 {
        let (dp, dq, dv) = vector_field(&x, imu, gravity);
        let k = 1.0 / (m as f64 + 1.0);
        for a in 0..3 {
            x.p[a].c[m + 1] = dp[a].c[m].scale(k);
            x.v[a].c[m + 1] = dv[a].c[m].scale(k);
        }
        x.q.w.c[m + 1] = dq.w.c[m].scale(k);
        x.q.x.c[m + 1] = dq.x.c[m].scale(k);
        x.q.y.c[m + 1] = dq.y.c[m].scale(k);
        x.q.z.c[m + 1] = dq.z.c[m].scale(k);
    }
    let nominal = pose_measurement(s).h2 * center.conjugate();
    let sign = if nominal.w < 0.0 { -1.0 } else { 1.0 };
    let y = output(&x, &const_quat(&center.conjugate()), sign);
    let mut out = [[T::zero(); MEAS_DIM]; L];
    let mut fact = 1.0;
    for (i, row) in out.iter_mut().enumerate() {
        if i > 0 {
            fact *= i as f64;
        }
        for (r, yr) in row.iter_mut().zip(y.iter()) {
            *r = yr.c[i].scale(fact);
        }
    }
    out
}

fn lie_rows<T: Seed>(
    s: &AugmentedState,
    imu: &ImuInput,
    center: &Quaternion,
    gravity: &Vector3<f64>,
    order: usize,
) -> Vec<[T; MEAS_DIM]> {
    match order {
        0 => taylor_lie::<T, 1>(s, imu, center, gravity).to_vec(),
        1 => taylor_lie::<T, 2>(s, imu, center, gravity).to_vec(),
        2 => taylor_lie::<T, 3>(s, imu, center, gravity).to_vec(),
        3 => taylor_lie::<T, 4>(s, imu, center, gravity).to_vec(),
        4 => taylor_lie::<T, 5>(s, imu, center, gravity).to_vec(),
        _ => unreachable!("order validated by caller"),
    }
}

const BLOCK_NAMES: [&str; 7] = [
    "position",
    "attitude",
    "velocity",
    "gyro bias",
    "accel bias",
    "extrinsic translation",
    "extrinsic rotation",
];

/// Evaluates Lie derivatives and observability matrices for the pose
/// measurement model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LieEngine {
    pub config: LieOrderConfig,
    pub gravity: Vector3<f64>,
}

impl LieEngine {
    pub fn new(config: LieOrderConfig, gravity: Vector3<f64>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, gravity })
    }

    fn check_order(&self, i: usize) -> Result<()> {
        if i > self.config.max_order {
            return Err(Error::OrderExceeded {
                requested: i,
                max: self.config.max_order,
            });
        }
        Ok(())
    }

    /// `L^i(s, u)`, with the IMU input implied by `u` at `s` and the attitude
    /// chart centred at `s`'s own camera attitude.
    pub fn lie_derivative(&self, i: usize, s: &AugmentedState, u: &KinematicInput) -> Result<Vector6<f64>> {
        self.check_order(i)?;
        let imu = ImuInput::from_kinematic(s, u, &self.gravity);
        let center = pose_measurement(s).h2;
        Ok(self.derivatives_at(s, &imu, &center, i)[i])
    }

    /// `L^0 .. L^order` for an explicit IMU input and chart centre. Used when
    /// the operating point is perturbed while input and chart stay fixed.
    pub fn derivatives_at(
        &self,
        s: &AugmentedState,
        imu: &ImuInput,
        center: &Quaternion,
        order: usize,
    ) -> Vec<Vector6<f64>> {
        lie_rows::<f64>(s, imu, center, &self.gravity, order.min(MAX_ORDER))
            .into_iter()
            .map(Vector6::from)
            .collect()
    }

    /// Gradients of `L^0 .. L^order` with respect to the error state.
    pub fn gradients_at(
        &self,
        s: &AugmentedState,
        imu: &ImuInput,
        center: &Quaternion,
        order: usize,
    ) -> Vec<LieGradient> {
        lie_rows::<Dual<STATE_DIM>>(s, imu, center, &self.gravity, order.min(MAX_ORDER))
            .into_iter()
            .map(|row| LieGradient::from_fn(|r, c| row[r].eps[c]))
            .collect()
    }

    pub fn lie_gradient(&self, i: usize, s: &AugmentedState, u: &KinematicInput) -> Result<LieGradient> {
        self.check_order(i)?;
        let imu = ImuInput::from_kinematic(s, u, &self.gravity);
        let center = pose_measurement(s).h2;
        let g = self.gradients_at(s, &imu, &center, i).swap_remove(i);
        check_finite(&g, i)?;
        Ok(g)
    }

    pub fn observability_matrix(&self, s: &AugmentedState, u: &KinematicInput) -> Result<ObservabilityMatrix> {
        let r = self.config.max_order;
        let imu = ImuInput::from_kinematic(s, u, &self.gravity);
        let center = pose_measurement(s).h2;
        let grads = self.gradients_at(s, &imu, &center, r);
        let mut rows = DMatrix::zeros((r + 1) * MEAS_DIM, STATE_DIM);
        for (i, g) in grads.iter().enumerate() {
            check_finite(g, i)?;
            rows.view_mut((i * MEAS_DIM, 0), (MEAS_DIM, STATE_DIM)).copy_from(g);
        }
        Ok(ObservabilityMatrix {
            rows,
            eval_point: *s,
            eval_input: *u,
            order: r,
        })
    }
}

fn check_finite(g: &LieGradient, order: usize) -> Result<()> {
    for (b, name) in BLOCK_NAMES.iter().enumerate() {
        if g.columns(3 * b, 3).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: format!("gradient of L^{order}, {name} columns"),
            });
        }
    }
    Ok(())
}

/// Numerical rank, singular values, and null-space basis of an
/// observability matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Descending, length 21.
    pub singular_values: Vec<f64>,
    /// 21 x (21 - rank); columns are orthonormal.
    pub null_space: DMatrix<f64>,
}

impl RankReport {
    /// Rank of the null-space basis restricted to coordinates `range`.
    /// Equals 3 when every direction of a 3-dim block is unobservable
    /// (possibly in combination with other coordinates).
    pub fn null_rank_in(&self, range: std::ops::Range<usize>) -> usize {
        if self.null_space.ncols() == 0 {
            return 0;
        }
        let sub = self.null_space.rows(range.start, range.len()).into_owned();
        let svd = sub.svd(false, false);
        svd.singular_values.iter().filter(|s| **s > 1e-6).count()
    }
}

pub fn rank_diagnostic(o: &ObservabilityMatrix, threshold: f64) -> Result<RankReport> {
    rank_of(&o.rows, threshold)
}

/// Rank analysis of any matrix with 21 columns.
pub fn rank_of(m: &DMatrix<f64>, threshold: f64) -> Result<RankReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rank threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let n = m.ncols();
    // Pad to at least n rows so the SVD returns a full right basis.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let singular_values: Vec<f64> = order.iter().map(|i| svd.singular_values[*i]).collect();
    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let rank = if s_max > 0.0 {
        singular_values.iter().filter(|s| **s > threshold * s_max).count()
    } else {
        0
    };
    let null_idx = &order[rank..];
    let mut null_space = DMatrix::zeros(n, null_idx.len());
    for (c, i) in null_idx.iter().enumerate() {
        null_space.set_column(c, &DVector::from_iterator(n, v_t.row(*i).iter().copied()));
    }
    Ok(RankReport {
        rank,
        singular_values,
        null_space,
    })
}
