//! Rigid-body system model: state and parameter types, continuous dynamics,
//! IMU and pose measurement models, and error-state Jacobians.
//!
//! # Conventions
//!
//! - Quaternions are Hamilton, scalar-first `(w, x, y, z)`. `q_WI` rotates
//!   vectors from the IMU frame into the world frame.
//! - Attitude errors are left (world-frame) perturbations:
//!   `q = Exp(dtheta) ⊗ q_hat`. The extrinsic rotation uses the same form.
//! - Minimal error-state layout (21): position, attitude, velocity,
//!   gyro bias, accel bias, extrinsic translation, extrinsic rotation.
//! - Noise layout (12): `n_g, n_a, n_gw, n_aw`.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Dimension of the minimal error state.
pub const STATE_DIM: usize = 21;
/// Dimension of the process-noise vector.
pub const NOISE_DIM: usize = 12;
/// Dimension of the pose residual.
pub const MEAS_DIM: usize = 6;

pub type ErrorVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type NoiseMatrix = SMatrix<f64, STATE_DIM, NOISE_DIM>;
pub type MeasMatrix = SMatrix<f64, MEAS_DIM, STATE_DIM>;

/// Offsets of each block inside the 21-dim error state.
pub mod idx {
    pub const P: usize = 0;
    pub const THETA: usize = 3;
    pub const V: usize = 6;
    pub const BG: usize = 9;
    pub const BA: usize = 12;
    pub const P_IC: usize = 15;
    pub const THETA_IC: usize = 18;

    pub const N_G: usize = 0;
    pub const N_A: usize = 3;
    pub const N_GW: usize = 6;
    pub const N_AW: usize = 9;
}

pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Unit quaternion, Hamilton convention, scalar first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Rotation-vector exponential.
    pub fn exp(phi: &Vector3<f64>) -> Self {
        let angle = phi.norm();
        if angle < 1e-12 {
            return Self::new(1.0, 0.5 * phi.x, 0.5 * phi.y, 0.5 * phi.z);
        }
        let s = (0.5 * angle).sin() / angle;
        Self {
            w: (0.5 * angle).cos(),
            x: s * phi.x,
            y: s * phi.y,
            z: s * phi.z,
        }
    }

    /// Rotation-vector logarithm, angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.canonical();
        let v = Vector3::new(q.x, q.y, q.z);
        let n = v.norm();
        if n < 1e-12 {
            return v * 2.0;
        }
        v * (2.0 * n.atan2(q.w) / n)
    }

    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Representative with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            *self
        }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        quat_to_rotation(self) * v
    }

    /// Rotation angle between `self` and `other`, in `[0, π]`.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        quat_multiply(self, &other.conjugate()).log().norm()
    }

    /// Shepperd's method.
    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let tr = r.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Self {
                w: 0.25 * s,
                x: (r[(2, 1)] - r[(1, 2)]) / s,
                y: (r[(0, 2)] - r[(2, 0)]) / s,
                z: (r[(1, 0)] - r[(0, 1)]) / s,
            }
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            Self {
                w: (r[(2, 1)] - r[(1, 2)]) / s,
                x: 0.25 * s,
                y: (r[(0, 1)] + r[(1, 0)]) / s,
                z: (r[(0, 2)] + r[(2, 0)]) / s,
            }
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            Self {
                w: (r[(0, 2)] - r[(2, 0)]) / s,
                x: (r[(0, 1)] + r[(1, 0)]) / s,
                y: 0.25 * s,
                z: (r[(1, 2)] + r[(2, 1)]) / s,
            }
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            Self {
                w: (r[(1, 0)] - r[(0, 1)]) / s,
                x: (r[(0, 2)] + r[(2, 0)]) / s,
                y: (r[(1, 2)] + r[(2, 1)]) / s,
                z: 0.25 * s,
            }
        };
        q.normalized().canonical()
    }
}

/// Hamilton product `q1 ⊗ q2`.
pub fn quat_multiply(q1: &Quaternion, q2: &Quaternion) -> Quaternion {
    let q = Quaternion {
        w: q1.w * q2.w - q1.x * q2.x - q1.y * q2.y - q1.z * q2.z,
        x: q1.w * q2.x + q1.x * q2.w + q1.y * q2.z - q1.z * q2.y,
        y: q1.w * q2.y - q1.x * q2.z + q1.y * q2.w + q1.z * q2.x,
        z: q1.w * q2.z + q1.x * q2.y - q1.y * q2.x + q1.z * q2.w,
    };
    if (q.norm() - 1.0).abs() > 1e-9 {
        q.normalized()
    } else {
        q
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_multiply(&self, &rhs)
    }
}

pub fn quat_to_rotation(q: &Quaternion) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Quaternion kinematic matrix: `q_dot = 0.5 * Ω(ω) q` for body rate `ω`.
pub fn omega_matrix(omega: &Vector3<f64>) -> Matrix4<f64> {
    let (a, b, c) = (omega.x, omega.y, omega.z);
    Matrix4::new(
        0.0, -a, -b, -c, //
        a, 0.0, c, -b, //
        b, -c, 0.0, a, //
        c, b, -a, 0.0,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p_wi: Vector3<f64>,
    pub q_wi: Quaternion,
    pub v_w: Vector3<f64>,
    pub b_g: Vector3<f64>,
    pub b_a: Vector3<f64>,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            p_wi: Vector3::zeros(),
            q_wi: Quaternion::identity(),
            v_w: Vector3::zeros(),
            b_g: Vector3::zeros(),
            b_a: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicParams {
    pub p_ic: Vector3<f64>,
    pub q_ic: Quaternion,
}

impl Default for ExtrinsicParams {
    fn default() -> Self {
        Self {
            p_ic: Vector3::zeros(),
            q_ic: Quaternion::identity(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub vehicle: VehicleState,
    pub extrinsics: ExtrinsicParams,
}

impl AugmentedState {
    pub fn new(vehicle: VehicleState, extrinsics: ExtrinsicParams) -> Self {
        Self {
            vehicle,
            extrinsics,
        }
    }

    pub fn is_finite(&self) -> bool {
        let v = &self.vehicle;
        let e = &self.extrinsics;
        [v.p_wi, v.v_w, v.b_g, v.b_a, e.p_ic]
            .iter()
            .all(|x| x.iter().all(|c| c.is_finite()))
            && v.q_wi.as_vector4().iter().all(|c| c.is_finite())
            && e.q_ic.as_vector4().iter().all(|c| c.is_finite())
    }

    /// `self ⊞ delta` in minimal error coordinates.
    pub fn boxplus(&self, delta: &ErrorVector) -> Self {
        let seg = |i: usize| Vector3::new(delta[i], delta[i + 1], delta[i + 2]);
        let v = &self.vehicle;
        let e = &self.extrinsics;
        Self {
            vehicle: VehicleState {
                p_wi: v.p_wi + seg(idx::P),
                q_wi: Quaternion::exp(&seg(idx::THETA)) * v.q_wi,
                v_w: v.v_w + seg(idx::V),
                b_g: v.b_g + seg(idx::BG),
                b_a: v.b_a + seg(idx::BA),
            },
            extrinsics: ExtrinsicParams {
                p_ic: e.p_ic + seg(idx::P_IC),
                q_ic: Quaternion::exp(&seg(idx::THETA_IC)) * e.q_ic,
            },
        }
    }

    /// Error coordinates `delta` such that `nominal ⊞ delta = self`.
    pub fn boxminus(&self, nominal: &AugmentedState) -> ErrorVector {
        let mut d = ErrorVector::zeros();
        let (a, b) = (&self.vehicle, &nominal.vehicle);
        let (ea, eb) = (&self.extrinsics, &nominal.extrinsics);
        d.fixed_rows_mut::<3>(idx::P).copy_from(&(a.p_wi - b.p_wi));
        d.fixed_rows_mut::<3>(idx::THETA)
            .copy_from(&(a.q_wi * b.q_wi.conjugate()).log());
        d.fixed_rows_mut::<3>(idx::V).copy_from(&(a.v_w - b.v_w));
        d.fixed_rows_mut::<3>(idx::BG).copy_from(&(a.b_g - b.b_g));
        d.fixed_rows_mut::<3>(idx::BA).copy_from(&(a.b_a - b.b_a));
        d.fixed_rows_mut::<3>(idx::P_IC)
            .copy_from(&(ea.p_ic - eb.p_ic));
        d.fixed_rows_mut::<3>(idx::THETA_IC)
            .copy_from(&(ea.q_ic * eb.q_ic.conjugate()).log());
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSignal {
    pub omega_m: Vector3<f64>,
    pub a_m: Vector3<f64>,
    pub t: f64,
}

/// True body angular velocity and world-frame acceleration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicInput {
    pub omega_i: Vector3<f64>,
    pub a_w: Vector3<f64>,
}

/// Noise-free IMU reading used as the constant input of the error-state model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuInput {
    pub omega_m: Vector3<f64>,
    pub a_m: Vector3<f64>,
}

impl ImuInput {
    /// IMU reading the state `s` would produce under `u`, without noise.
    pub fn from_kinematic(s: &AugmentedState, u: &KinematicInput, gravity: &Vector3<f64>) -> Self {
        let r = quat_to_rotation(&s.vehicle.q_wi);
        Self {
            omega_m: u.omega_i + s.vehicle.b_g,
            a_m: r.transpose() * (u.a_w - gravity) + s.vehicle.b_a,
        }
    }

    pub fn from_signal(m: &ImuSignal) -> Self {
        Self {
            omega_m: m.omega_m,
            a_m: m.a_m,
        }
    }
}

/// Noise densities and pose noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gyro white noise density [rad/s/√Hz].
    pub sigma_g: f64,
    /// Accelerometer white noise density [m/s²/√Hz].
    pub sigma_a: f64,
    /// Gyro bias random-walk density.
    pub sigma_gw: f64,
    /// Accelerometer bias random-walk density.
    pub sigma_aw: f64,
    /// Pose position noise std [m].
    pub sigma_p: f64,
    /// Pose attitude noise std [rad].
    pub sigma_q: f64,
    pub gravity: Vector3<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_g: 1.7e-4,
            sigma_a: 2e-3,
            sigma_gw: 2e-5,
            sigma_aw: 3e-3,
            sigma_p: 0.01,
            sigma_q: 0.2f64.to_radians(),
            gravity: default_gravity(),
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            sigma_g: 0.0,
            sigma_a: 0.0,
            sigma_gw: 0.0,
            sigma_aw: 0.0,
            sigma_p: 0.0,
            sigma_q: 0.0,
            gravity: default_gravity(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let s = [
            self.sigma_g,
            self.sigma_a,
            self.sigma_gw,
            self.sigma_aw,
            self.sigma_p,
            self.sigma_q,
        ];
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(crate::Error::InvalidArgument(
                "noise sigmas must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Continuous noise covariance in `(n_g, n_a, n_gw, n_aw)` order.
    pub fn process_covariance(&self) -> SMatrix<f64, NOISE_DIM, NOISE_DIM> {
        let mut q = SMatrix::<f64, NOISE_DIM, NOISE_DIM>::zeros();
        for (block, s) in [self.sigma_g, self.sigma_a, self.sigma_gw, self.sigma_aw]
            .iter()
            .enumerate()
        {
            for k in 0..3 {
                q[(3 * block + k, 3 * block + k)] = s * s;
            }
        }
        q
    }
}

/// Time derivative of an [`AugmentedState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub p_wi: Vector3<f64>,
    pub q_wi: Vector4<f64>,
    pub v_w: Vector3<f64>,
    pub b_g: Vector3<f64>,
    pub b_a: Vector3<f64>,
    pub p_ic: Vector3<f64>,
    pub q_ic: Vector4<f64>,
}

/// Noise-free mean dynamics driven by the true kinematic input.
pub fn continuous_dynamics(s: &AugmentedState, u: &KinematicInput) -> StateDerivative {
    StateDerivative {
        p_wi: s.vehicle.v_w,
        q_wi: 0.5 * omega_matrix(&u.omega_i) * s.vehicle.q_wi.as_vector4(),
        v_w: u.a_w,
        b_g: Vector3::zeros(),
        b_a: Vector3::zeros(),
        p_ic: Vector3::zeros(),
        q_ic: Vector4::zeros(),
    }
}

/// Gyro and accelerometer white-noise samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuNoise {
    pub n_g: Vector3<f64>,
    pub n_a: Vector3<f64>,
}

pub fn imu_measurement(
    s: &AugmentedState,
    u: &KinematicInput,
    noise: &ImuNoise,
    gravity: &Vector3<f64>,
    t: f64,
) -> ImuSignal {
    let clean = ImuInput::from_kinematic(s, u, gravity);
    ImuSignal {
        omega_m: clean.omega_m + noise.n_g,
        a_m: clean.a_m + noise.n_a,
        t,
    }
}

/// Camera position and orientation in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseMeasurement {
    pub h1: Vector3<f64>,
    pub h2: Quaternion,
}

pub fn pose_measurement(s: &AugmentedState) -> PoseMeasurement {
    let v = &s.vehicle;
    let e = &s.extrinsics;
    PoseMeasurement {
        h1: v.p_wi + v.q_wi.rotate(&e.p_ic),
        h2: v.q_wi * e.q_ic,
    }
}

/// Recovers the IMU pose `(p_WI, q_WI)` from a camera pose and extrinsics.
pub fn invert_pose_measurement(
    z: &PoseMeasurement,
    extrinsics: &ExtrinsicParams,
) -> (Vector3<f64>, Quaternion) {
    let q_wi = z.h2 * extrinsics.q_ic.conjugate();
    let p_wi = z.h1 - q_wi.rotate(&extrinsics.p_ic);
    (p_wi, q_wi)
}

/// 6-dim residual `[z.h1 - h1(s); Log(z.h2 ⊗ h2(s)⁻¹)]`.
pub fn pose_residual(z: &PoseMeasurement, s: &AugmentedState) -> SVector<f64, MEAS_DIM> {
    let pred = pose_measurement(s);
    let dp = z.h1 - pred.h1;
    let dq = (z.h2 * pred.h2.conjugate()).log();
    SVector::<f64, MEAS_DIM>::new(dp.x, dp.y, dp.z, dq.x, dq.y, dq.z)
}

/// Error-state Jacobians at one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStateJacobians {
    /// Continuous motion Jacobian.
    pub f: StateMatrix,
    /// Continuous noise Jacobian.
    pub g: NoiseMatrix,
    /// Pose-residual Jacobian.
    pub h: MeasMatrix,
    /// `I + dt F`.
    pub f_disc: StateMatrix,
    /// `sqrt(dt) G`.
    pub g_disc: NoiseMatrix,
}

/// Continuous motion Jacobian of the IMU-driven error dynamics.
pub fn motion_jacobian(s: &AugmentedState, u: &KinematicInput, gravity: &Vector3<f64>) -> StateMatrix {
    let r = quat_to_rotation(&s.vehicle.q_wi);
    let specific = u.a_w - gravity;
    let mut f = StateMatrix::zeros();
    f.fixed_view_mut::<3, 3>(idx::P, idx::V)
        .copy_from(&Matrix3::identity());
    f.fixed_view_mut::<3, 3>(idx::THETA, idx::BG).copy_from(&(-r));
    f.fixed_view_mut::<3, 3>(idx::V, idx::THETA)
        .copy_from(&(-skew(&specific)));
    f.fixed_view_mut::<3, 3>(idx::V, idx::BA).copy_from(&(-r));
    f
}

pub fn noise_jacobian(s: &AugmentedState) -> NoiseMatrix {
    let r = quat_to_rotation(&s.vehicle.q_wi);
    let mut g = NoiseMatrix::zeros();
    g.fixed_view_mut::<3, 3>(idx::THETA, idx::N_G).copy_from(&(-r));
    g.fixed_view_mut::<3, 3>(idx::V, idx::N_A).copy_from(&(-r));
    g.fixed_view_mut::<3, 3>(idx::BG, idx::N_GW)
        .copy_from(&Matrix3::identity());
    g.fixed_view_mut::<3, 3>(idx::BA, idx::N_AW)
        .copy_from(&Matrix3::identity());
    g
}

pub fn measurement_jacobian(s: &AugmentedState) -> MeasMatrix {
    let r = quat_to_rotation(&s.vehicle.q_wi);
    let rp = r * s.extrinsics.p_ic;
    let mut h = MeasMatrix::zeros();
    h.fixed_view_mut::<3, 3>(0, idx::P)
        .copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(0, idx::THETA).copy_from(&(-skew(&rp)));
    h.fixed_view_mut::<3, 3>(0, idx::P_IC).copy_from(&r);
    h.fixed_view_mut::<3, 3>(3, idx::THETA)
        .copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(3, idx::THETA_IC).copy_from(&r);
    h
}

/// Continuous and discrete error-state Jacobians. The motion model is the
/// IMU-driven one (`ω = ω_m - b_g - n_g`, `a = R(a_m - b_a - n_a) + g`)
/// with the IMU reading implied by `u` at `s`.
pub fn error_state_jacobians(
    s: &AugmentedState,
    u: &KinematicInput,
    dt: f64,
    gravity: &Vector3<f64>,
) -> crate::Result<ErrorStateJacobians> {
    if !(dt > 0.0) {
        return Err(crate::Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let f = motion_jacobian(s, u, gravity);
    let g = noise_jacobian(s);
    let h = measurement_jacobian(s);
    Ok(ErrorStateJacobians {
        f_disc: StateMatrix::identity() + f * dt,
        g_disc: g * dt.sqrt(),
        f,
        g,
        h,
    })
}

/// Tangent of the IMU-driven dynamics in minimal coordinates.
pub fn tangent_dynamics(s: &AugmentedState, imu: &ImuInput, gravity: &Vector3<f64>) -> ErrorVector {
    let v = &s.vehicle;
    let r = quat_to_rotation(&v.q_wi);
    let mut d = ErrorVector::zeros();
    d.fixed_rows_mut::<3>(idx::P).copy_from(&v.v_w);
    d.fixed_rows_mut::<3>(idx::THETA)
        .copy_from(&(r * (imu.omega_m - v.b_g)));
    d.fixed_rows_mut::<3>(idx::V)
        .copy_from(&(r * (imu.a_m - v.b_a) + gravity));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn rot_z(angle: f64) -> Quaternion {
        Quaternion::from_axis_angle(&Vector3::z(), angle)
    }

    #[test]
    fn multiply_identity_and_inverse() {
        let q = Quaternion::new(0.3, -0.2, 0.8, 0.1);
        assert_eq!(Quaternion::identity() * q, q);
        let e = q * q.conjugate();
        assert_relative_eq!(e.w, 1.0, epsilon = 1e-15);
        assert!(e.vec().norm() < 1e-15);
    }

    #[test]
    fn ninety_plus_ninety_about_z() {
        let q = rot_z(PI / 2.0) * rot_z(PI / 2.0);
        // Oracle: compose rotation matrices and read the half-turn back.
        let r = quat_to_rotation(&rot_z(PI / 2.0)) * quat_to_rotation(&rot_z(PI / 2.0));
        let expected = Quaternion::from_rotation(&r);
        assert!(q.w.abs() < 1e-12);
        assert_relative_eq!(q.z, 1.0, epsilon = 1e-12);
        assert!(q.angle_to(&expected) < 1e-9);
    }

    #[test]
    fn rotation_matrix_cases() {
        assert_relative_eq!(quat_to_rotation(&Quaternion::identity()), Matrix3::identity());
        let rx = quat_to_rotation(&Quaternion::from_axis_angle(&Vector3::x(), PI));
        assert_relative_eq!(rx, Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)), epsilon = 1e-15);
        let r = quat_to_rotation(&Quaternion::new(0.4, 0.1, -0.7, 0.3));
        assert_relative_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn omega_matrix_is_skew() {
        let w = Vector3::new(0.3, -1.2, 2.0);
        let m = omega_matrix(&w);
        assert_eq!(m + m.transpose(), Matrix4::zeros());
        assert_eq!(omega_matrix(&Vector3::zeros()), Matrix4::zeros());
    }

    #[test]
    fn omega_kinematics_integrates_half_turn() {
        // RK4 on q_dot = 0.5 Ω(ω) q, ω = (0, 0, π), 1 s.
        let om = 0.5 * omega_matrix(&Vector3::new(0.0, 0.0, PI));
        let mut q = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let h = 1e-3;
        for _ in 0..1000 {
            let k1 = om * q;
            let k2 = om * (q + 0.5 * h * k1);
            let k3 = om * (q + 0.5 * h * k2);
            let k4 = om * (q + h * k3);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        // Closed form: axis-angle (z, π) -> (0, 0, 0, 1).
        assert!((q - Vector4::new(0.0, 0.0, 0.0, 1.0)).norm() < 1e-6);
    }

    #[test]
    fn dynamics_cases() {
        let mut s = AugmentedState::default();
        let d = continuous_dynamics(&s, &KinematicInput::default());
        assert_eq!(d.p_wi, Vector3::zeros());
        assert_eq!(d.q_wi, Vector4::zeros());
        assert_eq!(d.v_w, Vector3::zeros());
        s.vehicle.v_w = Vector3::x();
        s.vehicle.b_g = Vector3::new(1.0, 2.0, 3.0);
        let u = KinematicInput {
            omega_i: Vector3::new(4.0, 5.0, 6.0),
            a_w: Vector3::new(-1.0, 0.5, 2.0),
        };
        let d = continuous_dynamics(&s, &u);
        assert_eq!(d.p_wi, Vector3::x());
        assert_eq!(d.b_g, Vector3::zeros());
        assert_eq!(d.b_a, Vector3::zeros());
    }

    #[test]
    fn imu_measurement_cases() {
        let g = default_gravity();
        let mut s = AugmentedState::default();
        let u = KinematicInput::default();
        let m = imu_measurement(&s, &u, &ImuNoise::default(), &g, 0.0);
        assert_relative_eq!(m.a_m, Vector3::new(0.0, 0.0, 9.81));
        s.vehicle.b_g = Vector3::new(0.01, 0.0, 0.0);
        let m = imu_measurement(&s, &u, &ImuNoise::default(), &g, 0.0);
        assert_eq!(m.omega_m, Vector3::new(0.01, 0.0, 0.0));
        let mut s = AugmentedState::default();
        s.vehicle.q_wi = Quaternion::from_axis_angle(&Vector3::x(), PI);
        let m = imu_measurement(&s, &u, &ImuNoise::default(), &g, 0.0);
        assert_relative_eq!(m.a_m, Vector3::new(0.0, 0.0, -9.81), epsilon = 1e-12);
    }

    #[test]
    fn pose_measurement_cases() {
        let mut s = AugmentedState::default();
        s.extrinsics.p_ic = Vector3::new(0.1, 0.2, 0.3);
        s.extrinsics.q_ic = Quaternion::new(0.9, 0.1, 0.0, 0.2);
        let z = pose_measurement(&s);
        assert_eq!(z.h1, s.extrinsics.p_ic);
        assert_eq!(z.h2, s.extrinsics.q_ic);

        let mut s = AugmentedState::default();
        s.vehicle.p_wi = Vector3::new(1.0, 2.0, 3.0);
        s.vehicle.q_wi = Quaternion::new(0.9, 0.1, 0.0, 0.2);
        let z = pose_measurement(&s);
        assert_eq!(z.h1, s.vehicle.p_wi);
        assert_eq!(z.h2, s.vehicle.q_wi);

        let mut s = AugmentedState::default();
        s.vehicle.q_wi = rot_z(PI / 2.0);
        s.extrinsics.p_ic = Vector3::x();
        assert_relative_eq!(pose_measurement(&s).h1, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn boxplus_boxminus_round_trip() {
        let mut s = AugmentedState::default();
        s.vehicle.q_wi = Quaternion::new(0.5, 0.5, -0.1, 0.3);
        s.extrinsics.q_ic = Quaternion::new(0.9, 0.0, 0.2, 0.0);
        let d = ErrorVector::from_fn(|i, _| 0.01 * (i as f64 - 10.0));
        let back = s.boxplus(&d).boxminus(&s);
        assert_relative_eq!(back, d, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_structure() {
        let mut s = AugmentedState::default();
        s.vehicle.q_wi = Quaternion::new(0.9, 0.2, -0.3, 0.1);
        let u = KinematicInput {
            omega_i: Vector3::new(0.1, 0.2, 0.3),
            a_w: Vector3::new(1.0, -2.0, 0.5),
        };
        let j = error_state_jacobians(&s, &u, 0.01, &default_gravity()).unwrap();
        assert_eq!(j.f.fixed_view::<3, 3>(idx::P, idx::V), Matrix3::identity());
        for r in idx::BG..STATE_DIM {
            assert!(j.f.row(r).iter().all(|v| *v == 0.0));
        }
        assert_eq!(j.g.fixed_view::<3, 3>(idx::BG, idx::N_GW), Matrix3::identity());
        assert_eq!(j.g.fixed_view::<3, 3>(idx::BA, idx::N_AW), Matrix3::identity());
        assert_relative_eq!(j.f_disc, StateMatrix::identity() + 0.01 * j.f);
        assert_relative_eq!(j.g_disc, 0.1 * j.g, epsilon = 1e-15);
        assert!(error_state_jacobians(&s, &u, 0.0, &default_gravity()).is_err());
    }
}
