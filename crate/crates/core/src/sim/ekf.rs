//! Error-state EKF over the 21-dim augmented state.
//!
//! Propagation integrates the nominal state between consecutive IMU samples
//! (RK4 on cubic-interpolated readings) and the covariance with
//! `P ← F̃ P F̃ᵀ + dt G Q Gᵀ`. Pose updates use the log-map residual, the
//! Joseph form, and the reset Jacobian `I - ½[δθ]×` on both attitude blocks.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{PoseSample, SimulatedRun};
use crate::system::{
    idx, measurement_jacobian, motion_jacobian, noise_jacobian, omega_matrix, pose_residual, quat_to_rotation, skew,
    AugmentedState, ErrorVector, ExtrinsicParams, ImuSignal, KinematicInput, NoiseSpec, Quaternion,
    StateMatrix, MEAS_DIM,
};
use crate::{Error, Result};

/// Variance floor on the pose noise so zero-noise runs keep `S` invertible.
const R_FLOOR: f64 = 1e-10;
const PD_TOL: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfOptions {
    /// Check the smallest covariance eigenvalue at every pose update.
    pub check_definiteness: bool,
}

impl Default for EkfOptions {
    fn default() -> Self {
        Self {
            check_definiteness: true,
        }
    }
}

/// Extrinsic calibration error history of one filter run.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRunResult {
    /// Pose-update times.
    pub times: Vec<f64>,
    /// `p̂_IC - p_IC` after each update [m].
    pub trans_error: Vec<Vector3<f64>>,
    /// Angle between `q̂_IC` and `q_IC` after each update [rad].
    pub rot_error: Vec<f64>,
    /// Trace of the extrinsic-translation covariance block [m²].
    pub cov_trace: Vec<f64>,
    /// NEES of the 6-dim extrinsic error.
    pub nees_extrinsic: Vec<f64>,
    /// `Σ_k ‖p̂_IC(t_k) - p_IC‖²` over all updates [m²].
    pub sum_sq_error: f64,
    /// `‖p̂_IC - p_IC‖²` after the last update [m²].
    pub final_sq_error: f64,
    /// Filled by the caller when known.
    pub accel_cost: f64,
    pub knot_accel_cost: f64,
    pub seed: u64,
    pub final_state: AugmentedState,
    pub final_covariance: StateMatrix,
}

fn symmetrize(p: &mut StateMatrix) {
    *p = (*p + p.transpose()) * 0.5;
}

fn min_eigenvalue(p: &StateMatrix) -> f64 {
    p.symmetric_eigenvalues().min()
}

fn kinematic_estimate(s: &AugmentedState, m: &ImuSignal, g: &Vector3<f64>) -> KinematicInput {
    let r = quat_to_rotation(&s.vehicle.q_wi);
    KinematicInput {
        omega_i: m.omega_m - s.vehicle.b_g,
        a_w: r * (m.a_m - s.vehicle.b_a) + g,
    }
}

/// IMU reading at fraction `tau ∈ [0, 1]` of the interval starting at
/// sample `j`, by cubic Lagrange interpolation through the neighbouring
/// samples (quadratic or linear near the ends of the stream).
fn interpolate(imu: &[ImuSignal], j: usize, tau: f64) -> (Vector3<f64>, Vector3<f64>) {
    let lo = j.saturating_sub(1);
    let hi = (j + 2).min(imu.len() - 1);
    let nodes: Vec<f64> = (lo..=hi).map(|i| i as f64 - j as f64).collect();
    let mut w = Vector3::zeros();
    let mut a = Vector3::zeros();
    for (ni, i) in (lo..=hi).enumerate() {
        let mut l = 1.0;
        for (nk, xk) in nodes.iter().enumerate() {
            if nk != ni {
                l *= (tau - xk) / (nodes[ni] - xk);
            }
        }
        w += imu[i].omega_m * l;
        a += imu[i].a_m * l;
    }
    (w, a)
}

/// Nominal state propagation from sample `j` to `j + 1` (one RK4 step).
fn propagate_nominal(s: &AugmentedState, imu: &[ImuSignal], j: usize, g: &Vector3<f64>) -> AugmentedState {
    let dt = imu[j + 1].t - imu[j].t;
    let v = &s.vehicle;
    let input = |tau: f64| {
        let (w, a) = interpolate(imu, j, tau);
        (w - v.b_g, a - v.b_a)
    };
    // Derivative of (p, v, q) given the current value and the IMU input.
    let deriv = |vel: &Vector3<f64>, q: &nalgebra::Vector4<f64>, (w, a): (Vector3<f64>, Vector3<f64>)| {
        let acc = quat_to_rotation(&Quaternion::new(q[0], q[1], q[2], q[3])) * a + g;
        (*vel, acc, omega_matrix(&w) * q * 0.5)
    };
    let q0 = v.q_wi.as_vector4();
    let (u0, u1, u2) = (input(0.0), input(0.5), input(1.0));
    let k1 = deriv(&v.v_w, &q0, u0);
    let k2 = deriv(&(v.v_w + k1.1 * (dt / 2.0)), &(q0 + k1.2 * (dt / 2.0)), u1);
    let k3 = deriv(&(v.v_w + k2.1 * (dt / 2.0)), &(q0 + k2.2 * (dt / 2.0)), u1);
    let k4 = deriv(&(v.v_w + k3.1 * dt), &(q0 + k3.2 * dt), u2);
    let comb = |a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>| (a + (b + c) * 2.0 + d) * (dt / 6.0);
    let q1 = q0 + (k1.2 + (k2.2 + k3.2) * 2.0 + k4.2) * (dt / 6.0);
    let mut out = *s;
    out.vehicle.p_wi = v.p_wi + comb(k1.0, k2.0, k3.0, k4.0);
    out.vehicle.v_w = v.v_w + comb(k1.1, k2.1, k3.1, k4.1);
    out.vehicle.q_wi = Quaternion::new(q1[0], q1[1], q1[2], q1[3]);
    out
}

fn reset_jacobian(delta: &ErrorVector) -> StateMatrix {
    let mut j = StateMatrix::identity();
    for b in [idx::THETA, idx::THETA_IC] {
        let d = Vector3::new(delta[b], delta[b + 1], delta[b + 2]);
        j.fixed_view_mut::<3, 3>(b, b)
            .copy_from(&(Matrix3::identity() - skew(&d) * 0.5));
    }
    j
}

struct Filter {
    s: AugmentedState,
    p: StateMatrix,
    q: SMatrix<f64, 12, 12>,
    r: SMatrix<f64, MEAS_DIM, MEAS_DIM>,
    g: Vector3<f64>,
    check: bool,
}

impl Filter {
    fn propagate(&mut self, imu: &[ImuSignal], j: usize) {
        let dt = imu[j + 1].t - imu[j].t;
        if dt <= 0.0 {
            return;
        }
        let u = kinematic_estimate(&self.s, &imu[j], &self.g);
        let f = StateMatrix::identity() + motion_jacobian(&self.s, &u, &self.g) * dt;
        let gn = noise_jacobian(&self.s);
        self.p = f * self.p * f.transpose() + gn * self.q * gn.transpose() * dt;
        symmetrize(&mut self.p);
        self.s = propagate_nominal(&self.s, imu, j, &self.g);
    }

    fn update(&mut self, z: &PoseSample) -> Result<()> {
        let h = measurement_jacobian(&self.s);
        let res = pose_residual(&z.z, &self.s);
        let s_mat = h * self.p * h.transpose() + self.r;
        let s_inv = s_mat
            .cholesky()
            .ok_or(Error::CovarianceIndefinite {
                t: z.t,
                min_eig: f64::NAN,
            })?
            .inverse();
        let k = self.p * h.transpose() * s_inv;
        let delta: ErrorVector = k * res;
        let ikh = StateMatrix::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * self.r * k.transpose();
        self.s = self.s.boxplus(&delta);
        let j = reset_jacobian(&delta);
        self.p = j * self.p * j.transpose();
        symmetrize(&mut self.p);
        if self.check {
            let m = min_eigenvalue(&self.p);
            if m < PD_TOL {
                return Err(Error::CovarianceIndefinite { t: z.t, min_eig: m });
            }
        }
        Ok(())
    }
}

/// Extrinsic error `[p̂ - p; Log(q̂ q⁻¹)]`.
fn extrinsic_error(est: &ExtrinsicParams, truth: &ExtrinsicParams) -> SMatrix<f64, 6, 1> {
    let dp = est.p_ic - truth.p_ic;
    let dq = (est.q_ic * truth.q_ic.conjugate()).log();
    SMatrix::<f64, 6, 1>::new(dp.x, dp.y, dp.z, dq.x, dq.y, dq.z)
}

fn extrinsic_block(p: &StateMatrix) -> SMatrix<f64, 6, 6> {
    p.fixed_view::<6, 6>(idx::P_IC, idx::P_IC).into_owned()
}

/// Runs the filter over a simulated run. `noise` supplies the IMU densities
/// and the pose noise (already scaled for quality); `truth` is only used to
/// score the estimate.
pub fn ekf_calibrate(
    imu: &[ImuSignal],
    poses: &[PoseSample],
    initial: &AugmentedState,
    p0: &StateMatrix,
    noise: &NoiseSpec,
    truth: &ExtrinsicParams,
    options: &EkfOptions,
) -> Result<CalibrationRunResult> {
    noise.validate()?;
    if imu.is_empty() {
        return Err(Error::InvalidArgument("empty IMU stream".into()));
    }
    if p0.cholesky().is_none() {
        return Err(Error::InvalidArgument("initial covariance is not positive definite".into()));
    }
    let mut r = SMatrix::<f64, MEAS_DIM, MEAS_DIM>::zeros();
    for i in 0..3 {
        r[(i, i)] = (noise.sigma_p * noise.sigma_p).max(R_FLOOR);
        r[(i + 3, i + 3)] = (noise.sigma_q * noise.sigma_q).max(R_FLOOR);
    }
    let mut filter = Filter {
        s: *initial,
        p: *p0,
        q: noise.process_covariance(),
        r,
        g: noise.gravity,
        check: options.check_definiteness,
    };

    let mut out = CalibrationRunResult {
        times: Vec::with_capacity(poses.len()),
        trans_error: Vec::with_capacity(poses.len()),
        rot_error: Vec::with_capacity(poses.len()),
        cov_trace: Vec::with_capacity(poses.len()),
        nees_extrinsic: Vec::with_capacity(poses.len()),
        sum_sq_error: 0.0,
        final_sq_error: 0.0,
        accel_cost: 0.0,
        knot_accel_cost: 0.0,
        seed: 0,
        final_state: *initial,
        final_covariance: *p0,
    };
    let tol = 1e-9;
    let mut next_pose = 0;
    for j in 0..imu.len() {
        let t = imu[j].t;
        while next_pose < poses.len() && poses[next_pose].t <= t + tol {
            let z = &poses[next_pose];
            if (z.t - t).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "pose at t = {} does not coincide with an IMU sample",
                    z.t
                )));
            }
            filter.update(z)?;
            let e = extrinsic_error(&filter.s.extrinsics, truth);
            let pe = extrinsic_block(&filter.p);
            let nees = pe
                .cholesky()
                .map(|c| (e.transpose() * c.inverse() * e)[0])
                .unwrap_or(f64::INFINITY);
            let et = Vector3::new(e[0], e[1], e[2]);
            out.times.push(z.t);
            out.trans_error.push(et);
            out.rot_error.push(filter.s.extrinsics.q_ic.angle_to(&truth.q_ic));
            out.cov_trace
                .push(filter.p.fixed_view::<3, 3>(idx::P_IC, idx::P_IC).trace());
            out.nees_extrinsic.push(nees);
            out.sum_sq_error += et.norm_squared();
            out.final_sq_error = et.norm_squared();
            next_pose += 1;
        }
        if j + 1 < imu.len() {
            filter.propagate(imu, j);
        }
    }
    if !filter.s.is_finite() || filter.p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: "filter state".into(),
        });
    }
    out.final_state = filter.s;
    out.final_covariance = filter.p;
    Ok(out)
}

impl SimulatedRun {
    /// Filters this run from `initial` with prior `p0`.
    pub fn calibrate(&self, initial: &AugmentedState, p0: &StateMatrix) -> Result<CalibrationRunResult> {
        let mut r = ekf_calibrate(
            &self.imu,
            &self.poses,
            initial,
            p0,
            &self.noise,
            &self.truth_extrinsics(),
            &EkfOptions::default(),
        )?;
        r.seed = self.seed;
        Ok(r)
    }
}
