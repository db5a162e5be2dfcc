//! Helpers shared by the integration tests: fixture loading, random
//! operating points, and oracles written independently of the library.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{Vector3, Vector4};
use obscal::system::{quat_to_rotation, ImuSignal};
use obscal::{AugmentedState, ExtrinsicParams, KinematicInput, Quaternion, UniformSpline, VehicleState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn excited_spline() -> UniformSpline {
    UniformSpline::load(fixture("excited.spline")).expect("fixture parses")
}

pub fn random_fixture_spline() -> UniformSpline {
    UniformSpline::load(fixture("random_seed0.spline")).expect("fixture parses")
}

pub fn hover_spline() -> UniformSpline {
    UniformSpline::constant(Vector4::new(0.0, 0.0, 1.0, 0.0), 15, 6, 0.5, 0.0).unwrap()
}

pub fn nominal_extrinsics() -> ExtrinsicParams {
    ExtrinsicParams {
        p_ic: Vector3::new(0.1, 0.02, -0.03),
        q_ic: Quaternion::from_axis_angle(&Vector3::y(), 5f64.to_radians()),
    }
}

fn vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn quat(rng: &mut ChaCha8Rng) -> Quaternion {
    let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    Quaternion::new(v[0], v[1], v[2], v[3]).normalized()
}

pub fn random_state(rng: &mut ChaCha8Rng) -> AugmentedState {
    AugmentedState::new(
        VehicleState {
            p_wi: vec3(rng, 3.0),
            q_wi: quat(rng),
            v_w: vec3(rng, 2.0),
            b_g: vec3(rng, 0.05),
            b_a: vec3(rng, 0.2),
        },
        ExtrinsicParams {
            p_ic: vec3(rng, 0.2),
            q_ic: quat(rng),
        },
    )
}

pub fn random_input(rng: &mut ChaCha8Rng) -> KinematicInput {
    KinematicInput {
        omega_i: vec3(rng, 1.5),
        a_w: vec3(rng, 4.0),
    }
}

/// Value or derivative of a uniform B-spline by the Cox–de Boor recursion
/// on the knot vector `t_j = t0 + j dt`, with derivatives by differencing
/// the control points. Valid for `t` strictly inside the span.
pub fn de_boor(spline: &UniformSpline, t: f64, d: usize) -> Vector4<f64> {
    let k = spline.order();
    let dt = spline.dt_knot();
    let mut ctrl: Vec<Vector4<f64>> = spline.knots().to_vec();
    for _ in 0..d {
        ctrl = ctrl.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    }
    // Differenced control point i pairs with B_{i+d, k-d}.
    let start = spline.t0() + d as f64 * dt;
    ctrl.iter()
        .enumerate()
        .map(|(i, c)| c * basis(i as i64, k - d, t, &|j| start + j as f64 * dt))
        .sum()
}

/// `B_{j,k}(t)`, supported on `[knot(j), knot(j + k))`.
fn basis(j: i64, k: usize, t: f64, knot: &dyn Fn(i64) -> f64) -> f64 {
    if k == 1 {
        return if knot(j) <= t && t < knot(j + 1) { 1.0 } else { 0.0 };
    }
    let (a, b) = (knot(j), knot(j + k as i64 - 1));
    let (c, e) = (knot(j + 1), knot(j + k as i64));
    (t - a) / (b - a) * basis(j, k - 1, t, knot) + (e - t) / (e - c) * basis(j + 1, k - 1, t, knot)
}

/// Nominal state after `dt` under a constant IMU reading, by exact
/// attitude integration and many small RK4 steps for velocity/position.
pub fn flow(s: &AugmentedState, omega_m: &Vector3<f64>, a_m: &Vector3<f64>, g: &Vector3<f64>, dt: f64) -> AugmentedState {
    let steps = 200;
    let h = dt / steps as f64;
    let w_b = omega_m - s.vehicle.b_g;
    let f_b = a_m - s.vehicle.b_a;
    let q_at = |tau: f64| s.vehicle.q_wi * Quaternion::exp(&(w_b * tau));
    let acc = |tau: f64| quat_to_rotation(&q_at(tau)) * f_b + g;
    let (mut p, mut v) = (s.vehicle.p_wi, s.vehicle.v_w);
    for i in 0..steps {
        let t = i as f64 * h;
        let (a0, a1, a2) = (acc(t), acc(t + h / 2.0), acc(t + h));
        let k1 = (v, a0);
        let k2 = (v + a0 * (h / 2.0), a1);
        let k3 = (v + a1 * (h / 2.0), a1);
        let k4 = (v + a1 * h, a2);
        p += (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0);
        v += (a0 + a1 * 4.0 + a2) * (h / 6.0);
    }
    let mut out = *s;
    out.vehicle.p_wi = p;
    out.vehicle.v_w = v;
    out.vehicle.q_wi = q_at(dt);
    out
}

pub fn imu_at(spline: &UniformSpline, t: f64, s: &AugmentedState, g: &Vector3<f64>) -> ImuSignal {
    let (_, u) = spline.state_at(t, g).unwrap();
    obscal::system::imu_measurement(s, &u, &Default::default(), g, t)
}
