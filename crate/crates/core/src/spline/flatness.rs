//! Differential-flatness map from `(position, yaw)` derivatives to the
//! vehicle state and its kinematic input.
//!
//! The body z-axis is aligned with the specific force `a_W - g`, and the yaw
//! fixes the heading: `x_C = (cos ψ, sin ψ, 0)`, `y_B = z_B × x_C / |·|`,
//! `x_B = y_B × z_B`. The angular velocity is the exact time derivative of
//! this construction, obtained by pushing a dual number in time through it
//! (`a + ε j`, `ψ + ε ψ̇`) and reading off `[ω]× = Rᵀ Ṙ`.

use nalgebra::{Matrix3, Vector3};

use super::FlatState;
use crate::jet::{Dual, Real, Ring};
use crate::system::{KinematicInput, Quaternion, VehicleState};
use crate::{Error, Result};

const THRUST_EPS: f64 = 1e-6;

fn cross<T: Ring>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm<T: Real>(a: &[T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Columns `[x_B, y_B, z_B]` of the body attitude.
fn body_axes<T: Real>(thrust: [T; 3], yaw: T) -> std::result::Result<[[T; 3]; 3], String> {
    let n = norm(&thrust);
    if n.re() < THRUST_EPS {
        return Err(format!("|a_W - g| = {:e} is below {THRUST_EPS:e}", n.re()));
    }
    let zb = thrust.map(|c| c / n);
    let xc = [yaw.cos(), yaw.sin(), T::zero()];
    let yb_raw = cross(&zb, &xc);
    let m = norm(&yb_raw);
    if m.re() < THRUST_EPS {
        return Err("thrust direction is parallel to the heading vector".into());
    }
    let yb = yb_raw.map(|c| c / m);
    let xb = cross(&yb, &zb);
    Ok([xb, yb, zb])
}

/// Vehicle state (biases zero) and kinematic input for a flat state.
/// Singularity errors report `t = NaN`; [`super::UniformSpline::state_at`]
/// fills in the evaluation time.
pub fn flat_to_state(fs: &FlatState, gravity: &Vector3<f64>) -> Result<(VehicleState, KinematicInput)> {
    let a_w = fs.d2.xyz();
    let jerk = fs.d3.xyz();
    let thrust: [Dual<1>; 3] =
        std::array::from_fn(|i| Dual::new(a_w[i] - gravity[i], [jerk[i]]));
    let yaw = Dual::new(fs.value[3], [fs.d1[3]]);
    let axes = body_axes(thrust, yaw).map_err(|reason| Error::FlatnessSingularity { t: f64::NAN, reason })?;

    let r = Matrix3::from_fn(|i, j| axes[j][i].re);
    let r_dot = Matrix3::from_fn(|i, j| axes[j][i].eps[0]);
    let w = r.transpose() * r_dot;
    // `w` is skew-symmetric up to round-off; average both halves.
    let omega = Vector3::new(w[(2, 1)] - w[(1, 2)], w[(0, 2)] - w[(2, 0)], w[(1, 0)] - w[(0, 1)]) * 0.5;

    let vehicle = VehicleState {
        p_wi: fs.value.xyz(),
        q_wi: Quaternion::from_rotation(&r),
        v_w: fs.d1.xyz(),
        b_g: Vector3::zeros(),
        b_a: Vector3::zeros(),
    };
    Ok((vehicle, KinematicInput { omega_i: omega, a_w }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{default_gravity, quat_to_rotation};
    use approx::assert_relative_eq;
    use nalgebra::Vector4;

    fn fs(value: Vector4<f64>, d1: Vector4<f64>, d2: Vector4<f64>, d3: Vector4<f64>) -> FlatState {
        FlatState { value, d1, d2, d3 }
    }

    #[test]
    fn hover_is_identity() {
        let g = default_gravity();
        let (s, u) = flat_to_state(&FlatState::default(), &g).unwrap();
        assert!(s.q_wi.angle_to(&Quaternion::identity()) < 1e-12);
        assert_eq!(u.omega_i, Vector3::zeros());
        assert_eq!(u.a_w, Vector3::zeros());
    }

    #[test]
    fn vertical_acceleration_keeps_attitude() {
        let g = default_gravity();
        let a = Vector4::new(0.0, 0.0, 1.0, 0.0);
        let (s, u) = flat_to_state(&fs(Vector4::zeros(), Vector4::zeros(), a, Vector4::zeros()), &g).unwrap();
        assert!(s.q_wi.angle_to(&Quaternion::identity()) < 1e-12);
        assert_relative_eq!((u.a_w - g).norm(), 1.0 + g.norm(), epsilon = 1e-12);
    }

    #[test]
    fn yaw_rotates_about_z() {
        let g = default_gravity();
        let v = Vector4::new(1.0, 2.0, 3.0, 0.7);
        let d1 = Vector4::new(0.0, 0.0, 0.0, 0.3);
        let (s, u) = flat_to_state(&fs(v, d1, Vector4::zeros(), Vector4::zeros()), &g).unwrap();
        let expected = Quaternion::from_axis_angle(&Vector3::z(), 0.7);
        assert!(s.q_wi.angle_to(&expected) < 1e-12);
        assert_relative_eq!(u.omega_i, Vector3::new(0.0, 0.0, 0.3), epsilon = 1e-12);
        assert_eq!(s.p_wi, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn free_fall_is_singular() {
        let g = default_gravity();
        let a = Vector4::new(g.x, g.y, g.z, 0.0);
        let err = flat_to_state(&fs(Vector4::zeros(), Vector4::zeros(), a, Vector4::zeros()), &g).unwrap_err();
        assert!(matches!(err, Error::FlatnessSingularity { .. }));
    }

    #[test]
    fn body_z_tracks_thrust() {
        let g = default_gravity();
        let a = Vector4::new(2.0, -1.0, 0.5, 0.0);
        let (s, u) = flat_to_state(&fs(Vector4::zeros(), Vector4::zeros(), a, Vector4::zeros()), &g).unwrap();
        let zb = quat_to_rotation(&s.q_wi).column(2).into_owned();
        assert_relative_eq!(zb, (u.a_w - g).normalize(), epsilon = 1e-12);
    }
}
