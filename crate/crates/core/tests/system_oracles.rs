//! Error-state Jacobians and Lie-derivative gradients against numerical
//! oracles: flows of the nonlinear model, central differences and the
//! matrix exponential.

mod common;

use nalgebra::{SMatrix, Vector3};
use obscal::lie::{LieEngine, LieOrderConfig};
use obscal::system::{
    default_gravity, idx, measurement_jacobian, motion_jacobian, noise_jacobian, pose_measurement,
    pose_residual, ErrorVector, ImuInput, StateMatrix, NOISE_DIM, STATE_DIM,
};
use obscal::{AugmentedState, Quaternion};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit(j: usize) -> ErrorVector {
    let mut e = ErrorVector::zeros();
    e[j] = 1.0;
    e
}

#[test]
fn motion_jacobian_matches_flow_transition() {
    let g = default_gravity();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dt = 1e-3;
    let h = 1e-5;
    for _ in 0..10 {
        let s = common::random_state(&mut rng);
        let u = common::random_input(&mut rng);
        let imu = ImuInput::from_kinematic(&s, &u, &g);
        let base = common::flow(&s, &imu.omega_m, &imu.a_m, &g, dt);
        let mut phi = StateMatrix::zeros();
        for j in 0..STATE_DIM {
            let plus = common::flow(&s.boxplus(&(unit(j) * h)), &imu.omega_m, &imu.a_m, &g, dt).boxminus(&base);
            let minus = common::flow(&s.boxplus(&(unit(j) * -h)), &imu.omega_m, &imu.a_m, &g, dt).boxminus(&base);
            phi.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        let f = motion_jacobian(&s, &u, &g);
        let expm = (f * dt).exp();
        // The Jacobian is frozen at the start of the step, so the
        // discrepancy is second order in dt.
        let err = (phi - expm).abs().max();
        assert!(err < 5e-5, "transition mismatch {err:e}");
        assert!((phi - StateMatrix::identity()).abs().max() > 1e-4);
    }
}

#[test]
fn noise_jacobian_matches_perturbed_readings() {
    let g = default_gravity();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dt = 1e-4;
    let h = 1e-4;
    for _ in 0..5 {
        let s = common::random_state(&mut rng);
        let u = common::random_input(&mut rng);
        let imu = ImuInput::from_kinematic(&s, &u, &g);
        let base = common::flow(&s, &imu.omega_m, &imu.a_m, &g, dt);
        let f = motion_jacobian(&s, &u, &g);
        let gn = noise_jacobian(&s);
        // White noise enters as ω_m - n_g and a_m - n_a held over the step;
        // bias walks add n dt to the bias.
        let mut numeric = SMatrix::<f64, STATE_DIM, NOISE_DIM>::zeros();
        for j in 0..NOISE_DIM {
            let mut n = nalgebra::SVector::<f64, NOISE_DIM>::zeros();
            n[j] = h;
            let step = |sign: f64| {
                let n = n * sign;
                let w = imu.omega_m - n.fixed_rows::<3>(idx::N_G);
                let a = imu.a_m - n.fixed_rows::<3>(idx::N_A);
                let mut end = common::flow(&s, &w, &a, &g, dt);
                end.vehicle.b_g += n.fixed_rows::<3>(idx::N_GW) * dt;
                end.vehicle.b_a += n.fixed_rows::<3>(idx::N_AW) * dt;
                end.boxminus(&base)
            };
            numeric.set_column(j, &((step(1.0) - step(-1.0)) / (2.0 * h)));
        }
        // G rotates with the attitude during the step, so the oracle is
        // first order accurate: relative error about |ω| dt / 2.
        let oracle = (StateMatrix::identity() + f * (dt / 2.0)) * gn;
        let err = (numeric / dt - oracle).abs().max();
        assert!(err < 2e-4, "noise Jacobian mismatch {err:e}");
    }
}

#[test]
fn measurement_jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = 1e-6;
    for _ in 0..20 {
        let s = common::random_state(&mut rng);
        let z = pose_measurement(&s);
        let hm = measurement_jacobian(&s);
        for j in 0..STATE_DIM {
            let d = (pose_residual(&z, &s.boxplus(&(unit(j) * h)))
                - pose_residual(&z, &s.boxplus(&(unit(j) * -h))))
                / (2.0 * h);
            let err = (d + hm.column(j)).abs().max();
            assert!(err < 1e-8, "column {j}: {err:e}");
        }
    }
}

#[test]
fn lie_gradients_match_central_differences() {
    let g = default_gravity();
    let engine = LieEngine::new(LieOrderConfig::with_order(3), g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let h = 1e-6;
    for _ in 0..20 {
        let s = common::random_state(&mut rng);
        let u = common::random_input(&mut rng);
        let imu = ImuInput::from_kinematic(&s, &u, &g);
        let center = pose_measurement(&s).h2;
        let grads = engine.gradients_at(&s, &imu, &center, 3);
        for j in 0..STATE_DIM {
            let lp = engine.derivatives_at(&s.boxplus(&(unit(j) * h)), &imu, &center, 3);
            let lm = engine.derivatives_at(&s.boxplus(&(unit(j) * -h)), &imu, &center, 3);
            for i in 0..=3 {
                let fd = (lp[i] - lm[i]) / (2.0 * h);
                let exact = grads[i].column(j);
                let scale = exact.norm().max(1.0);
                let rel = (fd - exact).norm() / scale;
                assert!(rel < 1e-6, "order {i}, column {j}: {rel:e}");
            }
        }
    }
}

#[test]
fn lie_derivatives_are_time_derivatives_of_the_output() {
    // With a constant IMU reading the i-th Lie derivative is the i-th time
    // derivative of the output along the flow: compare with finite
    // differences in time of the position output.
    let g = default_gravity();
    let engine = LieEngine::new(LieOrderConfig::with_order(2), g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let dt = 1e-3;
    for _ in 0..5 {
        let s = common::random_state(&mut rng);
        let u = common::random_input(&mut rng);
        let imu = ImuInput::from_kinematic(&s, &u, &g);
        // Negative `tau` integrates backwards.
        let y = |tau: f64| -> Vector3<f64> { pose_measurement(&common::flow(&s, &imu.omega_m, &imu.a_m, &g, tau)).h1 };
        let (yp, y0, ym) = (y(dt), y(0.0), y(-dt));
        let l1 = engine.lie_derivative(1, &s, &u).unwrap();
        let l2 = engine.lie_derivative(2, &s, &u).unwrap();
        let d1 = (yp - ym) / (2.0 * dt);
        let d2 = (yp - y0 * 2.0 + ym) / (dt * dt);
        assert!((d1 - l1.fixed_rows::<3>(0)).norm() < 1e-5);
        assert!((d2 - l2.fixed_rows::<3>(0)).norm() < 1e-4);
    }
}

fn arb_vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn arb_quat() -> impl Strategy<Value = Quaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| Quaternion::new(a, b, c, d).normalized())
}

proptest! {
    #[test]
    fn quaternion_products_stay_unit(a in arb_quat(), b in arb_quat(), v in arb_vec3(10.0)) {
        let p = a * b;
        prop_assert!((p.norm() - 1.0).abs() < 1e-12);
        prop_assert!((p.rotate(&v).norm() - v.norm()).abs() < 1e-9 * v.norm().max(1.0));
        prop_assert!((p.rotate(&v) - a.rotate(&b.rotate(&v))).norm() < 1e-9 * v.norm().max(1.0));
    }

    #[test]
    fn exp_log_round_trip(phi in arb_vec3(1.8).prop_filter("inside the principal branch", |v| v.norm() < 3.1)) {
        let q = Quaternion::exp(&phi);
        prop_assert!((q.log() - phi).norm() < 1e-9);
    }

    #[test]
    fn boxplus_boxminus_inverse(seed in 0u64..1000, d in proptest::collection::vec(-0.5..0.5f64, 21)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_state(&mut rng);
        let delta = ErrorVector::from_vec(d);
        let back = s.boxplus(&delta).boxminus(&s);
        prop_assert!((back - delta).norm() < 1e-9);
    }

    #[test]
    fn pose_measurement_is_invertible(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: AugmentedState = common::random_state(&mut rng);
        let z = pose_measurement(&s);
        let (p, q) = obscal::system::invert_pose_measurement(&z, &s.extrinsics);
        prop_assert!((p - s.vehicle.p_wi).norm() < 1e-9);
        prop_assert!(q.angle_to(&s.vehicle.q_wi) < 1e-7);
    }
}
