mod common;

use nalgebra::{Vector3, Vector4};
use obscal::spline::flat_to_state;
use obscal::system::{default_gravity, quat_to_rotation};
use obscal::{Quaternion, UniformSpline};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spline(rng: &mut ChaCha8Rng, order: usize, n: usize) -> UniformSpline {
    let knots = (0..n)
        .map(|_| Vector4::from_fn(|_, _| rng.random_range(-2.0..2.0)))
        .collect();
    let dt = rng.random_range(0.2..1.0);
    let t0 = rng.random_range(-1.0..1.0);
    UniformSpline::new(knots, order, dt, t0).unwrap()
}

#[test]
fn cumulative_form_matches_de_boor() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for order in 2..=8 {
        for _ in 0..5 {
            let s = random_spline(&mut rng, order, order + 6);
            let (a, b) = s.span();
            for _ in 0..50 {
                let t = rng.random_range(a..b);
                for d in 0..order.min(4) {
                    let lib = s.eval(t, d).unwrap();
                    let oracle = common::de_boor(&s, t, d);
                    let scale = oracle.norm().max(1.0);
                    assert!(
                        (lib - oracle).norm() < 1e-12 * scale * s.dt_knot().powi(-(d as i32)).max(1.0),
                        "order {order}, derivative {d}: {lib} vs {oracle}"
                    );
                }
            }
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let s = random_spline(&mut rng, 6, 12);
    let (a, b) = s.span();
    let h = 1e-5;
    for _ in 0..50 {
        let t = rng.random_range(a + h..b - h);
        for d in 0..3 {
            let fd = (s.eval(t + h, d).unwrap() - s.eval(t - h, d).unwrap()) / (2.0 * h);
            let exact = s.eval(t, d + 1).unwrap();
            assert!((fd - exact).norm() < 1e-5 * exact.norm().max(1.0));
        }
    }
}

#[test]
fn flatness_rates_match_attitude_differences() {
    let s = common::excited_spline();
    let g = default_gravity();
    let (a, b) = s.span();
    let h = 1e-5;
    for i in 1..20 {
        let t = a + (b - a) * i as f64 / 20.0;
        let (state, u) = s.state_at(t, &g).unwrap();
        let (plus, _) = s.state_at(t + h, &g).unwrap();
        let (minus, _) = s.state_at(t - h, &g).unwrap();
        // Body rate from R(t)ᵀ Ṙ(t).
        let r = quat_to_rotation(&state.q_wi);
        let r_dot = (quat_to_rotation(&plus.q_wi) - quat_to_rotation(&minus.q_wi)) / (2.0 * h);
        let m = r.transpose() * r_dot;
        let omega = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) / 2.0;
        assert!((omega - u.omega_i).norm() < 1e-6, "t = {t}");
        // Velocity and acceleration come straight from the spline.
        let v = s.eval(t, 1).unwrap();
        assert!((state.v_w - v.fixed_rows::<3>(0)).norm() < 1e-12);
        let acc = s.eval(t, 2).unwrap();
        assert!((u.a_w - acc.fixed_rows::<3>(0)).norm() < 1e-12);
        // Thrust is along the body z axis.
        let thrust = (u.a_w - g).normalize();
        assert!((r.column(2) - thrust).norm() < 1e-9);
    }
}

#[test]
fn imu_readings_integrate_back_to_the_trajectory() {
    // A noise-free IMU reading taken from the spline, integrated over a
    // short step, must land on the spline state at the end of the step.
    let s = common::excited_spline();
    let g = default_gravity();
    let (a, b) = s.span();
    let dt = 1e-3;
    for i in 0..10 {
        let t = a + (b - a - dt) * i as f64 / 10.0;
        let (v0, _) = s.state_at(t, &g).unwrap();
        let (vm, _) = s.state_at(t + dt / 2.0, &g).unwrap();
        let (v1, _) = s.state_at(t + dt, &g).unwrap();
        let aug = |v| obscal::AugmentedState::new(v, common::nominal_extrinsics());
        let m0 = common::imu_at(&s, t + dt / 2.0, &aug(vm), &g);
        // Midpoint reading held constant: second-order accurate.
        let end = common::flow(&aug(v0), &m0.omega_m, &m0.a_m, &g, dt);
        assert!((end.vehicle.p_wi - v1.p_wi).norm() < 1e-8);
        assert!((end.vehicle.v_w - v1.v_w).norm() < 1e-6);
        assert!(end.vehicle.q_wi.angle_to(&v1.q_wi) < 1e-6);
    }
}

#[test]
fn hover_state_is_level() {
    let g = default_gravity();
    let st = flat_to_state(
        &obscal::FlatState {
            value: Vector4::new(1.0, 2.0, 3.0, 0.0),
            d1: Vector4::zeros(),
            d2: Vector4::zeros(),
            d3: Vector4::zeros(),
        },
        &g,
    )
    .unwrap();
    assert!(st.0.q_wi.angle_to(&Quaternion::identity()) < 1e-12);
}

#[test]
fn fixtures_parse_and_round_trip() {
    for s in [common::excited_spline(), common::random_fixture_spline()] {
        assert_eq!(s.order(), 6);
        assert_eq!(s.knots().len(), 15);
        assert_eq!(UniformSpline::from_text(&s.to_text()).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn convex_hull_bounds_hold(seed in 0u64..1_000_000, order in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spline(&mut rng, order, order + 8);
        let (a, b) = s.span();
        let n = 10_000;
        for i in 0..n {
            let t = a + (b - a) * i as f64 / (n - 1) as f64;
            let (seg, _) = s.locate(t).unwrap();
            for d in 0..order.min(3) {
                let ctrl = s.active_derivative_knots(seg, d).unwrap();
                let y = s.eval(t, d).unwrap();
                for c in 0..4 {
                    let lo = ctrl.iter().map(|k| k[c]).fold(f64::INFINITY, f64::min);
                    let hi = ctrl.iter().map(|k| k[c]).fold(f64::NEG_INFINITY, f64::max);
                    let tol = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
                    prop_assert!(y[c] >= lo - tol && y[c] <= hi + tol);
                }
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact(seed in 0u64..1_000_000, order in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_spline(&mut rng, order, order + 3);
        prop_assert_eq!(UniformSpline::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn partition_of_unity(seed in 0u64..1_000_000, order in 2usize..=8, frac in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = random_spline(&mut rng, order, order + 4);
        let c = Vector4::new(1.5, -0.5, 2.0, 0.25);
        s = s.with_knots(vec![c; s.knots().len()]).unwrap();
        let (a, b) = s.span();
        let t = a + (b - a) * frac;
        prop_assert!((s.eval(t, 0).unwrap() - c).norm() < 1e-12);
        if order > 1 {
            prop_assert!(s.eval(t, 1).unwrap().norm() < 1e-10);
        }
    }
}
