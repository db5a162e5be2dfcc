mod common;

use nalgebra::DMatrix;
use obscal::lie::{rank_diagnostic, LieEngine, LieOrderConfig};
use obscal::metrics::{
    default_p0, e2log_trajectory, e2log_window, initial_information, scalarize, state_on,
    state_transition_product, stochastic_propagate, stochastic_trajectory, tile_windows,
    transition_from_jacobians, weight_w1, weight_w2, window_jacobians, JOINT_DIM,
};
use obscal::system::{default_gravity, idx, motion_jacobian, StateMatrix, STATE_DIM};
use obscal::{Error, ScalarMode, SelectionSpec, WindowSpec};

fn engine(order: usize) -> LieEngine {
    LieEngine::new(LieOrderConfig::with_order(order), default_gravity()).unwrap()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

#[test]
fn w1_blocks_follow_closed_form() {
    for r in 0..=3 {
        for h in [0.05, 0.2, 1.0, 1.7] {
            let w = weight_w1(h, r).unwrap();
            assert_eq!(w.nrows(), 6 * (r + 1));
            for i in 0..=r {
                for j in 0..=r {
                    let p = (i + j + 1) as f64;
                    let expected = h.powf(p) / (p * factorial(i) * factorial(j));
                    for a in 0..6 {
                        for b in 0..6 {
                            let v = w[(6 * i + a, 6 * j + b)];
                            if a == b {
                                assert!((v - expected).abs() <= 1e-15 * expected, "{v} vs {expected}");
                            } else {
                                assert_eq!(v, 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn w2_sums_monomials() {
    let times = [0.0, 0.1];
    let w = weight_w2(&times, 2).unwrap();
    // Block (0,0) counts measurements; (1,1) sums t²; (2,2) sums t⁴/4.
    assert_eq!(w[(0, 0)], 2.0);
    assert!((w[(6, 6)] - 0.01).abs() < 1e-15);
    assert!((w[(12, 12)] - 1e-4 / 4.0).abs() < 1e-18);
    assert!((w[(0, 12)] - 0.01 / 2.0).abs() < 1e-15);
}

#[test]
fn e2log_window_matches_quadrature() {
    let s = common::excited_spline();
    for order in 1..=3 {
        let eng = engine(order);
        let h = 0.2;
        for t in [3.0, 4.4, 6.9] {
            let (st, u) = state_on(&s, t, &eng, &common::nominal_extrinsics()).unwrap();
            let o = eng.observability_matrix(&st, &u).unwrap();
            let closed = e2log_window(&o, h).unwrap();
            // ∫₀ᴴ M(τ)ᵀ M(τ) dτ with M(τ) = Σ_i τⁱ/i! ∇Lⁱ, composite Simpson.
            let n = 2000;
            let step = h / n as f64;
            let mut quad = DMatrix::zeros(STATE_DIM, STATE_DIM);
            for k in 0..=n {
                let tau = k as f64 * step;
                let mut m = DMatrix::zeros(6, STATE_DIM);
                for i in 0..=order {
                    m += o.rows.rows(6 * i, 6) * (tau.powi(i as i32) / factorial(i));
                }
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                quad += m.transpose() * &m * (w * step / 3.0);
            }
            let rel = (&closed - &quad).norm() / quad.norm();
            assert!(rel < 1e-6, "order {order}, t = {t}: relative error {rel:e}");
        }
    }
}

#[test]
fn e2log_trajectory_is_sum_of_windows_and_psd() {
    let s = common::excited_spline();
    let eng = engine(2);
    let ext = common::nominal_extrinsics();
    let windows = tile_windows(s.span(), 0.2, 0.1, 0.005).unwrap();
    assert_eq!(windows.len(), 25);
    let acc = e2log_trajectory(&s, &windows, &eng, &ext).unwrap();
    let mut sum = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for w in &windows {
        let (st, u) = state_on(&s, w.start, &eng, &ext).unwrap();
        sum += e2log_window(&eng.observability_matrix(&st, &u).unwrap(), w.horizon).unwrap();
    }
    assert!((&acc.matrix - &sum).norm() < 1e-12 * sum.norm());
    assert!(min_eig(&acc.matrix) > -1e-9 * acc.matrix.norm());
    let j = scalarize(&acc, &SelectionSpec::extrinsic_translation(), ScalarMode::Trace).unwrap();
    assert!(j.is_finite() && j <= 0.0);
}

#[test]
fn transition_product_matches_dense_jacobians() {
    let s = common::excited_spline();
    let eng = engine(2);
    let ext = common::nominal_extrinsics();
    let w = WindowSpec::new(4.0, 0.2, 0.1, 0.005).unwrap();
    let sparse = state_transition_product(&s, &w, &eng, &ext).unwrap();
    let dense = transition_from_jacobians(&window_jacobians(&s, &w, &eng, &ext).unwrap(), w.imu_dt);
    assert!((sparse - dense).abs().max() < 1e-12);
}

#[test]
fn transition_on_hover_approximates_matrix_exponential() {
    let s = common::hover_spline();
    let eng = engine(2);
    let ext = common::nominal_extrinsics();
    let w = WindowSpec::new(3.0, 0.2, 0.1, 0.005).unwrap();
    let phi = state_transition_product(&s, &w, &eng, &ext).unwrap();
    let (st, u) = state_on(&s, w.start, &eng, &ext).unwrap();
    let f = motion_jacobian(&st, &u, &default_gravity());
    let expm = (f * w.horizon).exp();
    // F is constant and nilpotent: the Euler product is exactly the
    // binomial sum Σ C(K, m) dtᵐ Fᵐ, and differs from the exponential by
    // O(H dt).
    let k = w.imu_steps();
    let mut binomial = StateMatrix::identity();
    let mut term = StateMatrix::identity();
    for m in 1..=k.min(STATE_DIM) {
        term = term * f * (w.imu_dt * (k - m + 1) as f64 / m as f64);
        binomial += term;
    }
    assert!((phi - binomial).abs().max() < 1e-12);
    let bound = w.horizon * w.imu_dt * (f * f).abs().max();
    let err = (phi - expm).abs().max();
    assert!(err <= bound, "{err:e} > {bound:e}");
    assert!(err > 0.0);
}

#[test]
fn stochastic_information_is_positive_definite() {
    let s = common::excited_spline();
    let eng = engine(2);
    let ext = common::nominal_extrinsics();
    let p0 = default_p0();
    let b0 = initial_information(&p0).unwrap();
    assert_eq!(b0.nrows(), JOINT_DIM);
    assert!(min_eig(&b0) > 0.0);
    let windows = tile_windows(s.span(), 0.2, 0.1, 0.005).unwrap();
    let acc = stochastic_trajectory(&s, &windows, &p0, &eng, &ext).unwrap();
    let m = &acc.matrix;
    assert!((m - m.transpose()).abs().max() <= 1e-9 * m.abs().max());
    assert!(min_eig(m) > 0.0);
}

#[test]
fn singular_transition_is_reported() {
    let b = DMatrix::identity(JOINT_DIM, JOINT_DIM);
    let mut phi = StateMatrix::identity();
    phi[(0, 0)] = 0.0;
    assert!(matches!(
        stochastic_propagate(&b, &b, &phi),
        Err(Error::SingularTransition { .. })
    ));
}

#[test]
fn hover_leaves_extrinsic_translation_unobservable() {
    let s = common::hover_spline();
    let eng = engine(2);
    let ext = common::nominal_extrinsics();
    let (st, u) = state_on(&s, 4.0, &eng, &ext).unwrap();
    let rep = rank_diagnostic(&eng.observability_matrix(&st, &u).unwrap(), 1e-8).unwrap();
    assert!(rep.rank <= 18, "rank {}", rep.rank);
    assert_eq!(rep.null_rank_in(idx::P_IC..idx::P_IC + 3), 3);
    // Accumulating over the whole hover does not help.
    let windows = tile_windows(s.span(), 0.2, 0.1, 0.005).unwrap();
    let acc = e2log_trajectory(&s, &windows, &eng, &ext).unwrap();
    let total = obscal::lie::rank_of(&acc.matrix, 1e-10).unwrap();
    assert!(total.rank <= 18);
    assert_eq!(total.null_rank_in(idx::P_IC..idx::P_IC + 3), 3);
}

#[test]
fn excited_trajectory_is_fully_observable() {
    let s = common::excited_spline();
    let eng = engine(2);
    let windows = tile_windows(s.span(), 0.2, 0.1, 0.005).unwrap();
    let acc = e2log_trajectory(&s, &windows, &eng, &common::nominal_extrinsics()).unwrap();
    let total = obscal::lie::rank_of(&acc.matrix, 1e-10).unwrap();
    assert_eq!(total.rank, STATE_DIM);
}
