//! Trajectory optimization over spline knots.
//!
//! The decision variables are the knots of a [`UniformSpline`]. Velocity,
//! acceleration and endpoint limits are linear in the knots and act on each
//! of the four channels separately (convex-hull bounds on the derivative
//! knots), so the feasible set is a product of small polyhedra. The solver
//! keeps every iterate inside it by Euclidean projection (see
//! [`projection`]) and takes quasi-Newton steps on the chosen cost.

mod cost;
pub mod projection;
mod random;
mod solver;

pub use cost::{accel_cost, knot_accel_cost, CostKind, CostSpec, Objective};
pub use random::{random_spline, RandomSplineConfig};
pub use solver::{optimize, IterationRecord, OptimizeResult, SolverConfig};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::spline::UniformSpline;
use crate::{Error, Result};

/// Kinematic and boundary limits, per flat-output channel `(x, y, z, yaw)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub v_max: Vector4<f64>,
    pub a_max: Vector4<f64>,
    /// Allowed distance of the first/last `k` knots from the endpoints.
    pub eps: Vector4<f64>,
    pub y_start: Vector4<f64>,
    pub y_end: Vector4<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: Vector4::new(2.0, 2.0, 2.0, 1.5),
            a_max: Vector4::new(5.0, 5.0, 5.0, 3.0),
            eps: Vector4::repeat(0.1),
            y_start: Vector4::zeros(),
            y_end: Vector4::zeros(),
        }
    }
}

impl Limits {
    pub fn with_endpoints(mut self, y_start: Vector4<f64>, y_end: Vector4<f64>) -> Self {
        self.y_start = y_start;
        self.y_end = y_end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_max.iter().all(|v| *v >= 0.0)
            && self.a_max.iter().all(|v| *v >= 0.0)
            && self.eps.iter().all(|v| *v >= 0.0)
            && self.y_start.iter().chain(self.y_end.iter()).all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidArgument(
                "limits must be non-negative and endpoints finite".into(),
            ));
        }
        Ok(())
    }

    /// Rejects endpoint pairs that no knot sequence of this layout can join
    /// under the velocity limit.
    pub fn check_endpoints(&self, n_knots: usize, order: usize, dt_knot: f64) -> Result<()> {
        let free_steps = (n_knots + 2).saturating_sub(2 * order) as f64;
        for c in 0..4 {
            let gap = (self.y_end[c] - self.y_start[c]).abs() - 2.0 * self.eps[c];
            let reach = free_steps * self.v_max[c] * dt_knot;
            if gap > reach + 1e-12 {
                return Err(Error::Infeasible(format!(
                    "channel {c}: endpoints {:.3} apart need more than the {:.3} reachable with {} free knot steps",
                    (self.y_end[c] - self.y_start[c]).abs(),
                    reach + 2.0 * self.eps[c],
                    free_steps
                )));
            }
        }
        Ok(())
    }
}

/// Largest violation of each constraint family, per channel. Values ≤ 0
/// mean satisfied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintReport {
    pub velocity: Vector4<f64>,
    pub acceleration: Vector4<f64>,
    pub start: Vector4<f64>,
    pub end: Vector4<f64>,
}

impl ConstraintReport {
    pub fn max_violation(&self) -> f64 {
        [self.velocity, self.acceleration, self.start, self.end]
            .iter()
            .map(|v| v.max())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

pub fn constraint_violations(spline: &UniformSpline, limits: &Limits) -> ConstraintReport {
    let k = spline.order();
    let knots = spline.knots();
    let n = knots.len();
    let worst = |vals: &[Vector4<f64>], bound: &Vector4<f64>| {
        let mut out = Vector4::repeat(f64::NEG_INFINITY);
        for v in vals {
            for c in 0..4 {
                out[c] = out[c].max(v[c].abs() - bound[c]);
            }
        }
        out
    };
    let vel = spline.derivative_knots(1).unwrap_or_default();
    let acc = spline.derivative_knots(2).unwrap_or_default();
    let starts: Vec<_> = knots[..k.min(n)].iter().map(|y| y - limits.y_start).collect();
    let ends: Vec<_> = knots[n.saturating_sub(k)..].iter().map(|y| y - limits.y_end).collect();
    ConstraintReport {
        velocity: worst(&vel, &limits.v_max),
        acceleration: worst(&acc, &limits.a_max),
        start: worst(&starts, &limits.eps),
        end: worst(&ends, &limits.eps),
    }
}
