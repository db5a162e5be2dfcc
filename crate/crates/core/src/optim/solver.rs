//! Projected limited-memory quasi-Newton solver over spline knots.
//!
//! Every iterate is the Euclidean projection of a trial point onto the
//! feasible set, and a trial is accepted only if it lowers the cost
//! (Armijo condition along the projection arc). The returned spline is
//! therefore always feasible and never worse than the projected start.

use std::collections::VecDeque;

use nalgebra::{DVector, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::projection::project_knots;
use super::{constraint_violations, CostKind, Limits, Objective};
use crate::lie::rank_of;
use crate::metrics::e2log_trajectory;
use crate::spline::UniformSpline;
use crate::{Error, Result};

/// Largest constraint violation accepted in a returned spline.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Maximum number of solver iterations.
    pub budget: usize,
    /// Central-difference step per knot coordinate.
    pub fd_step: f64,
    /// Keep the yaw knots at their initial values.
    pub freeze_yaw: bool,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Largest knot move (per coordinate) of a steepest-descent trial.
    pub initial_step: f64,
    pub max_backtracks: usize,
    /// Stop when the relative cost decrease of an iteration falls below this.
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            fd_step: 1e-4,
            freeze_yaw: false,
            memory: 6,
            initial_step: 0.1,
            max_backtracks: 12,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost after the iteration (the incumbent if the trial was rejected).
    pub cost: f64,
    pub max_violation: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub spline: UniformSpline,
    /// Cost of the projected initial spline.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub log: Vec<IterationRecord>,
    pub diagnostics: Vec<String>,
    pub evaluations: usize,
}

impl OptimizeResult {
    /// Iteration log as CSV text.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,cost,max_violation,accepted\n");
        for r in &self.log {
            out.push_str(&format!(
                "{},{:.17e},{:.6e},{}\n",
                r.iteration, r.cost, r.max_violation, r.accepted
            ));
        }
        out
    }
}

struct Problem<'a> {
    layout: &'a UniformSpline,
    objective: &'a Objective,
    limits: &'a Limits,
    frozen: [bool; 4],
    free: Vec<usize>,
}

impl Problem<'_> {
    fn to_knots(&self, x: &DVector<f64>) -> Vec<Vector4<f64>> {
        (0..self.layout.knots().len())
            .map(|i| Vector4::new(x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]))
            .collect()
    }

    fn spline(&self, x: &DVector<f64>) -> Result<UniformSpline> {
        self.layout.with_knots(self.to_knots(x))
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        self.spline(x)
            .and_then(|s| self.objective.evaluate(&s))
            .unwrap_or(f64::INFINITY)
    }

    fn project(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut knots = self.to_knots(x);
        let v = project_knots(
            &mut knots,
            self.layout.order(),
            self.layout.dt_knot(),
            self.limits,
            self.frozen,
        );
        (flatten(&knots), v)
    }

    /// Central differences over the free coordinates; coordinates whose
    /// stencil leaves the cost domain get a zero entry.
    fn gradient(&self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        let parts: Vec<(usize, f64)> = self
            .free
            .par_iter()
            .map(|&i| {
                let mut xp = x.clone();
                xp[i] += h;
                let fp = self.cost(&xp);
                xp[i] -= 2.0 * h;
                let fm = self.cost(&xp);
                let d = (fp - fm) / (2.0 * h);
                (i, if d.is_finite() { d } else { 0.0 })
            })
            .collect();
        let mut g = DVector::zeros(x.len());
        for (i, d) in parts {
            g[i] = d;
        }
        g
    }
}

fn flatten(knots: &[Vector4<f64>]) -> DVector<f64> {
    DVector::from_iterator(knots.len() * 4, knots.iter().flat_map(|k| k.iter().copied()))
}

/// Two-loop recursion: approximate `-H⁻¹ g`.
fn lbfgs_direction(g: &DVector<f64>, mem: &VecDeque<(DVector<f64>, DVector<f64>)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y) in mem.iter().rev() {
        let rho = 1.0 / y.dot(s);
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push((a, rho));
    }
    if let Some((s, y)) = mem.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y), (a, rho)) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q += s * (a - b);
    }
    -q
}

/// Minimizes `objective` over the knots of `initial` subject to `limits`.
pub fn optimize(
    initial: &UniformSpline,
    objective: &Objective,
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<OptimizeResult> {
    limits.validate()?;
    limits.check_endpoints(initial.knots().len(), initial.order(), initial.dt_knot())?;
    if !(cfg.fd_step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let frozen = [false, false, false, cfg.freeze_yaw];
    let free = (0..initial.knots().len() * 4)
        .filter(|i| !frozen[i % 4])
        .collect();
    let problem = Problem {
        layout: initial,
        objective,
        limits,
        frozen,
        free,
    };

    let (mut x, violation) = problem.project(&flatten(initial.knots()));
    if violation > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "no feasible knots found near the initial spline (violation {violation:.3e})"
        )));
    }
    let mut f = problem.cost(&x);
    if !f.is_finite() {
        let err = problem
            .spline(&x)
            .and_then(|s| objective.evaluate(&s))
            .err()
            .map(|e| e.to_string())
            .unwrap_or_else(|| "non-finite cost".into());
        return Err(Error::Infeasible(format!("cost undefined at the projected initial spline: {err}")));
    }
    let initial_cost = f;
    let mut evaluations = 1;
    let mut log = Vec::new();
    let mut memory: VecDeque<(DVector<f64>, DVector<f64>)> = VecDeque::new();
    let mut g = problem.gradient(&x, cfg.fd_step);
    evaluations += 2 * problem.free.len();

    for iteration in 0..cfg.budget {
        let g_inf = g.amax();
        if g_inf == 0.0 {
            break;
        }
        let steepest = -&g * (cfg.initial_step / g_inf);
        let mut candidates = Vec::with_capacity(2);
        if !memory.is_empty() {
            let d = lbfgs_direction(&g, &memory);
            if d.dot(&g) < 0.0 && d.iter().all(|v| v.is_finite()) {
                candidates.push(d);
            }
        }
        candidates.push(steepest);

        let mut accepted = None;
        'dirs: for d in &candidates {
            let mut alpha = 1.0;
            for _ in 0..=cfg.max_backtracks {
                let (xt, v) = problem.project(&(&x + d * alpha));
                if v <= FEASIBILITY_TOL {
                    let ft = problem.cost(&xt);
                    evaluations += 1;
                    if ft < f && ft <= f + 1e-4 * g.dot(&(&xt - &x)) {
                        accepted = Some((xt, ft));
                        break 'dirs;
                    }
                }
                alpha *= 0.5;
            }
        }

        match accepted {
            Some((xn, fnew)) => {
                let rel = (f - fnew) / f.abs().max(1e-300);
                let gn = problem.gradient(&xn, cfg.fd_step);
                evaluations += 2 * problem.free.len();
                let s = &xn - &x;
                let y = &gn - &g;
                if s.dot(&y) > 1e-12 * s.norm() * y.norm() {
                    memory.push_back((s, y));
                    if memory.len() > cfg.memory {
                        memory.pop_front();
                    }
                }
                x = xn;
                f = fnew;
                g = gn;
                log.push(IterationRecord {
                    iteration,
                    cost: f,
                    max_violation: problem.project(&x).1.max(0.0),
                    accepted: true,
                });
                if rel < cfg.rel_tol {
                    break;
                }
            }
            None => {
                log.push(IterationRecord {
                    iteration,
                    cost: f,
                    max_violation: problem.project(&x).1.max(0.0),
                    accepted: false,
                });
                break;
            }
        }
    }

    let spline = problem.spline(&x)?;
    let report = constraint_violations(&spline, limits);
    let mut diagnostics = Vec::new();
    if report.max_violation() > FEASIBILITY_TOL {
        diagnostics.push(format!("final violation {:.3e}", report.max_violation()));
    }
    if objective.spec.kind != CostKind::Mma {
        let acc = e2log_trajectory(
            &spline,
            objective.windows(),
            objective.engine(),
            &objective.spec.extrinsics,
        )?;
        let rank = rank_of(&acc.matrix, 1e-10)?;
        if rank.rank < acc.matrix.ncols() {
            let unobs = objective
                .spec
                .selection
                .indices
                .iter()
                .filter(|&&i| rank.null_space.row(i).norm() > 1e-6)
                .count();
            diagnostics.push(format!(
                "E2LOG matrix rank {} of {}; {} selected coordinates touch the null space",
                rank.rank,
                acc.matrix.ncols(),
                unobs
            ));
        }
    }
    Ok(OptimizeResult {
        spline,
        initial_cost,
        final_cost: f,
        log,
        diagnostics,
        evaluations,
    })
}
