use std::fmt;

use serde::Serialize;

use super::ExperimentConfig;
use crate::lie::{rank_diagnostic, rank_of, LieEngine, LieOrderConfig};
use crate::metrics::{e2log_trajectory, state_on};
use crate::optim::{accel_cost, knot_accel_cost, CostKind, Objective};
use crate::spline::UniformSpline;
use crate::system::{idx, STATE_DIM};
use crate::Result;

/// Relative singular-value threshold for the rank report.
const RANK_THRESHOLD: f64 = 1e-8;
/// Same, for the E²LOG matrix accumulated over the whole trajectory.
const TRAJECTORY_RANK_THRESHOLD: f64 = 1e-10;
const SPEED_SAMPLES: usize = 1001;
const RANK_WINDOWS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRank {
    pub t: f64,
    pub rank: usize,
    /// Unobservable directions touching the extrinsic translation block.
    pub extrinsic_translation_null: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub span: (f64, f64),
    pub max_speed: f64,
    pub max_accel: f64,
    pub accel_cost: f64,
    pub knot_accel_cost: f64,
    pub j_deterministic: f64,
    pub j_stochastic: f64,
    /// Pointwise rank at a few window starts. With a finite Lie order the
    /// extrinsic translation is never observable from a single point.
    pub ranks: Vec<WindowRank>,
    /// Rank of the E²LOG matrix summed over all windows.
    pub trajectory_rank: usize,
    pub trajectory_extrinsic_translation_null: usize,
}

impl TrajectoryReport {
    /// Unobservable directions of the whole trajectory.
    pub fn unobservable(&self) -> usize {
        STATE_DIM - self.trajectory_rank
    }
}

/// Kinematic summary, both observability costs and the observability rank
/// at a few windows spread over the span.
pub fn describe_trajectory(spline: &UniformSpline, cfg: &ExperimentConfig) -> Result<TrajectoryReport> {
    let span = spline.span();
    let (mut max_speed, mut max_accel) = (0.0f64, 0.0f64);
    for t in spline.sample_times(SPEED_SAMPLES) {
        max_speed = max_speed.max(spline.eval(t, 1)?.fixed_rows::<3>(0).norm());
        max_accel = max_accel.max(spline.eval(t, 2)?.fixed_rows::<3>(0).norm());
    }
    let j = |kind| Objective::new(cfg.cost_spec(kind), spline).and_then(|o| o.primary(spline));
    let engine = LieEngine::new(LieOrderConfig::with_order(cfg.lie_order), cfg.noise.gravity)?;
    let last_start = (span.1 - cfg.horizon).max(span.0);
    let mut ranks = Vec::with_capacity(RANK_WINDOWS);
    for i in 0..RANK_WINDOWS {
        let t = span.0 + (last_start - span.0) * i as f64 / (RANK_WINDOWS - 1) as f64;
        let (s, u) = state_on(spline, t, &engine, &cfg.truth)?;
        let rep = rank_diagnostic(&engine.observability_matrix(&s, &u)?, RANK_THRESHOLD)?;
        ranks.push(WindowRank {
            t,
            rank: rep.rank,
            extrinsic_translation_null: rep.null_rank_in(idx::P_IC..idx::P_IC + 3),
        });
    }
    let windows = Objective::new(cfg.cost_spec(CostKind::Deterministic), spline)?
        .windows()
        .to_vec();
    let acc = e2log_trajectory(spline, &windows, &engine, &cfg.truth)?;
    let total = rank_of(&acc.matrix, TRAJECTORY_RANK_THRESHOLD)?;
    Ok(TrajectoryReport {
        span,
        max_speed,
        max_accel,
        accel_cost: accel_cost(spline, &nalgebra::Matrix4::identity()),
        knot_accel_cost: knot_accel_cost(spline),
        j_deterministic: j(CostKind::Deterministic)?,
        j_stochastic: j(CostKind::Stochastic)?,
        ranks,
        trajectory_rank: total.rank,
        trajectory_extrinsic_translation_null: total.null_rank_in(idx::P_IC..idx::P_IC + 3),
    })
}

impl fmt::Display for TrajectoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "span             [{:.3}, {:.3}] s", self.span.0, self.span.1)?;
        writeln!(f, "max |v|          {:.4} m/s", self.max_speed)?;
        writeln!(f, "max |a|          {:.4} m/s^2", self.max_accel)?;
        writeln!(f, "accel cost       {:.6e}", self.accel_cost)?;
        writeln!(f, "knot accel cost  {:.6e}", self.knot_accel_cost)?;
        writeln!(f, "J deterministic  {:.6e}", self.j_deterministic)?;
        writeln!(f, "J stochastic     {:.6e}", self.j_stochastic)?;
        writeln!(
            f,
            "trajectory rank  {} of {STATE_DIM} ({} unobservable, extrinsic translation null {})",
            self.trajectory_rank,
            self.unobservable(),
            self.trajectory_extrinsic_translation_null
        )?;
        writeln!(f, "pointwise rank at window starts:")?;
        for r in &self.ranks {
            writeln!(
                f,
                "  t = {:7.3}  rank {:2}  unobservable {:2}  extrinsic translation null {}",
                r.t,
                r.rank,
                STATE_DIM - r.rank,
                r.extrinsic_translation_null
            )?;
        }
        Ok(())
    }
}
