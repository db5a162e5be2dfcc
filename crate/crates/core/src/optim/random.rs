use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{constraint_violations, Limits};
use crate::spline::UniformSpline;
use crate::{Error, Result};

const MAX_TRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSplineConfig {
    pub order: usize,
    /// End position is uniform in a ball of this radius around the start [m].
    pub end_radius: f64,
    /// End yaw is uniform in `start ± yaw_range` [rad].
    pub yaw_range: f64,
    /// Free knots are perturbed uniformly by up to this much [m, rad].
    pub perturbation: f64,
}

impl Default for RandomSplineConfig {
    fn default() -> Self {
        Self {
            order: 6,
            end_radius: 3.0,
            yaw_range: std::f64::consts::FRAC_PI_2,
            perturbation: 0.5,
        }
    }
}

fn sample_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let d = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = d.norm();
        if n > 1e-12 {
            let r = radius * rng.random::<f64>().cbrt();
            return d * (r / n);
        }
    }
}

/// Feasible random spline starting (and resting) at `y_start`.
///
/// The first and last `k` knots sit exactly on the endpoints; the knots in
/// between interpolate linearly and are perturbed uniformly. Candidates
/// violating `limits` are rejected.
pub fn random_spline(
    y_start: Vector4<f64>,
    seed: u64,
    n_knots: usize,
    dt_knot: f64,
    limits: &Limits,
    cfg: &RandomSplineConfig,
) -> Result<UniformSpline> {
    let k = cfg.order;
    if n_knots < k {
        return Err(Error::InvalidArgument(format!("{n_knots} knots is fewer than the order {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_end = n_knots.saturating_sub(k).max(k - 1);
    for _ in 0..MAX_TRIES {
        let offset = sample_ball(&mut rng, cfg.end_radius);
        let yaw = rng.random_range(-1.0..=1.0) * cfg.yaw_range;
        let y_end = y_start + Vector4::new(offset.x, offset.y, offset.z, yaw);
        let mut knots = Vec::with_capacity(n_knots);
        for i in 0..n_knots {
            if i < k {
                knots.push(y_start);
            } else if i >= first_end {
                knots.push(y_end);
            } else {
                let s = (i - (k - 1)) as f64 / (first_end - (k - 1)) as f64;
                let jitter = Vector4::from_fn(|_, _| rng.random_range(-1.0..=1.0) * cfg.perturbation);
                knots.push(y_start + (y_end - y_start) * s + jitter);
            }
        }
        let spline = UniformSpline::new(knots, k, dt_knot, 0.0)?;
        let lim = limits.with_endpoints(y_start, y_end);
        if constraint_violations(&spline, &lim).is_feasible(0.0) {
            return Ok(spline);
        }
    }
    Err(Error::SamplingFailed(MAX_TRIES))
}
