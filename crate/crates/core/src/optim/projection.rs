//! Euclidean projection onto the knot feasible set, one channel at a time.
//!
//! For one channel with knots `y_0 .. y_N` the feasible set is the
//! intersection of
//!
//! * a box: `|y_i - y_start| ≤ eps` for `i < k`, `|y_i - y_end| ≤ eps` for
//!   `i > N - k`,
//! * slabs `|y_{i+1} - y_i| ≤ v dt` and `|y_{i+2} - 2 y_{i+1} + y_i| ≤ a dt²`.
//!
//! Dykstra's alternating projections converge to the nearest point of the
//! intersection. Slab corrections are multiples of the slab normal, so each
//! slab keeps a single scalar increment.

use nalgebra::Vector4;

use super::Limits;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelLimits {
    pub v_step: f64,
    pub a_step: f64,
    pub start: f64,
    pub end: f64,
    pub eps: f64,
}

impl ChannelLimits {
    pub fn from_limits(limits: &Limits, channel: usize, dt_knot: f64) -> Self {
        Self {
            v_step: limits.v_max[channel] * dt_knot,
            a_step: limits.a_max[channel] * dt_knot * dt_knot,
            start: limits.y_start[channel],
            end: limits.y_end[channel],
            eps: limits.eps[channel],
        }
    }
}

const VEL: [f64; 2] = [-1.0, 1.0];
const ACC: [f64; 3] = [1.0, -2.0, 1.0];

struct Slab {
    first: usize,
    coeffs: &'static [f64],
    norm2: f64,
    bound: f64,
}

impl Slab {
    fn value(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().enumerate().map(|(j, c)| c * y[self.first + j]).sum()
    }
    fn shift(&self, y: &mut [f64], amount: f64) {
        for (j, c) in self.coeffs.iter().enumerate() {
            y[self.first + j] += amount * c;
        }
    }
}

fn slabs(n: usize, lim: &ChannelLimits) -> Vec<Slab> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n.saturating_sub(1) {
        out.push(Slab {
            first: i,
            coeffs: &VEL,
            norm2: 2.0,
            bound: lim.v_step,
        });
    }
    for i in 0..n.saturating_sub(2) {
        out.push(Slab {
            first: i,
            coeffs: &ACC,
            norm2: 6.0,
            bound: lim.a_step,
        });
    }
    out
}

fn box_bounds(n: usize, k: usize, lim: &ChannelLimits) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            if i < k {
                lo = lo.max(lim.start - lim.eps);
                hi = hi.min(lim.start + lim.eps);
            }
            if i + k >= n {
                lo = lo.max(lim.end - lim.eps);
                hi = hi.min(lim.end + lim.eps);
            }
            (lo, hi)
        })
        .collect()
}

/// Largest constraint violation of one channel.
pub fn channel_violation(y: &[f64], k: usize, lim: &ChannelLimits) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (v, (lo, hi)) in y.iter().zip(box_bounds(y.len(), k, lim)) {
        worst = worst.max(lo - v).max(v - hi);
    }
    for s in slabs(y.len(), lim) {
        worst = worst.max(s.value(y).abs() - s.bound);
    }
    worst
}

/// Dykstra projection of one channel in place. Returns the final violation.
pub fn project_channel(y: &mut [f64], k: usize, lim: &ChannelLimits, tol: f64, max_sweeps: usize) -> f64 {
    let n = y.len();
    let bounds = box_bounds(n, k, lim);
    let slabs = slabs(n, lim);
    let mut p_box = vec![0.0; n];
    let mut p_slab = vec![0.0; slabs.len()];
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let z = y[i] + p_box[i];
            let x = z.clamp(bounds[i].0, bounds[i].1);
            p_box[i] = z - x;
            change = change.max((x - y[i]).abs());
            y[i] = x;
        }
        for (s, p) in slabs.iter().zip(p_slab.iter_mut()) {
            // z = y + p * a ; project z onto the slab.
            let v = s.value(y) + *p * s.norm2;
            let clamped = v.clamp(-s.bound, s.bound);
            let new_p = (v - clamped) / s.norm2;
            let delta = *p - new_p;
            s.shift(y, delta);
            change = change.max(delta.abs() * 2.0);
            *p = new_p;
        }
        if change < tol * 0.1 && channel_violation(y, k, lim) <= tol {
            break;
        }
    }
    channel_violation(y, k, lim)
}

/// Projects all four channels of a knot sequence. Channels with
/// `frozen[c]` are left untouched. Returns the largest remaining violation.
pub fn project_knots(
    knots: &mut [Vector4<f64>],
    order: usize,
    dt_knot: f64,
    limits: &Limits,
    frozen: [bool; 4],
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for c in 0..4 {
        let lim = ChannelLimits::from_limits(limits, c, dt_knot);
        let mut y: Vec<f64> = knots.iter().map(|k| k[c]).collect();
        let v = if frozen[c] {
            channel_violation(&y, order, &lim)
        } else {
            project_channel(&mut y, order, &lim, 1e-12, 200_000)
        };
        worst = worst.max(v);
        for (k, yi) in knots.iter_mut().zip(y) {
            k[c] = yi;
        }
    }
    worst
}
