//! Uniform B-splines over the flat outputs `(x, y, z, yaw)`.
//!
//! Knot `i` sits at `t_i = t0 + i * dt_knot`. For `t ∈ [t_i, t_{i+1})` the
//! active knots are `y_{i-k+1} .. y_i`, so segments exist for
//! `i = k-1 .. N` and the valid span is `[t0 + (k-1) dt_knot, t0 + (N+1) dt_knot]`
//! (the right end evaluates the last segment at `u = 1`).
//!
//! Evaluation uses the cumulative form
//! `y(u) = [y_j, d_1, .., d_{k-1}] M̃ [1, u, .., u^{k-1}]ᵀ`
//! with `d_m = y_{j+m} - y_{j+m-1}` and `j = i - k + 1`.

mod flatness;
mod io;

pub use flatness::flat_to_state;
pub use io::{read_spline, write_spline};

use nalgebra::{DMatrix, Vector4};

use crate::{Error, Result};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 8;

const SPAN_TOL: f64 = 1e-9;

/// Flat output and its first three time derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlatState {
    pub value: Vector4<f64>,
    pub d1: Vector4<f64>,
    pub d2: Vector4<f64>,
    pub d3: Vector4<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Cumulative uniform B-spline mixing matrix of order `k` (degree `k-1`).
/// Rows index `[y_j, d_1, ..]`, columns index powers of `u`.
pub fn mixing_matrix(k: usize) -> Result<DMatrix<f64>> {
    if !(MIN_ORDER..=MAX_ORDER).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "spline order {k} outside [{MIN_ORDER}, {MAX_ORDER}]"
        )));
    }
    let mut m = DMatrix::zeros(k, k);
    for power in 0..k {
        for basis in 0..k {
            let mut sum = 0.0;
            for s in basis..k {
                let sign = if (s - basis) % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * binomial(k, s - basis) * ((k - s - 1) as f64).powi((k - 1 - power) as i32);
            }
            m[(basis, power)] = binomial(k - 1, k - 1 - power) * sum;
        }
    }
    // Cumulative form: row j collects the bases j..k.
    for j in 0..k {
        for l in j + 1..k {
            let row = m.row(l).into_owned();
            let mut target = m.row_mut(j);
            target += row;
        }
    }
    Ok(m / factorial(k - 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformSpline {
    knots: Vec<Vector4<f64>>,
    order: usize,
    dt_knot: f64,
    t0: f64,
    mixing: DMatrix<f64>,
}

impl UniformSpline {
    pub fn new(knots: Vec<Vector4<f64>>, order: usize, dt_knot: f64, t0: f64) -> Result<Self> {
        let mixing = mixing_matrix(order)?;
        if !(dt_knot > 0.0 && dt_knot.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt_knot must be positive, got {dt_knot}")));
        }
        if knots.len() < order {
            return Err(Error::InvalidArgument(format!(
                "{} knots is fewer than the spline order {order}",
                knots.len()
            )));
        }
        if !t0.is_finite() || knots.iter().any(|k| k.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite spline data".into()));
        }
        Ok(Self {
            knots,
            order,
            dt_knot,
            t0,
            mixing,
        })
    }

    /// A spline with every knot equal to `value`.
    pub fn constant(value: Vector4<f64>, n_knots: usize, order: usize, dt_knot: f64, t0: f64) -> Result<Self> {
        Self::new(vec![value; n_knots], order, dt_knot, t0)
    }

    pub fn knots(&self) -> &[Vector4<f64>] {
        &self.knots
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt_knot(&self) -> f64 {
        self.dt_knot
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Same layout with new knot values.
    pub fn with_knots(&self, knots: Vec<Vector4<f64>>) -> Result<Self> {
        if knots.len() != self.knots.len() {
            return Err(Error::InvalidArgument("knot count mismatch".into()));
        }
        Self::new(knots, self.order, self.dt_knot, self.t0)
    }

    pub fn n_segments(&self) -> usize {
        self.knots.len() + 1 - self.order
    }

    /// Closed valid evaluation span `[start, end]`.
    pub fn span(&self) -> (f64, f64) {
        let start = self.t0 + (self.order - 1) as f64 * self.dt_knot;
        let end = self.t0 + self.knots.len() as f64 * self.dt_knot;
        (start, end)
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.span();
        b - a
    }

    /// Segment index `i` (spans `[t_i, t_{i+1})`) and normalized time `u`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (start, end) = self.span();
        if !(t >= start - SPAN_TOL && t <= end + SPAN_TOL) {
            return Err(Error::OutOfSpan { t, start, end });
        }
        let x = (t - self.t0) / self.dt_knot;
        let first = self.order - 1;
        let last = self.knots.len() - 1;
        let seg = (x.floor() as isize).clamp(first as isize, last as isize) as usize;
        let u = (x - seg as f64).clamp(0.0, 1.0);
        Ok((seg, u))
    }

    /// `d`-th time derivative at `t`.
    pub fn eval(&self, t: f64, d: usize) -> Result<Vector4<f64>> {
        if d >= self.order {
            return Err(Error::InvalidArgument(format!(
                "derivative order {d} not available for spline order {}",
                self.order
            )));
        }
        let (seg, u) = self.locate(t)?;
        Ok(self.eval_segment(seg, u, d))
    }

    fn eval_segment(&self, seg: usize, u: f64, d: usize) -> Vector4<f64> {
        let k = self.order;
        // d-th derivative of [1, u, .., u^{k-1}].
        let mut basis = vec![0.0; k];
        for (p, b) in basis.iter_mut().enumerate().skip(d) {
            let coeff: f64 = ((p - d + 1)..=p).map(|v| v as f64).product();
            *b = coeff * u.powi((p - d) as i32);
        }
        let j0 = seg + 1 - k;
        let mut out = Vector4::zeros();
        for j in 0..k {
            let w: f64 = (0..k).map(|p| self.mixing[(j, p)] * basis[p]).sum();
            if w == 0.0 {
                continue;
            }
            let term = if j == 0 {
                self.knots[j0]
            } else {
                self.knots[j0 + j] - self.knots[j0 + j - 1]
            };
            out += term * w;
        }
        out * self.dt_knot.powi(-(d as i32))
    }

    /// Value and first three derivatives at `t`. Requires order ≥ 4.
    pub fn flat_state(&self, t: f64) -> Result<FlatState> {
        if self.order < 4 {
            return Err(Error::InvalidArgument("flat state needs spline order >= 4".into()));
        }
        let (seg, u) = self.locate(t)?;
        Ok(FlatState {
            value: self.eval_segment(seg, u, 0),
            d1: self.eval_segment(seg, u, 1),
            d2: self.eval_segment(seg, u, 2),
            d3: self.eval_segment(seg, u, 3),
        })
    }

    /// Vehicle state and kinematic input at `t` via the flatness map.
    pub fn state_at(
        &self,
        t: f64,
        gravity: &nalgebra::Vector3<f64>,
    ) -> Result<(crate::system::VehicleState, crate::system::KinematicInput)> {
        let fs = self.flat_state(t)?;
        flat_to_state(&fs, gravity).map_err(|e| match e {
            Error::FlatnessSingularity { reason, .. } => Error::FlatnessSingularity { t, reason },
            other => other,
        })
    }

    /// Knots of the `d`-th derivative spline (`d = 1` or `2`). Entry `i`
    /// is the finite difference starting at knot `i`.
    pub fn derivative_knots(&self, d: usize) -> Result<Vec<Vector4<f64>>> {
        let h = self.dt_knot;
        match d {
            1 => Ok(self.knots.windows(2).map(|w| (w[1] - w[0]) / h).collect()),
            2 => Ok(self
                .knots
                .windows(3)
                .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (h * h))
                .collect()),
            _ => Err(Error::InvalidArgument(format!("derivative knots only for d = 1, 2 (got {d})"))),
        }
    }

    /// Derivative knots active on segment `seg` (for the convex-hull bound).
    pub fn active_derivative_knots(&self, seg: usize, d: usize) -> Result<Vec<Vector4<f64>>> {
        let k = self.order;
        if d >= k || seg + 1 < k || seg >= self.knots.len() {
            return Err(Error::InvalidArgument("segment or derivative out of range".into()));
        }
        let j0 = seg + 1 - k;
        if d == 0 {
            return Ok(self.knots[j0..=seg].to_vec());
        }
        let dk = self.derivative_knots(d)?;
        Ok(dk[j0..=seg - d].to_vec())
    }

    /// Evenly spaced sample times over the span, including both ends.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.span();
        if n < 2 {
            return vec![a];
        }
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }
}
