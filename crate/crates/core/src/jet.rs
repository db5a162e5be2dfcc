//! Forward-mode jets used to differentiate the system model exactly.
//!
//! Two number types are provided:
//!
//! * [`Dual`]: a value plus an `N`-dimensional gradient (first-order
//!   forward mode, one seed direction per error-state coordinate).
//! * [`Series`]: a truncated power series in time with `L` coefficients.
//!
//! Both implement [`Ring`], so a `Series<Dual<21>, 3>` carries the first three
//! time-Taylor coefficients of a trajectory together with their gradients
//! with respect to the initial error state. Everything the observability
//! engine needs from the system model is polynomial (quaternion products,
//! rotations, sums), which keeps the series arithmetic exact.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Commutative ring with an embedding of `f64` constants.
pub trait Ring:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn constant(v: f64) -> Self;

    fn scale(self, k: f64) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }
}

/// A ring that also supports the transcendental functions needed by the
/// flatness map.
pub trait Real: Ring + Div<Output = Self> {
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn re(&self) -> f64;
}

impl Ring for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

impl Real for f64 {
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn re(&self) -> f64 {
        *self
    }
}

/// First-order dual number with an `N`-dimensional infinitesimal part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn new(re: f64, eps: [f64; N]) -> Self {
        Self { re, eps }
    }

    /// `re` seeded along coordinate `i` with unit derivative.
    pub fn variable(re: f64, i: usize) -> Self {
        let mut eps = [0.0; N];
        eps[i] = 1.0;
        Self { re, eps }
    }

    /// Applies a scalar function with value `f` and derivative `df` at `re`.
    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= df;
        }
        Self { re: f, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for a in self.eps.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let eps = std::array::from_fn(|i| self.re * rhs.eps[i] + rhs.re * self.eps[i]);
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let eps = std::array::from_fn(|i| (self.eps[i] - re * rhs.eps[i]) * inv);
        Self { re, eps }
    }
}

impl<const N: usize> Ring for Dual<N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self {
            re: v,
            eps: [0.0; N],
        }
    }
    #[inline]
    fn scale(mut self, k: f64) -> Self {
        self.re *= k;
        for a in self.eps.iter_mut() {
            *a *= k;
        }
        self
    }
}

impl<const N: usize> Real for Dual<N> {
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn re(&self) -> f64 {
        self.re
    }
}

/// Truncated power series `c[0] + c[1] t + ... + c[L-1] t^(L-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series<T, const L: usize> {
    pub c: [T; L],
}

impl<T: Ring, const L: usize> Series<T, L> {
    pub fn from_constant(v: T) -> Self {
        let mut c = [T::zero(); L];
        c[0] = v;
        Self { c }
    }
}

impl<T: Ring, const L: usize> Add for Series<T, L> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..L {
            self.c[i] += rhs.c[i];
        }
        self
    }
}

impl<T: Ring, const L: usize> AddAssign for Series<T, L> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..L {
            self.c[i] += rhs.c[i];
        }
    }
}

impl<T: Ring, const L: usize> Sub for Series<T, L> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..L {
            self.c[i] = self.c[i] - rhs.c[i];
        }
        self
    }
}

impl<T: Ring, const L: usize> Neg for Series<T, L> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for i in 0..L {
            self.c[i] = -self.c[i];
        }
        self
    }
}

impl<T: Ring, const L: usize> Mul for Series<T, L> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut c = [T::zero(); L];
        for i in 0..L {
            for j in 0..L - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Self { c }
    }
}

impl<T: Ring, const L: usize> Ring for Series<T, L> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::from_constant(T::constant(v))
    }
    #[inline]
    fn scale(mut self, k: f64) -> Self {
        for i in 0..L {
            self.c[i] = self.c[i].scale(k);
        }
        self
    }
}
