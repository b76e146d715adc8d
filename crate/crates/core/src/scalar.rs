//! Scalar abstraction so the physics evaluators run on plain floats or on
//! forward-mode dual numbers. The transcription uses the dual path to obtain
//! exact Jacobians of the smooth constraint blocks; everything else runs on
//! `f64`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic interface shared by `f64` and [`Dual`].
///
/// Only the operations the physics actually needs are included. Comparisons
/// and branch selection go through the real part, which keeps piecewise
/// definitions (lookup tables, floors) consistent between the two scalar
/// types.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;

    /// Real (value) part.
    fn re(self) -> f64;

    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    /// `max(self, floor)` with the derivative of the active branch.
    fn floor_at(self, floor: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }

    #[inline]
    fn re(self) -> f64 {
        self
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    #[inline]
    fn floor_at(self, floor: f64) -> Self {
        self.max(floor)
    }
}

/// Forward-mode dual number carrying one directional derivative.
///
/// Seeding `eps = 1` on one input of a function and reading `eps` of the
/// output yields the partial derivative with respect to that input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    #[inline]
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }

    /// Variable seed: value `re` with unit derivative.
    #[inline]
    pub fn seed(re: f64) -> Self {
        Self { re, eps: 1.0 }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        Self::new(
            self.re * inv,
            (self.eps - self.re * inv * rhs.eps) * inv,
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl Real for Dual {
    #[inline]
    fn constant(c: f64) -> Self {
        Self::new(c, 0.0)
    }

    #[inline]
    fn re(self) -> f64 {
        self.re
    }

    #[inline]
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Self::new(r, self.eps / (2.0 * r))
    }

    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Self::new(t, self.eps * (1.0 - t * t))
    }

    #[inline]
    fn floor_at(self, floor: f64) -> Self {
        if self.re >= floor {
            self
        } else {
            Self::constant(floor)
        }
    }
}
