//! Numeric abstraction shared by plain `f64` simulation and forward-mode
//! sensitivity propagation.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// A real number that may carry derivative information.
///
/// Every implementation must compute its `value()` with exactly the same
/// floating-point operations as the `f64` implementation, so that a
/// differentiated evaluation reproduces the plain one bit for bit.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn constant(value: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    /// Value and every carried derivative are finite.
    fn is_finite(&self) -> bool;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `max(0, self)`, with the derivative of the active branch.
    fn positive_part(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    /// Clamps to `[-limit, limit]`; a saturated result is a constant.
    fn clamp_abs(self, limit: f64) -> Self {
        let v = self.value();
        if v > limit {
            Self::constant(limit)
        } else if v < -limit {
            Self::constant(-limit)
        } else {
            self
        }
    }

    fn square(self) -> Self {
        self * self
    }

    /// Solves `A x = b` for a symmetric positive-definite row-major `n x n` matrix.
    /// Returns `None` if `A` is not numerically positive definite.
    fn solve_spd(a: &[Self], b: &[Self], n: usize) -> Option<Vec<Self>>;
}

impl Scalar for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
        let mut l = a.to_vec();
        cholesky_in_place(&mut l, n)?;
        let mut x = b.to_vec();
        cholesky_solve_in_place(&l, n, &mut x);
        Some(x)
    }
}

/// Lower-triangular Cholesky factor of a row-major SPD matrix, in place.
/// The strict upper triangle is left untouched and never read afterwards.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

pub(crate) fn cholesky_solve_in_place(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Planar vector helpers over any scalar.
pub(crate) type Vec2<T> = [T; 2];

#[inline]
pub(crate) fn add2<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub(crate) fn sub2<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn scale2<T: Scalar>(a: Vec2<T>, s: T) -> Vec2<T> {
    [a[0] * s, a[1] * s]
}

#[inline]
pub(crate) fn dot2<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// z-component of the planar cross product.
#[inline]
pub(crate) fn cross2<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[1] - a[1] * b[0]
}

/// Rotates `v` counter-clockwise by the angle whose sine and cosine are given.
#[inline]
pub(crate) fn rotate2<T: Scalar>(sin: T, cos: T, v: Vec2<T>) -> Vec2<T> {
    [cos * v[0] - sin * v[1], sin * v[0] + cos * v[1]]
}

#[inline]
pub(crate) fn lift2<T: Scalar>(v: [f64; 2]) -> Vec2<T> {
    [T::constant(v[0]), T::constant(v[1])]
}
