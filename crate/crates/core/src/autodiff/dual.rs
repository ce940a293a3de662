//! Dual numbers carrying a fixed-width vector of partial derivatives.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::scalar::{cholesky_in_place, cholesky_solve_in_place, Scalar};

/// A value together with its partial derivatives with respect to `K` seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub value: f64,
    pub partials: [f64; K],
}

impl<const K: usize> Dual<K> {
    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            partials: [0.0; K],
        }
    }

    /// A seed variable: unit partial in slot `slot`.
    pub fn variable(value: f64, slot: usize) -> Self {
        let mut partials = [0.0; K];
        partials[slot] = 1.0;
        Dual { value, partials }
    }

    #[inline]
    fn map(self, value: f64, slope: f64) -> Self {
        let mut partials = self.partials;
        for p in partials.iter_mut() {
            *p *= slope;
        }
        Dual { value, partials }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut partials = self.partials;
        for (p, r) in partials.iter_mut().zip(rhs.partials.iter()) {
            *p += r;
        }
        Dual {
            value: self.value + rhs.value,
            partials,
        }
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut partials = self.partials;
        for (p, r) in partials.iter_mut().zip(rhs.partials.iter()) {
            *p -= r;
        }
        Dual {
            value: self.value - rhs.value,
            partials,
        }
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut partials = [0.0; K];
        for i in 0..K {
            partials[i] = self.value * rhs.partials[i] + rhs.value * self.partials[i];
        }
        Dual {
            value: self.value * rhs.value,
            partials,
        }
    }
}

impl<const K: usize> Div for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let value = self.value / rhs.value;
        let inv = 1.0 / rhs.value;
        let mut partials = [0.0; K];
        for i in 0..K {
            partials[i] = (self.partials[i] - value * rhs.partials[i]) * inv;
        }
        Dual { value, partials }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(-self.value, -1.0)
    }
}

impl<const K: usize> Add<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.value += rhs;
        self
    }
}

impl<const K: usize> Sub<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.value -= rhs;
        self
    }
}

impl<const K: usize> Mul<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.map(self.value * rhs, rhs)
    }
}

impl<const K: usize> Div<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        let value = self.value / rhs;
        let mut partials = self.partials;
        for p in partials.iter_mut() {
            *p /= rhs;
        }
        Dual { value, partials }
    }
}

impl<const K: usize> AddAssign for Dual<K> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const K: usize> SubAssign for Dual<K> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const K: usize> Scalar for Dual<K> {
    #[inline]
    fn constant(value: f64) -> Self {
        Dual::constant(value)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    fn sin(self) -> Self {
        self.map(self.value.sin(), self.value.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        self.map(self.value.cos(), -self.value.sin())
    }

    #[inline]
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.map(t, 1.0 - t * t)
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.partials.iter().all(|p| p.is_finite())
    }

    /// Factors the value matrix once, then differentiates the solution with
    /// `dx = A^-1 (db - dA x)` for every seed.
    fn solve_spd(a: &[Self], b: &[Self], n: usize) -> Option<Vec<Self>> {
        let mut l: Vec<f64> = a.iter().map(|e| e.value).collect();
        cholesky_in_place(&mut l, n)?;
        let mut x: Vec<f64> = b.iter().map(|e| e.value).collect();
        cholesky_solve_in_place(&l, n, &mut x);

        let mut out: Vec<Self> = x.iter().map(|&v| Dual::constant(v)).collect();
        let mut rhs = vec![0.0; n];
        for s in 0..K {
            for i in 0..n {
                let mut r = b[i].partials[s];
                for j in 0..n {
                    r -= a[i * n + j].partials[s] * x[j];
                }
                rhs[i] = r;
            }
            cholesky_solve_in_place(&l, n, &mut rhs);
            for i in 0..n {
                out[i].partials[s] = rhs[i];
            }
        }
        Some(out)
    }
}
