//! Truncated Taylor arithmetic in one variable.
//!
//! A `Jet<N>` holds the first `N` normalised Taylor coefficients
//! `f(r), f'(r), f''(r)/2!, ...` of a function of the separation `r`.
//! Every operation is exact up to truncation, so derivatives of long
//! closed-form expressions come out without finite differencing.
//! Unknown high-order inputs may be carried as NaN; they only contaminate
//! coefficients at or above their own order.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize>(pub [f64; N]);

impl<const N: usize> Jet<N> {
    pub fn constant(value: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = value;
        Jet(c)
    }

    /// The independent variable evaluated at `x`.
    pub fn variable(x: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x;
        if N > 1 {
            c[1] = 1.0;
        }
        Jet(c)
    }

    /// Build from plain derivatives `f, f', f'', ...`; missing entries become NaN.
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        let mut c = [f64::NAN; N];
        let mut fact = 1.0;
        for (k, slot) in c.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            if let Some(d) = derivs.get(k) {
                *slot = d / fact;
            }
        }
        Jet(c)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `k`-th derivative.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        self.0[k] * fact
    }

    /// Jet of the derivative; the top coefficient becomes unknown.
    pub fn differentiate(&self) -> Self {
        let mut c = [f64::NAN; N];
        for k in 0..N.saturating_sub(1) {
            c[k] = (k + 1) as f64 * self.0[k + 1];
        }
        Jet(c)
    }

    pub fn recip(self) -> Self {
        Jet::constant(1.0) / self
    }

    pub fn sqrt(self) -> Self {
        let mut out = [0.0; N];
        let s0 = self.0[0].sqrt();
        out[0] = s0;
        for k in 1..N {
            let mut acc = self.0[k];
            for j in 1..k {
                acc -= out[j] * out[k - j];
            }
            out[k] = acc / (2.0 * s0);
        }
        Jet(out)
    }

    pub fn powi(self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut acc = Jet::constant(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }
}

impl<const N: usize> From<f64> for Jet<N> {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Jet(c)
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        Jet(c)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N {
            for j in 0..=k {
                c[k] += self.0[j] * rhs.0[k - j];
            }
        }
        Jet(c)
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N {
            let mut acc = self.0[k];
            for j in 1..=k {
                acc -= rhs.0[j] * c[k - j];
            }
            c[k] = acc / rhs.0[0];
        }
        Jet(c)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.0[0] += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.0[0] -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.scale(1.0 / rhs)
    }
}

impl<const N: usize> Add<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn add(self, rhs: Jet<N>) -> Jet<N> {
        rhs + self
    }
}

impl<const N: usize> Sub<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn sub(self, rhs: Jet<N>) -> Jet<N> {
        -rhs + self
    }
}

impl<const N: usize> Mul<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn mul(self, rhs: Jet<N>) -> Jet<N> {
        rhs.scale(self)
    }
}

impl<const N: usize> Div<Jet<N>> for f64 {
    type Output = Jet<N>;
    fn div(self, rhs: Jet<N>) -> Jet<N> {
        Jet::constant(self) / rhs
    }
}
