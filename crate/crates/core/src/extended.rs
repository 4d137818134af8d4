//! Double-double arithmetic for the few determinants that need it.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`,
//! giving about 32 significant digits.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    let bb = s - a;
    DoubleDouble { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    DoubleDouble { hi: s, lo: b - (s - a) }
}

impl DoubleDouble {
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl From<f64> for DoubleDouble {
    fn from(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let u = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(u.hi, u.lo + t.lo)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // long division: three f64 quotient digits
        let q1 = self.hi / o.hi;
        let r = self - o * Self::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::from(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Self::from(q3)
    }
}

/// Gaussian elimination of the leading `steps` columns without pivoting;
/// the trailing block is left holding the Schur complement.
pub(crate) fn eliminate(a: &mut [Vec<DoubleDouble>], steps: usize) {
    let n = a.len();
    for c in 0..steps {
        let pivot = a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / pivot;
            for j in c + 1..n {
                a[i][j] = a[i][j] - f * a[c][j];
            }
        }
    }
}

pub(crate) fn lu_determinant(mut a: Vec<Vec<DoubleDouble>>) -> DoubleDouble {
    let n = a.len();
    let mut det = DoubleDouble::ONE;
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| a[x][k].hi.abs().total_cmp(&a[y][k].hi.abs())).unwrap_or(k);
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det = det * a[k][k];
        if a[k][k].hi == 0.0 {
            return det;
        }
        let pivot = a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            for j in k + 1..n {
                a[i][j] = a[i][j] - f * a[k][j];
            }
        }
    }
    det
}

/// Determinant by LU with partial pivoting, carried out in double-double.
pub fn det_extended(m: &DMatrix<f64>) -> f64 {
    let rows = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect()).collect();
    lu_determinant(rows).to_f64()
}
