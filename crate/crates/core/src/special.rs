//! Special functions and quadrature helpers.

use std::f64::consts::PI;

/// Bessel function of the first kind of integer order, `J_n(x)`.
///
/// Negative orders use `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    if order < 0 {
        let v = libm::jn(-order, x);
        if order % 2 == 0 {
            v
        } else {
            -v
        }
    } else {
        match order {
            0 => libm::j0(x),
            1 => libm::j1(x),
            _ => libm::jn(order, x),
        }
    }
}

/// `k`-th derivative of `J_0` at `x`, from
/// `J_0^{(k)} = 2^{-k} sum_j (-1)^j binom(k, j) J_{2j-k}`.
pub fn bessel_j0_derivative(k: usize, x: f64) -> f64 {
    let k_i = k as i32;
    let mut binom = 1.0;
    let mut acc = 0.0;
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * bessel_j(2 * j as i32 - k_i, x);
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    acc / f64::powi(2.0, k_i)
}

/// Probabilists' Hermite polynomial `He_k(x)`.
pub fn hermite_e(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `(k/2)!`, i.e. `Gamma(k/2 + 1)`, for integer `k >= -1`.
///
/// Integer and half-integer arguments are evaluated exactly by the
/// recurrence `z! = z (z-1)!` from `0! = 1` and `(-1/2)! = sqrt(pi)`.
pub fn half_factorial(k: i64) -> f64 {
    assert!(k >= -1, "half_factorial needs k >= -1, got {k}");
    let (mut value, mut z) = if k % 2 == 0 { (1.0, 0i64) } else { (PI.sqrt(), -1i64) };
    while z < k {
        z += 2;
        value *= z as f64 / 2.0;
    }
    value
}

/// Surface area `sigma_{n-1}` of the unit sphere in `n` dimensions.
pub fn sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    2.0 * PI.powf(n as f64 / 2.0) / half_factorial(n as i64 - 2)
}

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre rule mapped onto arbitrary panels.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}
