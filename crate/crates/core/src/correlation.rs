//! Field correlation models and the two-point correlation scalars built from them.
//!
//! All lengths are in units of the inverse ring wavenumber. Separations are
//! taken along the first axis, so `r = (r, 0, ...)`.
//!
//! Away from the origin the scalars come from radial-derivative ratio
//! formulas. Those formulas cancel catastrophically as `r -> 0` (for example
//! `N = 3(rC'' - C')/r^3`), so below [`CorrelationModel::series_radius`]
//! they are evaluated instead
//! from the Taylor series of `C` through the reduced profile
//! `phi(s) = C(sqrt(s))`, whose derivatives give every cartesian derivative of
//! `C` at `(r, 0)` without cancellation.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::special::{bessel_j0_derivative, factorial, hermite_e};

/// Below this separation the ratio formulas are replaced by Taylor series,
/// for models that only supply a few origin derivatives.
pub const R_SWITCH: f64 = 1e-2;

/// Series radius for the built-in models. Their 24-term series is exact to
/// rounding well beyond it, while the ratio formulas for the sixth-order
/// scalars lose `eps / r^6` and are only trustworthy from about here on.
const BUILTIN_SERIES_RADIUS: f64 = 0.5;

/// Number of Taylor terms (in powers of `r^2`) kept for the built-in models.
const BUILTIN_TAYLOR_TERMS: usize = 24;

/// User-supplied isotropic correlation function.
///
/// Positivity of the power spectrum is not checked; supplying a valid
/// correlation function is the caller's responsibility.
pub trait CustomCorrelation: Send + Sync {
    fn name(&self) -> &str;
    /// Highest radial derivative order `derivative` can evaluate.
    fn max_order(&self) -> usize;
    /// `order`-th radial derivative of `C` at `r >= 0`.
    fn derivative(&self, order: usize, r: f64) -> f64;
    /// Even-order derivatives at the origin: `[C(0), C''(0), C''''(0), ...]`,
    /// at least through order 8.
    fn origin_derivatives(&self) -> Vec<f64>;
}

/// An isotropic correlation function `C(r)` with `C(0) = 1`.
#[derive(Clone)]
pub enum CorrelationModel {
    /// Monochromatic ring spectrum in the plane: `C = J_0(r)`.
    Ring2D,
    /// `C = exp(-r^2 / 2)`.
    GaussianC,
    Custom(Arc<dyn CustomCorrelation>),
}

impl fmt::Debug for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrelationModel::Ring2D => f.write_str("Ring2D"),
            CorrelationModel::GaussianC => f.write_str("GaussianC"),
            CorrelationModel::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

impl fmt::Display for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrelationModel::Ring2D => f.write_str("ring"),
            CorrelationModel::GaussianC => f.write_str("gauss"),
            CorrelationModel::Custom(c) => f.write_str(c.name()),
        }
    }
}

impl FromStr for CorrelationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(CorrelationModel::Ring2D),
            "gauss" => Ok(CorrelationModel::GaussianC),
            other => Err(Error::InvalidParameter(format!("unknown correlation model '{other}'"))),
        }
    }
}

/// `C(r)` and its first six radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeStack {
    pub r: f64,
    pub c: [f64; 7],
}

/// Values of the correlation scalars at zero separation. `E, G, I, P, Q, R`
/// vanish there; the rest are fixed by the even moments of `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginValues {
    /// `F_0 = H_0 = -C''(0)`
    pub f0: f64,
    /// `M_0 = N_0 = 3 L_0 = C''''(0)`
    pub m0: f64,
    pub l0: f64,
    /// `S_0 = V_0 = 5 T_0 = 5 U_0 = -C^(6)(0)`
    pub s0: f64,
    pub t0: f64,
}

/// Correlations between derivatives of the field at two points separated by
/// `r` along `x`, with `T` either `f64` or a [`Jet`] in `r`.
///
/// `e, f, h` are first-derivative correlations; `g, i, l, m, n` involve
/// third/fourth derivatives of `C`; `p` through `v` fifth/sixth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlations<T> {
    pub separation: f64,
    pub origin: OriginValues,
    pub c: T,
    pub e: T,
    pub f: T,
    pub h: T,
    pub g: T,
    pub i: T,
    pub l: T,
    pub m: T,
    pub n: T,
    pub p: T,
    pub q: T,
    pub r: T,
    pub s: T,
    pub t: T,
    pub u: T,
    pub v: T,
}

pub type DerivedCorrelations = Correlations<f64>;

impl<T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>> Correlations<T> {
    /// `W = (M + N - 2L) / 4`
    pub fn w(&self) -> T {
        (self.m + self.n - self.l * 2.0) * 0.25
    }

    /// `X = (P - Q) / 2`
    pub fn x(&self) -> T {
        (self.p - self.q) * 0.5
    }

    /// `Y = (Q - R) / 2`
    pub fn y(&self) -> T {
        (self.q - self.r) * 0.5
    }
}

impl<T> Correlations<T> {
    pub fn map<U>(self, f: impl Fn(T) -> U) -> Correlations<U> {
        Correlations {
            separation: self.separation,
            origin: self.origin,
            c: f(self.c),
            e: f(self.e),
            f: f(self.f),
            h: f(self.h),
            g: f(self.g),
            i: f(self.i),
            l: f(self.l),
            m: f(self.m),
            n: f(self.n),
            p: f(self.p),
            q: f(self.q),
            r: f(self.r),
            s: f(self.s),
            t: f(self.t),
            u: f(self.u),
            v: f(self.v),
        }
    }
}

impl CorrelationModel {
    pub fn custom(model: impl CustomCorrelation + 'static) -> Self {
        CorrelationModel::Custom(Arc::new(model))
    }

    /// Separation below which the scalars come from the Taylor series.
    pub fn series_radius(&self) -> f64 {
        match self {
            CorrelationModel::Custom(_) => R_SWITCH,
            _ => BUILTIN_SERIES_RADIUS,
        }
    }

    pub fn max_order(&self) -> usize {
        match self {
            CorrelationModel::Custom(c) => c.max_order(),
            _ => usize::MAX,
        }
    }

    /// `order`-th radial derivative of `C` at `r`.
    pub fn derivative(&self, order: usize, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("separation must be >= 0, got {r}")));
        }
        match self {
            CorrelationModel::Ring2D => Ok(bessel_j0_derivative(order, r)),
            CorrelationModel::GaussianC => {
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                Ok(sign * hermite_e(order, r) * (-0.5 * r * r).exp())
            }
            CorrelationModel::Custom(c) => {
                if order > c.max_order() {
                    Err(Error::Contract(format!(
                        "custom model '{}' provides derivatives up to order {}, order {} requested",
                        c.name(),
                        c.max_order(),
                        order
                    )))
                } else {
                    Ok(c.derivative(order, r))
                }
            }
        }
    }

    /// Derivatives of `C` through order six at `r`.
    pub fn eval_derivatives(&self, r: f64) -> Result<DerivativeStack> {
        let mut c = [0.0; 7];
        for (j, slot) in c.iter_mut().enumerate() {
            *slot = self.derivative(j, r)?;
        }
        if r == 0.0 {
            for j in [1, 3, 5] {
                c[j] = 0.0;
            }
        }
        Ok(DerivativeStack { r, c })
    }

    /// Coefficients `a_k` of `C(r) = sum_k a_k r^(2k)`.
    pub fn taylor_coefficients(&self) -> Vec<f64> {
        match self {
            CorrelationModel::Ring2D => (0..BUILTIN_TAYLOR_TERMS)
                .map(|k| {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sign / (4f64.powi(k as i32) * factorial(k).powi(2))
                })
                .collect(),
            CorrelationModel::GaussianC => (0..BUILTIN_TAYLOR_TERMS)
                .map(|k| (-0.5f64).powi(k as i32) / factorial(k))
                .collect(),
            CorrelationModel::Custom(c) => c
                .origin_derivatives()
                .iter()
                .enumerate()
                .map(|(k, d)| d / factorial(2 * k))
                .collect(),
        }
    }

    /// Even derivative `C^(2k)(0)`.
    pub fn origin_derivative(&self, order: usize) -> Result<f64> {
        if order % 2 == 1 {
            return Ok(0.0);
        }
        let a = self.taylor_coefficients();
        a.get(order / 2)
            .map(|ak| ak * factorial(order))
            .ok_or_else(|| Error::Contract(format!("model {self} has no origin derivative of order {order}")))
    }

    pub fn origin(&self) -> OriginValues {
        let a = self.taylor_coefficients();
        let d = |k: usize| a.get(k).map(|ak| ak * factorial(2 * k)).unwrap_or(f64::NAN);
        let (c2, c4, c6) = (d(1), d(2), d(3));
        OriginValues { f0: -c2, m0: c4, l0: c4 / 3.0, s0: -c6, t0: -c6 / 5.0 }
    }

    /// Check the sign pattern of the even moments a positive spectrum implies.
    pub fn validate(&self) -> Result<()> {
        let a = self.taylor_coefficients();
        if a.len() < 4 {
            return Err(Error::Contract(format!("model {self} must supply origin derivatives through order 6")));
        }
        if (a[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("model {self} is not normalised: C(0) = {}", a[0])));
        }
        if !(a[1] < 0.0 && a[2] > 0.0 && a[3] < 0.0) {
            return Err(Error::Contract(format!("model {self} has an invalid moment sign pattern")));
        }
        Ok(())
    }

    /// Jets `C^(j)` at `r` for `j = 0..=6`; orders the model cannot supply are NaN.
    pub(crate) fn derivative_jets<const N: usize>(&self, r: f64) -> [Jet<N>; 7] {
        let top = (6 + N - 1).min(self.max_order());
        let raw: Vec<f64> = (0..=top).map(|k| self.derivative(k, r).unwrap_or(f64::NAN)).collect();
        std::array::from_fn(|j| Jet::from_derivatives(raw.get(j..).unwrap_or(&[])))
    }

    /// The correlation scalars at `r` as jets in `r`.
    pub fn derived_jets<const N: usize>(&self, r: f64) -> Result<Correlations<Jet<N>>> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("separation must be >= 0, got {r}")));
        }
        let origin = self.origin();
        let rj = Jet::<N>::variable(r);
        if r < self.series_radius() {
            Ok(series_correlations(&self.taylor_coefficients(), rj, origin))
        } else {
            let c = self.derivative_jets::<N>(r);
            Ok(ratio_correlations(&c, rj, origin))
        }
    }

    /// The scalars from the radial ratio formulas, whatever `r` is.
    pub fn derived_by_ratio(&self, r: f64) -> Result<DerivedCorrelations> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("ratio formulas need r > 0, got {r}")));
        }
        let c = self.derivative_jets::<1>(r);
        Ok(ratio_correlations(&c, Jet::<1>::variable(r), self.origin()).map(|j| j.value()))
    }

    /// The scalars from the Taylor series of `C`, whatever `r` is.
    pub fn derived_by_series(&self, r: f64) -> Result<DerivedCorrelations> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("separation must be >= 0, got {r}")));
        }
        let taylor = self.taylor_coefficients();
        Ok(series_correlations(&taylor, Jet::<1>::variable(r), self.origin()).map(|j| j.value()))
    }

    /// The correlation scalars at `r`.
    pub fn derived(&self, r: f64) -> Result<DerivedCorrelations> {
        Ok(self.derived_jets::<1>(r)?.map(|j| j.value()))
    }
}

/// Correlation scalars from a derivative stack. Needs the model for the
/// Taylor coefficients used below the series radius.
pub fn derived_correlations(model: &CorrelationModel, stack: &DerivativeStack) -> DerivedCorrelations {
    let origin = model.origin();
    let r = Jet::<1>::variable(stack.r);
    let out = if stack.r < model.series_radius() {
        series_correlations(&model.taylor_coefficients(), r, origin)
    } else {
        let c = stack.c.map(|v| Jet::<1>::constant(v));
        ratio_correlations(&c, r, origin)
    };
    out.map(|j| j.value())
}

/// The radial ratio formulas.
pub(crate) fn ratio_correlations<const N: usize>(
    c: &[Jet<N>; 7],
    r: Jet<N>,
    origin: OriginValues,
) -> Correlations<Jet<N>> {
    let (c1, c2, c3, c4, c5, c6) = (c[1], c[2], c[3], c[4], c[5], c[6]);
    let r2 = r * r;
    let r3 = r2 * r;
    let r4 = r3 * r;
    let r5 = r4 * r;
    Correlations {
        separation: r.value(),
        origin,
        c: c[0],
        e: -c1,
        f: -c2,
        h: -c1 / r,
        g: c3,
        i: (r * c2 - c1) / r2,
        l: (r2 * c3 - r * c2 * 2.0 + c1 * 2.0) / r3,
        m: c4,
        n: (r * c2 - c1) * 3.0 / r3,
        p: -c5,
        q: -(r3 * c4 - r2 * c3 * 3.0 + r * c2 * 6.0 - c1 * 6.0) / r4,
        r: -(r2 * c3 - r * c2 * 3.0 + c1 * 3.0) * 3.0 / r4,
        s: -c6,
        t: -(r4 * c5 - r3 * c4 * 4.0 + r2 * c3 * 12.0 - r * c2 * 24.0 + c1 * 24.0) / r5,
        u: -(r3 * c4 - r2 * c3 * 5.0 + r * c2 * 12.0 - c1 * 12.0) * 3.0 / r5,
        v: -(r2 * c3 - r * c2 * 3.0 + c1 * 3.0) * 15.0 / r5,
    }
}

/// The same scalars from the Taylor series of `C`.
///
/// With `C(x, y) = phi(x^2 + y^2)`, the cartesian derivative at `(r, 0)` is
/// `d_x^a d_y^{2b} C = (2b)!/b! sum_k a!/(k!(a-2k)!) (2r)^{a-2k} phi^{(b+a-k)}(r^2)`.
pub(crate) fn series_correlations<const N: usize>(
    taylor: &[f64],
    r: Jet<N>,
    origin: OriginValues,
) -> Correlations<Jet<N>> {
    let s = r * r;
    // phi^{(j)}(s) = sum_{k >= j} a_k k!/(k-j)! s^(k-j)
    let phi: Vec<Jet<N>> = (0..=6)
        .map(|j| {
            let mut acc = Jet::<N>::constant(0.0);
            for k in (j..taylor.len()).rev() {
                let falling = factorial(k) / factorial(k - j);
                acc = acc * s + taylor[k] * falling;
            }
            acc
        })
        .collect();
    let two_r = r * 2.0;
    let cart = |a: usize, b_even: usize| -> Jet<N> {
        let beta = b_even / 2;
        let mut acc = Jet::<N>::constant(0.0);
        for k in 0..=a / 2 {
            let order = beta + a - k;
            if order >= phi.len() {
                continue;
            }
            let coef = factorial(a) / (factorial(k) * factorial(a - 2 * k));
            acc = acc + two_r.powi((a - 2 * k) as i32) * phi[order] * coef;
        }
        acc * (factorial(b_even) / factorial(beta))
    };
    Correlations {
        separation: r.value(),
        origin,
        c: cart(0, 0),
        e: -cart(1, 0),
        f: -cart(2, 0),
        h: -cart(0, 2),
        g: cart(3, 0),
        i: cart(1, 2),
        l: cart(2, 2),
        m: cart(4, 0),
        n: cart(0, 4),
        p: -cart(5, 0),
        q: -cart(3, 2),
        r: -cart(1, 4),
        s: -cart(6, 0),
        t: -cart(4, 2),
        u: -cart(2, 4),
        v: -cart(0, 6),
    }
}
