//! Closed-form densities, h-functions, charge correlations and sum rules.
//!
//! Every kind shares the generic form
//!
//! `g(r) = (n-1)! / ((2 pi)^n d^2 r^(n-1)) * dh/dr`
//!
//! so the cumulative charge around a singularity is
//! `Q(R) = (n-1)! sigma_{n-1} / ((2 pi)^n d) * (h(R) - h(0))`, which tends to
//! `-1` because `h` decays at infinity. Derivatives of `h` are taken with
//! [`Jet`] arithmetic, so `g` carries no finite-difference error.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationModel, Correlations};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::kind::SingularityKind;
use crate::special::{factorial, half_factorial, sphere_area, GaussRule};

/// Default cutoff for oscillatory (ring-type) quadrature.
pub const DEFAULT_CUTOFF: f64 = 200.0;

/// Cutoff used for rapidly decaying models.
const DECAYING_CUTOFF: f64 = 30.0;

/// Below this separation the scalar-field h (critical, umbilic) is taken
/// from an interpolating polynomial in `r^2`; the closed forms cancel there.
const SMALL_R: f64 = 0.05;

/// Panels per half-period `pi` of `cos(2r)`; fine enough for 10-point rules.
const PANELS_PER_PI: usize = 8;

fn origin_moments(kind: SingularityKind, model: &CorrelationModel) -> Result<(f64, f64, f64)> {
    kind.validate()?;
    let a = model.taylor_coefficients();
    let need = kind.required_order() / 2 + 1;
    if a.len() < need || a[..need].iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!(
            "model {model} must supply origin derivatives through order {} for {kind}",
            kind.required_order()
        )));
    }
    let d = |k: usize| a.get(k).map(|ak| ak * factorial(2 * k)).unwrap_or(f64::NAN);
    Ok((d(1), d(2), d(3)))
}

/// Mean number of singularities of `kind` per unit volume.
pub fn density(kind: SingularityKind, model: &CorrelationModel) -> Result<f64> {
    let (c2, c4, c6) = origin_moments(kind, model)?;
    Ok(match kind {
        SingularityKind::VectorZero(n) => {
            (-c2).powf(n as f64 / 2.0) * factorial(n - 1) * sphere_area(n) / (2.0 * PI).powi(n as i32)
        }
        SingularityKind::Critical2D => (2.0 * c4 / (3.0 * PI * 3f64.sqrt() * c2)).abs(),
        SingularityKind::Umbilic2D => (3.0 * c6 / (10.0 * PI * c4)).abs(),
    })
}

/// Mean volume of the parallelepiped spanned by `n` random unit-variance
/// Gaussian vectors, scaled as `((n-1)/2)! / pi^((n+1)/2)`.
pub fn hypervolume_constant(n: usize) -> f64 {
    assert!(n >= 1, "hypervolume_constant needs n >= 1");
    half_factorial(n as i64 - 1) / PI.powf((n as f64 + 1.0) / 2.0)
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    /// `(mean - target) / stderr`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

/// Expected `|det G|` for an `n x n` matrix of independent standard normals;
/// equals `(2 pi)^(n/2)` times [`hypervolume_constant`].
pub fn mean_abs_det_target(n: usize) -> f64 {
    (2.0 * PI).powf(n as f64 / 2.0) * hypervolume_constant(n)
}

/// Monte Carlo estimate of `<|det G|>` over standard-normal `n x n` matrices.
pub fn mean_abs_det_oracle(n: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if n == 0 || samples < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 1 and samples >= 2, got n={n}, samples={samples}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n * n];
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        for v in buf.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let det = determinant_in_place(&mut buf, n).abs();
        sum += det;
        sum2 += det * det;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean) * m / (m - 1.0);
    Ok(Estimate { mean, stderr: (var / m).sqrt(), samples })
}

/// Determinant by elimination with partial pivoting; destroys `a`.
fn determinant_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
        }
    }
    det
}

/// `1 - C(r)` without cancellation near the origin.
fn one_minus_c<const N: usize>(model: &CorrelationModel, r: f64, c: Jet<N>) -> Jet<N> {
    if r >= model.series_radius() {
        return 1.0 - c;
    }
    let a = model.taylor_coefficients();
    let rj = Jet::<N>::variable(r);
    let s = rj * rj;
    let mut acc = Jet::<N>::constant(0.0);
    for k in (1..a.len()).rev() {
        acc = (acc + a[k]) * s;
    }
    -acc
}

/// `h(0)`, the limit that fixes the screening normalisation.
pub fn h_at_origin(kind: SingularityKind, model: &CorrelationModel) -> Result<f64> {
    let (c2, c4, c6) = origin_moments(kind, model)?;
    Ok(match kind {
        SingularityKind::VectorZero(n) => (-c2).powf(n as f64 / 2.0),
        SingularityKind::Critical2D => 4.0 * c4 / (3.0 * 3f64.sqrt() * -c2),
        SingularityKind::Umbilic2D => 3.0 * -c6 / (5.0 * c4),
    })
}

/// `h` as a jet in `r`. For umbilics the top coefficient is unknown (NaN),
/// because the closed form already contains one derivative.
pub fn h_jet<const N: usize>(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<Jet<N>> {
    kind.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("h_jet needs r > 0, got {r}")));
    }
    let d: Correlations<Jet<N>> = model.derived_jets::<N>(r)?;
    let o = d.origin;
    Ok(match kind {
        SingularityKind::VectorZero(n) => {
            let omc = one_minus_c(model, r, d.c);
            let one_minus_c2 = omc * (2.0 - omc);
            (d.e / one_minus_c2.sqrt()).powi(n as i32)
        }
        SingularityKind::Critical2D => {
            let f02 = o.f0 * o.f0;
            let a = f02 - d.f * d.f;
            let b = f02 - d.h * d.h;
            let fh = d.f * d.h;
            let first = d.g * (3.0 * f02 - d.f * d.f * 2.0 - fh) / a;
            let second = d.i * (3.0 * f02 - d.h * d.h * 2.0 - fh) / b;
            d.i / (a * b).sqrt() * (first - second)
        }
        SingularityKind::Umbilic2D => {
            let l02 = o.l0 * o.l0;
            let w = d.w();
            let root = ((l02 - w * w) * (l02 - d.l * d.l)).sqrt() * 4.0;
            let rj = Jet::<N>::variable(r);
            let qr = d.q - d.r;
            let s = rj * qr * qr / root;
            s.differentiate() + d.q * (d.p + d.r - d.q * 2.0) / root
        }
    })
}

/// The h-function of `kind` at `r >= 0`; `r = 0` returns the exact limit.
pub fn h_function(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<f64> {
    if r == 0.0 {
        return h_at_origin(kind, model);
    }
    if needs_small_r(kind, r) {
        return Ok(small_r_h(kind, model, r)?.0);
    }
    Ok(h_jet::<2>(kind, model, r)?.value())
}

fn needs_small_r(kind: SingularityKind, r: f64) -> bool {
    matches!(kind, SingularityKind::Critical2D | SingularityKind::Umbilic2D) && r < SMALL_R
}

/// `h` and `dh/d(r^2)` from the polynomial in `s = r^2` through `h(0)` and
/// closed-form values on `[0.06, 0.4]`. `h` is even and analytic in `r`, so
/// this is interpolation with the exact value at the left end.
fn small_r_h(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<(f64, f64)> {
    const NODES: usize = 8;
    const SCALE: f64 = 0.16;
    let (lo, hi) = (0.06f64, 0.4f64);
    let mut s = vec![0.0];
    let mut h = vec![h_at_origin(kind, model)?];
    for j in 0..NODES {
        let t = ((2 * j + 1) as f64 * PI / (2 * NODES) as f64).cos();
        let rj = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
        s.push(rj * rj / SCALE);
        h.push(h_jet::<2>(kind, model, rj)?.value());
    }
    let m = s.len();
    let vander = nalgebra::DMatrix::from_fn(m, m, |i, k| s[i].powi(k as i32));
    let coef = vander
        .lu()
        .solve(&nalgebra::DVector::from_vec(h))
        .ok_or_else(|| Error::NonConvergence { operation: "small-r interpolation".into(), detail: "singular".into() })?;
    let x = r * r / SCALE;
    let (mut p, mut dp) = (0.0, 0.0);
    for k in (0..m).rev() {
        dp = dp * x + p;
        p = p * x + coef[k];
    }
    Ok((p, dp / SCALE))
}

/// Prefactor of `dh/dr` in `g`, without the `r^(1-n)`.
fn g_prefactor(kind: SingularityKind, d: f64) -> f64 {
    let n = kind.dimension();
    factorial(n - 1) / ((2.0 * PI).powi(n as i32) * d * d)
}

/// Prefactor turning `h(R) - h(0)` into the cumulative charge `Q(R)`.
fn q_prefactor(kind: SingularityKind, d: f64) -> f64 {
    let n = kind.dimension();
    factorial(n - 1) * sphere_area(n) / ((2.0 * PI).powi(n as i32) * d)
}

/// Charge correlation function from the closed-form h.
pub fn g_analytic(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("g is undefined at coincidence; got r = {r}")));
    }
    let d = density(kind, model)?;
    let dh = if needs_small_r(kind, r) {
        2.0 * r * small_r_h(kind, model, r)?.1
    } else {
        h_jet::<3>(kind, model, r)?.derivative(1)
    };
    Ok(g_prefactor(kind, d) * dh / r.powi(kind.dimension() as i32 - 1))
}

/// Cumulative charge `Q(R) = d * int_0^R g(s) sigma_{n-1} s^(n-1) ds`, from h.
pub fn cumulative_charge(kind: SingularityKind, model: &CorrelationModel, radius: f64) -> Result<f64> {
    let d = density(kind, model)?;
    let h0 = h_at_origin(kind, model)?;
    let hr = if radius == 0.0 { h0 } else { h_function(kind, model, radius)? };
    Ok(q_prefactor(kind, d) * (hr - h0))
}

/// g, h and Q tabulated over a grid of separations.
#[derive(Debug, Clone)]
pub struct ChargeCorrelation {
    pub kind: SingularityKind,
    pub model: CorrelationModel,
    pub density: f64,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub cumulative: Vec<f64>,
}

pub fn charge_correlation(kind: SingularityKind, model: &CorrelationModel, grid: &[f64]) -> Result<ChargeCorrelation> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("r grid must be strictly increasing".into()));
    }
    let density = density(kind, model)?;
    let h0 = h_at_origin(kind, model)?;
    let qp = q_prefactor(kind, density);
    let mut out = ChargeCorrelation {
        kind,
        model: model.clone(),
        density,
        r: grid.to_vec(),
        g: Vec::with_capacity(grid.len()),
        h: Vec::with_capacity(grid.len()),
        cumulative: Vec::with_capacity(grid.len()),
    };
    for &r in grid {
        let h = h_function(kind, model, r)?;
        out.g.push(g_analytic(kind, model, r)?);
        out.h.push(h);
        out.cumulative.push(qp * (h - h0));
    }
    Ok(out)
}

/// Whether the tail of the model oscillates without decaying fast.
fn is_oscillatory(model: &CorrelationModel) -> bool {
    !matches!(model, CorrelationModel::GaussianC)
}

/// Cumulative radial integrals `int_0^R f` on uniform panels, tabulated at
/// the panel ends.
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub step: f64,
    pub ends: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialTable {
    pub fn build<F: FnMut(f64) -> f64>(cutoff: f64, step: f64, mut f: F) -> Self {
        let rule = GaussRule::new(10);
        let panels = (cutoff / step).ceil() as usize;
        let mut ends = Vec::with_capacity(panels + 1);
        let mut values = Vec::with_capacity(panels + 1);
        ends.push(0.0);
        values.push(0.0);
        let mut acc = 0.0;
        for k in 0..panels {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            acc += rule.integrate(a, b, &mut f);
            ends.push(b);
            values.push(acc);
        }
        RadialTable { step, ends, values }
    }

    fn index_at(&self, radius: f64) -> usize {
        ((radius / self.step).round() as usize).min(self.ends.len() - 1)
    }

    /// Partial integral up to the panel end nearest `radius`.
    pub fn at(&self, radius: f64) -> f64 {
        self.values[self.index_at(radius)]
    }

    /// Mean of the partial integral over the last `period` before `radius`
    /// (trapezoid in the cutoff); removes oscillation at that period.
    pub fn averaged(&self, radius: f64, period: f64) -> f64 {
        let hi = self.index_at(radius);
        let width = ((period / self.step).round() as usize).clamp(1, hi);
        let lo = hi - width;
        let s = &self.values[lo..=hi];
        let inner: f64 = s[1..s.len() - 1].iter().sum();
        (inner + 0.5 * (s[0] + s[s.len() - 1])) / width as f64
    }
}

/// Result of the direct first-moment quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    /// From `h(0)` and `h(infinity) = 0`.
    pub closed_form: f64,
    /// `d int g d^n r` by quadrature with tail handling.
    pub quadrature: f64,
    /// Raw partial integral at the cutoff, before tail handling.
    pub partial: f64,
    /// Size of the tail correction applied.
    pub tail_correction: f64,
    pub cutoff: f64,
    pub converged: bool,
}

/// Screening quadrature for an arbitrary radial `g`. With `oscillatory`, the
/// partial integral is averaged over the period `pi` and extrapolated in
/// `1/R` from `R/2` and `R`.
pub fn screening_quadrature<G: FnMut(f64) -> f64>(
    g: G,
    density: f64,
    n: usize,
    cutoff: f64,
    oscillatory: bool,
) -> (f64, f64, f64) {
    let mut g = g;
    let sigma = sphere_area(n);
    let table = RadialTable::build(cutoff, PI / PANELS_PER_PI as f64, |s| {
        density * sigma * s.powi(n as i32 - 1) * g(s)
    });
    let partial = table.at(cutoff);
    if !oscillatory {
        return (partial, partial, 0.0);
    }
    let full = table.averaged(cutoff, PI);
    let half = table.averaged(cutoff / 2.0, PI);
    let extrapolated = 2.0 * full - half;
    (extrapolated, partial, extrapolated - partial)
}

/// First sum rule: closed form and direct quadrature of `d int g d^n r`.
pub fn screening_integral(kind: SingularityKind, model: &CorrelationModel) -> Result<ScreeningReport> {
    let d = density(kind, model)?;
    let closed_form = q_prefactor(kind, d) * (0.0 - h_at_origin(kind, model)?);
    let oscillatory = is_oscillatory(model);
    let cutoff = if oscillatory { DEFAULT_CUTOFF } else { DECAYING_CUTOFF };
    screening_with_cutoff(kind, model, cutoff, closed_form, oscillatory)
}

fn screening_with_cutoff(
    kind: SingularityKind,
    model: &CorrelationModel,
    cutoff: f64,
    closed_form: f64,
    oscillatory: bool,
) -> Result<ScreeningReport> {
    let d = density(kind, model)?;
    let mut failure = None;
    let (quadrature, partial, tail) = screening_quadrature(
        |s| match g_analytic(kind, model, s) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        d,
        kind.dimension(),
        cutoff,
        oscillatory,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let converged = quadrature.is_finite() && (quadrature - closed_form).abs() < 0.05;
    Ok(ScreeningReport { closed_form, quadrature, partial, tail_correction: tail, cutoff, converged })
}

/// Outcome of the second-moment analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentVerdict {
    /// The envelope-averaged partial integrals settle to this value.
    Converged(f64),
    /// The partial integrals keep growing with the cutoff. The growth
    /// exponent is reported separately in [`SumRuleReport`].
    LogDivergent,
    Undetermined,
}

/// Least-squares fit `y = a + b log R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

impl LogFit {
    /// Slope in units of its standard error.
    pub fn significance(&self) -> f64 {
        (self.slope / self.slope_stderr).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRuleReport {
    pub kind: SingularityKind,
    pub model: String,
    pub first_moment: ScreeningReport,
    /// Cutoffs and envelope-averaged `d int r^2 g d^n r` up to them.
    pub cutoffs: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub verdict: MomentVerdict,
    /// Local power-law exponent of the growth of the partial integrals
    /// (0 for logarithmic, 1 for linear); `None` once converged.
    pub growth_exponent: Option<f64>,
    pub log_fit: LogFit,
}

pub fn fit_log(cutoffs: &[f64], values: &[f64]) -> LogFit {
    let x: Vec<f64> = cutoffs.iter().map(|r| r.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = values.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(values).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(values).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (rss / (m - 2.0) / sxx).sqrt();
    LogFit { intercept, slope, slope_stderr }
}

/// Second sum rule: growth of `d int_0^R r^2 g d^n r` with the cutoff.
pub fn second_moment(kind: SingularityKind, model: &CorrelationModel, r_max: f64) -> Result<SumRuleReport> {
    if !(r_max >= 50.0) {
        return Err(Error::InvalidParameter(format!("second moment needs R_max >= 50, got {r_max}")));
    }
    let d = density(kind, model)?;
    let n = kind.dimension();
    let sigma = sphere_area(n);
    let closed_form = q_prefactor(kind, d) * (0.0 - h_at_origin(kind, model)?);
    let oscillatory = is_oscillatory(model);
    let first_moment = screening_with_cutoff(kind, model, r_max.min(DEFAULT_CUTOFF).max(50.0), closed_form, oscillatory)?;

    let mut failure = None;
    let table = RadialTable::build(r_max, PI / PANELS_PER_PI as f64, |s| {
        let g = g_analytic(kind, model, s).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        });
        d * sigma * s.powi(n as i32 + 1) * g
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let lo = 10.0f64;
    let count = 40;
    let cutoffs: Vec<f64> = (0..count)
        .map(|k| lo * (r_max / lo).powf(k as f64 / (count - 1) as f64))
        .collect();
    let second: Vec<f64> = cutoffs.iter().map(|&r| table.averaged(r, PI)).collect();
    let log_fit = fit_log(&cutoffs, &second);

    let at = |r: f64| table.averaged(r, PI);
    let (r0, r1, r2) = (r_max / 4.0, r_max / 2.0, r_max);
    let (m0, m1, m2) = (at(r0), at(r1), at(r2));
    let (d1, d2) = (m1 - m0, m2 - m1);
    let scale = 1.0 + m2.abs();
    let (verdict, growth_exponent) = if d2.abs() < 1e-8 * scale {
        (MomentVerdict::Converged(m2), None)
    } else {
        let ratio = d2 / d1;
        let exponent = if ratio > 0.0 { Some(ratio.log2()) } else { None };
        if ratio.abs() < 0.75 {
            (MomentVerdict::Converged(m2 + d2 * ratio / (1.0 - ratio)), None)
        } else if ratio >= 0.9 {
            (MomentVerdict::LogDivergent, exponent)
        } else {
            (MomentVerdict::Undetermined, exponent)
        }
    };
    Ok(SumRuleReport {
        kind,
        model: model.to_string(),
        first_moment,
        cutoffs,
        second_moment: second,
        verdict,
        growth_exponent,
        log_fit,
    })
}

/// Power-law exponent of the envelope of `f` over `[lo, hi]`: the maximum
/// of `|f|` in consecutive windows of width `period` is fitted against `r`
/// on log-log axes.
pub fn envelope_exponent<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, period: f64) -> Result<f64> {
    let samples_per_window = 64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut start = lo;
    while start + period <= hi + 1e-12 {
        let mut best = (0.0, start);
        for k in 0..=samples_per_window {
            let r = start + period * k as f64 / samples_per_window as f64;
            let v = f(r)?.abs();
            if v > best.0 {
                best = (v, r);
            }
        }
        xs.push(best.1);
        ys.push(best.0.ln());
        start += period;
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter("envelope range shorter than three periods".into()));
    }
    let fit = fit_log(&xs, &ys);
    Ok(fit.slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_r_interpolant_matches_closed_form() {
        for kind in [SingularityKind::Critical2D, SingularityKind::Umbilic2D] {
            for model in [CorrelationModel::Ring2D, CorrelationModel::GaussianC] {
                for r in [0.05, 0.1, 0.2, 0.3] {
                    let (h, dhds) = small_r_h(kind, &model, r).unwrap();
                    let jet = h_jet::<3>(kind, &model, r).unwrap();
                    assert!((h - jet.value()).abs() < 1e-10 * jet.value().abs(), "{kind} {model} r={r}");
                    let dh = 2.0 * r * dhds;
                    assert!((dh - jet.derivative(1)).abs() < 1e-7 * jet.derivative(1).abs(), "{kind} {model} r={r}");
                }
                let below = g_analytic(kind, &model, SMALL_R * (1.0 - 1e-12)).unwrap();
                let above = g_analytic(kind, &model, SMALL_R).unwrap();
                assert!((below - above).abs() < 1e-8 * above.abs(), "{kind} {model}: {below} vs {above}");
            }
        }
    }

    #[test]
    fn densities() {
        let ring = CorrelationModel::Ring2D;
        let gauss = CorrelationModel::GaussianC;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14 * b.abs();
        assert!(close(density(SingularityKind::VectorZero(2), &ring).unwrap(), 1.0 / (4.0 * PI)));
        assert!(close(density(SingularityKind::Critical2D, &ring).unwrap(), 1.0 / (2.0 * PI * 3f64.sqrt())));
        assert!(close(density(SingularityKind::Umbilic2D, &ring).unwrap(), 1.0 / (4.0 * PI)));
        assert!(close(density(SingularityKind::VectorZero(2), &gauss).unwrap(), 1.0 / (2.0 * PI)));
        assert!(close(density(SingularityKind::Critical2D, &gauss).unwrap(), 2.0 / (PI * 3f64.sqrt())));
        assert!(close(density(SingularityKind::Umbilic2D, &gauss).unwrap(), 3.0 / (2.0 * PI)));
        // Rice formula in one dimension
        assert!(close(density(SingularityKind::VectorZero(1), &gauss).unwrap(), 1.0 / PI));
    }

    #[test]
    fn hypervolumes() {
        assert!((hypervolume_constant(1) - 1.0 / PI).abs() < 1e-15);
        assert!((hypervolume_constant(2) - 0.5 / PI).abs() < 1e-15);
        assert!((hypervolume_constant(3) - 1.0 / (PI * PI)).abs() < 1e-15);
        assert!((mean_abs_det_target(1) - (2.0 / PI).sqrt()).abs() < 1e-14);
        assert!((mean_abs_det_target(2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn determinant_helper() {
        let mut a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        assert!((determinant_in_place(&mut a, 3) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn h_approaches_its_origin_limit() {
        for model in [CorrelationModel::Ring2D, CorrelationModel::GaussianC] {
            for kind in [SingularityKind::VectorZero(2), SingularityKind::Critical2D, SingularityKind::Umbilic2D] {
                let h0 = h_at_origin(kind, &model).unwrap();
                let h = h_function(kind, &model, 1e-3).unwrap();
                assert!((h - h0).abs() < 1e-4 * h0.abs(), "{kind} {model}: {h} vs {h0}");
            }
        }
    }

    #[test]
    fn g_needs_positive_separation() {
        let e = g_analytic(SingularityKind::Critical2D, &CorrelationModel::Ring2D, 0.0);
        assert!(matches!(e, Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_screening_is_exact() {
        for model in [CorrelationModel::Ring2D, CorrelationModel::GaussianC] {
            for kind in [
                SingularityKind::VectorZero(1),
                SingularityKind::VectorZero(2),
                SingularityKind::VectorZero(3),
                SingularityKind::Critical2D,
                SingularityKind::Umbilic2D,
            ] {
                let d = density(kind, &model).unwrap();
                let q = q_prefactor(kind, d) * -h_at_origin(kind, &model).unwrap();
                assert!((q + 1.0).abs() < 1e-12, "{kind} {model}: {q}");
            }
        }
    }

    #[test]
    fn poisson_control() {
        let (q, partial, _) = screening_quadrature(|_| 0.0, 0.1, 2, 50.0, true);
        assert_eq!((q, partial), (0.0, 0.0));
    }

    #[test]
    fn log_fit_recovers_slope() {
        let r: Vec<f64> = (1..20).map(|k| k as f64 * 10.0).collect();
        let y: Vec<f64> = r.iter().map(|v| 1.5 + 0.25 * v.ln()).collect();
        let fit = fit_log(&r, &y);
        assert!((fit.slope - 0.25).abs() < 1e-12 && (fit.intercept - 1.5).abs() < 1e-12);
    }
}
