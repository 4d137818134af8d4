//! Monte Carlo ground truth from synthesized random fields.
//!
//! Each realization is a finite random-wave sum
//! `f(r) = sqrt(2/M) sum_j cos(k_j . r + phi_j)`, whose derivatives are exact.
//! Singularities are located by scanning a grid for cells where both
//! components of the defining 2-vector change sign, refined by Newton's
//! method with the exact jacobian, and signed by the jacobian determinant.
//! Signed pair sums are accumulated with integer arithmetic per realization,
//! so results do not depend on how realizations are scheduled.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::Estimate;
use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::kind::SingularityKind;
use crate::special::{factorial, GaussRule};

/// Smallest wave count accepted by [`synthesize`].
pub const MIN_WAVES: usize = 32;

/// Default grid spacing is the scan wavelength over this. Coarser grids miss
/// close pairs of opposite charge often enough to bias the density.
pub const DEFAULT_RESOLUTION: f64 = 24.0;

/// Newton iteration cap per candidate.
const NEWTON_ITERATIONS: usize = 30;

/// Axis-aligned box `[0, width] x [0, height]` with an inner window inset by `margin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
}

impl Window {
    pub fn square(side: f64, margin: f64) -> Self {
        Window { width: side, height: side, margin }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0 && self.margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid window {self:?}")));
        }
        if !(self.width > 2.0 * self.margin && self.height > 2.0 * self.margin) {
            return Err(Error::InvalidParameter(format!(
                "window {}x{} leaves no inner region for margin {}",
                self.width, self.height, self.margin
            )));
        }
        Ok(())
    }

    pub fn inner_area(&self) -> f64 {
        (self.width - 2.0 * self.margin) * (self.height - 2.0 * self.margin)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.width).contains(&p[0]) && (0.0..=self.height).contains(&p[1])
    }

    pub fn in_inner(&self, p: [f64; 2]) -> bool {
        p[0] >= self.margin
            && p[0] < self.width - self.margin
            && p[1] >= self.margin
            && p[1] < self.height - self.margin
    }
}

/// Value and partial derivatives through order three at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldJet {
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
    pub fxxx: f64,
    pub fxxy: f64,
    pub fxyy: f64,
    pub fyyy: f64,
}

/// A planar scalar field (or several independent ones) with exact derivatives.
pub trait PlanarField: Sync {
    fn components(&self) -> usize;
    fn jet(&self, component: usize, x: f64, y: f64) -> FieldJet;

    /// The defining 2-vector of `kind` on the grid `xs x ys`, row-major in `y`.
    fn defining_grid(&self, kind: SingularityKind, xs: &[f64], ys: &[f64]) -> [DMatrix<f64>; 2] {
        let mut out = [DMatrix::zeros(ys.len(), xs.len()), DMatrix::zeros(ys.len(), xs.len())];
        for (iy, &y) in ys.iter().enumerate() {
            for (ix, &x) in xs.iter().enumerate() {
                let (v, _) = defining_vector(self, kind, [x, y]);
                out[0][(iy, ix)] = v[0];
                out[1][(iy, ix)] = v[1];
            }
        }
        out
    }
}

/// The defining vector of `kind` and its jacobian matrix `d v_i / d x_j`.
pub fn defining_vector<F: PlanarField + ?Sized>(
    field: &F,
    kind: SingularityKind,
    p: [f64; 2],
) -> ([f64; 2], [[f64; 2]; 2]) {
    match kind {
        SingularityKind::VectorZero(_) => {
            let a = field.jet(0, p[0], p[1]);
            let b = field.jet(1, p[0], p[1]);
            ([a.f, b.f], [[a.fx, a.fy], [b.fx, b.fy]])
        }
        SingularityKind::Critical2D => {
            let j = field.jet(0, p[0], p[1]);
            ([j.fx, j.fy], [[j.fxx, j.fxy], [j.fxy, j.fyy]])
        }
        SingularityKind::Umbilic2D => {
            let j = field.jet(0, p[0], p[1]);
            (
                [(j.fxx - j.fyy) / 2.0, j.fxy],
                [[(j.fxxx - j.fxyy) / 2.0, (j.fxxy - j.fyyy) / 2.0], [j.fxxy, j.fxyy]],
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub k: [f64; 2],
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComponent {
    pub amplitude: f64,
    pub waves: Vec<Wave>,
}

/// One synthesized realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    pub kind: SingularityKind,
    pub window: Window,
    pub components: Vec<FieldComponent>,
}

impl PlanarField for FieldRealization {
    fn components(&self) -> usize {
        self.components.len()
    }

    fn jet(&self, component: usize, x: f64, y: f64) -> FieldJet {
        let comp = &self.components[component];
        let mut j = FieldJet::default();
        for w in &comp.waves {
            let [kx, ky] = w.k;
            let (s, c) = (kx * x + ky * y + w.phase).sin_cos();
            j.f += c;
            j.fx -= kx * s;
            j.fy -= ky * s;
            j.fxx -= kx * kx * c;
            j.fxy -= kx * ky * c;
            j.fyy -= ky * ky * c;
            j.fxxx += kx * kx * kx * s;
            j.fxxy += kx * kx * ky * s;
            j.fxyy += kx * ky * ky * s;
            j.fyyy += ky * ky * ky * s;
        }
        let a = comp.amplitude;
        FieldJet {
            f: a * j.f,
            fx: a * j.fx,
            fy: a * j.fy,
            fxx: a * j.fxx,
            fxy: a * j.fxy,
            fyy: a * j.fyy,
            fxxx: a * j.fxxx,
            fxxy: a * j.fxxy,
            fxyy: a * j.fxyy,
            fyyy: a * j.fyyy,
        }
    }

    /// Separable evaluation: with `theta = kx x + (ky y + phi)`, every
    /// derivative combination is `Re(c e^{i theta})` for a per-wave complex
    /// weight `c`, which factorises into one matrix product over the grid.
    fn defining_grid(&self, kind: SingularityKind, xs: &[f64], ys: &[f64]) -> [DMatrix<f64>; 2] {
        let weights = |k: [f64; 2], slot: usize| -> (usize, f64, f64) {
            let [kx, ky] = k;
            match (kind, slot) {
                (SingularityKind::VectorZero(_), s) => (s, 1.0, 0.0),
                (SingularityKind::Critical2D, 0) => (0, 0.0, kx),
                (SingularityKind::Critical2D, _) => (0, 0.0, ky),
                (SingularityKind::Umbilic2D, 0) => (0, -(kx * kx - ky * ky) / 2.0, 0.0),
                (SingularityKind::Umbilic2D, _) => (0, -kx * ky, 0.0),
            }
        };
        let grid_for = |slot: usize| -> DMatrix<f64> {
            let (component, _, _) = weights([0.0, 0.0], slot);
            let comp = &self.components[component];
            let m = comp.waves.len();
            let mut left = DMatrix::zeros(ys.len(), 2 * m);
            let mut right = DMatrix::zeros(2 * m, xs.len());
            for (w, wave) in comp.waves.iter().enumerate() {
                let (_, cre, cim) = weights(wave.k, slot);
                let (cre, cim) = (cre * comp.amplitude, cim * comp.amplitude);
                for (iy, &y) in ys.iter().enumerate() {
                    let (sb, cb) = (wave.k[1] * y + wave.phase).sin_cos();
                    left[(iy, w)] = cre * cb - cim * sb;
                    left[(iy, m + w)] = -cre * sb - cim * cb;
                }
                for (ix, &x) in xs.iter().enumerate() {
                    let (sa, ca) = (wave.k[0] * x).sin_cos();
                    right[(w, ix)] = ca;
                    right[(m + w, ix)] = sa;
                }
            }
            left * right
        };
        [grid_for(0), grid_for(1)]
    }
}

/// Number of independent scalar fields a kind needs.
fn component_count(kind: SingularityKind) -> usize {
    match kind {
        SingularityKind::VectorZero(n) => n,
        _ => 1,
    }
}

/// Random-wave synthesis of `model` on `window` with `waves` waves per
/// component. Realization `index` draws from stream `index` of `seed`.
pub fn synthesize(
    model: &CorrelationModel,
    kind: SingularityKind,
    window: Window,
    waves: usize,
    seed: u64,
    index: u64,
) -> Result<FieldRealization> {
    kind.validate()?;
    window.validate()?;
    if kind.dimension() != 2 {
        return Err(Error::Contract(format!("the sampler is planar; {kind} is not supported")));
    }
    if waves < MIN_WAVES {
        return Err(Error::InvalidParameter(format!("need at least {MIN_WAVES} waves, got {waves}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let amplitude = (2.0 / waves as f64).sqrt();
    let mut components = Vec::new();
    for _ in 0..component_count(kind) {
        let mut list = Vec::with_capacity(waves);
        for j in 0..waves {
            let t: f64 = rng.gen_range(0.0..2.0 * PI);
            let k = match model {
                CorrelationModel::Ring2D => 1.0,
                // Rayleigh radius, one draw per equal-probability stratum:
                // each wave still averages to exactly C(r), but the high
                // spectral moments fluctuate far less between realizations.
                CorrelationModel::GaussianC => {
                    let u = (j as f64 + rng.gen::<f64>()) / waves as f64;
                    (-2.0 * (-u).ln_1p()).sqrt()
                }
                CorrelationModel::Custom(_) => {
                    return Err(Error::Contract(format!("no spectral sampler for model {model}")));
                }
            };
            let k = [k * t.cos(), k * t.sin()];
            let phase = rng.gen_range(0.0..2.0 * PI);
            list.push(Wave { k, phase });
        }
        components.push(FieldComponent { amplitude, waves: list });
    }
    Ok(FieldRealization { kind, window, components })
}

/// `E |k|^(2m)` of the planar spectrum of `model`.
fn spectral_moment(model: &CorrelationModel, m: usize) -> Result<f64> {
    let c = model.origin_derivative(2 * m)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * 4f64.powi(m as i32) * factorial(m).powi(2) * c / factorial(2 * m))
}

/// Characteristic wavelength of the defining vector of `kind`: `2 pi / k_eff`
/// with `k_eff^2` the ratio of consecutive spectral moments seen by it.
pub fn scan_wavelength(model: &CorrelationModel, kind: SingularityKind) -> Result<f64> {
    let j = match kind {
        SingularityKind::VectorZero(_) => 0,
        SingularityKind::Critical2D => 1,
        SingularityKind::Umbilic2D => 2,
    };
    let k2 = spectral_moment(model, j + 1)? / spectral_moment(model, j)?;
    Ok(2.0 * PI / k2.sqrt())
}

/// Typical size of the entries of the jacobian of the defining vector.
fn gradient_scale(model: &CorrelationModel, kind: SingularityKind) -> f64 {
    let o = model.origin();
    match kind {
        SingularityKind::VectorZero(_) => o.f0.sqrt(),
        SingularityKind::Critical2D => o.m0.sqrt(),
        SingularityKind::Umbilic2D => o.s0.sqrt() / 2.0,
    }
}

/// Detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    /// Grid spacing is `wavelength / resolution`.
    pub resolution: f64,
    pub wavelength: f64,
    /// Entry scale of the jacobian of the defining vector (residual units).
    pub gradient_scale: f64,
}

impl DetectOptions {
    pub fn for_model(model: &CorrelationModel, kind: SingularityKind) -> Result<Self> {
        Ok(DetectOptions {
            resolution: DEFAULT_RESOLUTION,
            wavelength: scan_wavelength(model, kind)?,
            gradient_scale: gradient_scale(model, kind),
        })
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub position: [f64; 2],
    pub kind: SingularityKind,
    pub charge: i8,
    pub residual: f64,
}

/// Per-realization detection tallies; merged by summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionDiagnostics {
    pub candidates: u64,
    pub accepted: u64,
    /// Newton did not converge within the iteration cap or left the window.
    pub dropped: u64,
    pub duplicates: u64,
    /// Jacobian sign disagreed with the plaquette winding number.
    pub winding_mismatches: u64,
    /// Residual above `1e-10` times the gradient scale.
    pub loose_residuals: u64,
}

impl DetectionDiagnostics {
    pub fn merge(&mut self, o: &DetectionDiagnostics) {
        self.candidates += o.candidates;
        self.accepted += o.accepted;
        self.dropped += o.dropped;
        self.duplicates += o.duplicates;
        self.winding_mismatches += o.winding_mismatches;
        self.loose_residuals += o.loose_residuals;
    }

    pub fn drop_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.dropped as f64 / self.candidates as f64
        }
    }
}

/// A refined zero of the defining vector.
#[derive(Debug, Clone, Copy)]
struct Root {
    p: [f64; 2],
    residual: f64,
    det: f64,
}

/// Damped Newton iteration: steps are capped at `max_step` and halved until
/// `|v|` decreases.
fn newton<F: PlanarField + ?Sized>(
    field: &F,
    kind: SingularityKind,
    start: [f64; 2],
    max_step: f64,
    tolerance: f64,
) -> Option<Root> {
    let mut p = start;
    let (mut v, mut j) = defining_vector(field, kind, p);
    for _ in 0..NEWTON_ITERATIONS {
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let mut dx = -(j[1][1] * v[0] - j[0][1] * v[1]) / det;
        let mut dy = -(-j[1][0] * v[0] + j[0][0] * v[1]) / det;
        let len = dx.hypot(dy);
        if len > max_step {
            dx *= max_step / len;
            dy *= max_step / len;
        }
        let norm = v[0].hypot(v[1]);
        let mut trial = [p[0] + dx, p[1] + dy];
        let mut next = defining_vector(field, kind, trial);
        for _ in 0..8 {
            if next.0[0].hypot(next.0[1]) < norm || len < tolerance {
                break;
            }
            dx *= 0.5;
            dy *= 0.5;
            trial = [p[0] + dx, p[1] + dy];
            next = defining_vector(field, kind, trial);
        }
        p = trial;
        (v, j) = next;
        if len < tolerance {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            return Some(Root { p, residual: v[0].hypot(v[1]), det });
        }
    }
    None
}

/// Winding number of the defining vector around a square of half-side `rho`.
pub fn winding_number<F: PlanarField + ?Sized>(field: &F, kind: SingularityKind, center: [f64; 2], rho: f64) -> i32 {
    const PER_SIDE: usize = 8;
    let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut angles = Vec::with_capacity(4 * PER_SIDE);
    for side in 0..4 {
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        for s in 0..PER_SIDE {
            let t = s as f64 / PER_SIDE as f64;
            let p = [
                center[0] + rho * (a[0] + t * (b[0] - a[0])),
                center[1] + rho * (a[1] + t * (b[1] - a[1])),
            ];
            let (v, _) = defining_vector(field, kind, p);
            angles.push(v[1].atan2(v[0]));
        }
    }
    let mut total = 0.0;
    for k in 0..angles.len() {
        let mut d = angles[(k + 1) % angles.len()] - angles[k];
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    (total / (2.0 * PI)).round() as i32
}

fn has_sign_change(values: [f64; 4]) -> bool {
    let pos = values.iter().any(|&v| v > 0.0);
    let neg = values.iter().any(|&v| v <= 0.0);
    pos && neg
}

/// Winding of the defining vector around a cell from its corner values,
/// ordered counter-clockwise, and whether every turn between corners is
/// small enough for the count to be trusted.
fn corner_winding(corners: &[[f64; 2]; 4]) -> (i32, bool) {
    let mut total = 0.0;
    let mut reliable = true;
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let mut d = b[1].atan2(b[0]) - a[1].atan2(a[0]);
        if d > PI {
            d -= 2.0 * PI;
        } else if d < -PI {
            d += 2.0 * PI;
        }
        reliable &= d.abs() < 2.0 * PI / 3.0;
        total += d;
    }
    ((total / (2.0 * PI)).round() as i32, reliable)
}

/// Deepest subdivision level for ambiguous cells.
const MAX_DEPTH: u32 = 3;

/// Collect Newton starting points inside the cell `[x0, x0+w] x [y0, y0+h]`
/// whose counter-clockwise corner values are `c`. A cell where both
/// components change sign and the corners show a trustworthy winding of
/// exactly +-1 is a candidate; any other cell where both components change
/// sign may hide a pair of opposite charges, or a near miss, and is split
/// in four.
#[allow(clippy::too_many_arguments)]
fn cell_candidates<F: PlanarField + ?Sized>(
    field: &F,
    kind: SingularityKind,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    c: [[f64; 2]; 4],
    depth: u32,
    out: &mut Vec<([f64; 2], [f64; 2])>,
) {
    let both = has_sign_change(c.map(|v| v[0])) && has_sign_change(c.map(|v| v[1]));
    if !both {
        return;
    }
    let (winding, reliable) = corner_winding(&c);
    if (winding.abs() == 1 && reliable) || (depth == MAX_DEPTH && winding != 0) {
        out.push(([x0 + 0.5 * w, y0 + 0.5 * h], [w, h]));
        return;
    }
    if depth == MAX_DEPTH {
        return;
    }
    let at = |x: f64, y: f64| defining_vector(field, kind, [x, y]).0;
    let (hw, hh) = (0.5 * w, 0.5 * h);
    let bottom = at(x0 + hw, y0);
    let right = at(x0 + w, y0 + hh);
    let top = at(x0 + hw, y0 + h);
    let left = at(x0, y0 + hh);
    let mid = at(x0 + hw, y0 + hh);
    let [sw, se, ne, nw] = c;
    let subs = [
        (x0, y0, [sw, bottom, mid, left]),
        (x0 + hw, y0, [bottom, se, right, mid]),
        (x0 + hw, y0 + hh, [mid, right, ne, top]),
        (x0, y0 + hh, [left, mid, top, nw]),
    ];
    for (sx, sy, corners) in subs {
        cell_candidates(field, kind, sx, sy, hw, hh, corners, depth + 1, out);
    }
}

/// Locate all singularities of `kind` in `window`.
pub fn detect<F: PlanarField + ?Sized>(
    field: &F,
    kind: SingularityKind,
    window: Window,
    options: &DetectOptions,
) -> (Vec<Singularity>, DetectionDiagnostics) {
    let mut diag = DetectionDiagnostics::default();
    let spacing = options.wavelength / options.resolution;
    let nx = (window.width / spacing).ceil() as usize + 1;
    let ny = (window.height / spacing).ceil() as usize + 1;
    let hx = window.width / (nx - 1) as f64;
    let hy = window.height / (ny - 1) as f64;
    let xs: Vec<f64> = (0..nx).map(|i| i as f64 * hx).collect();
    let ys: Vec<f64> = (0..ny).map(|i| i as f64 * hy).collect();
    let [v1, v2] = field.defining_grid(kind, &xs, &ys);
    let tolerance = 1e-12 * options.wavelength;
    let cell = hx.max(hy);
    let node = |iy: usize, ix: usize| [v1[(iy, ix)], v2[(iy, ix)]];

    let mut starts = Vec::new();
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let corners = [node(iy, ix), node(iy, ix + 1), node(iy + 1, ix + 1), node(iy + 1, ix)];
            cell_candidates(field, kind, xs[ix], ys[iy], hx, hy, corners, 0, &mut starts);
        }
    }
    let mut roots: Vec<([f64; 2], f64, f64)> = Vec::with_capacity(starts.len());
    for (start, size) in starts {
        diag.candidates += 1;
        // fall back to the quarter points of the cell if the centre fails
        let offsets = [[0.0, 0.0], [-0.25, -0.25], [0.25, -0.25], [0.25, 0.25], [-0.25, 0.25]];
        let root = offsets.iter().find_map(|o| {
            let s = [start[0] + o[0] * size[0], start[1] + o[1] * size[1]];
            newton(field, kind, s, cell, tolerance).filter(|r| window.contains(r.p))
        });
        match root {
            Some(r) => roots.push((r.p, r.residual, r.det)),
            None => diag.dropped += 1,
        }
    }

    // merge candidates that refined onto the same zero
    roots.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let merge_radius = options.wavelength / 100.0;
    let mut kept: Vec<([f64; 2], f64, f64)> = Vec::with_capacity(roots.len());
    'outer: for root in roots {
        for other in kept.iter().rev() {
            if root.0[0] - other.0[0] > merge_radius {
                break;
            }
            let same_sign = (root.2 > 0.0) == (other.2 > 0.0);
            if same_sign && (root.0[0] - other.0[0]).hypot(root.0[1] - other.0[1]) < merge_radius {
                diag.duplicates += 1;
                continue 'outer;
            }
        }
        kept.push(root);
    }

    let mut found = Vec::with_capacity(kept.len());
    for (i, &(p, residual, det)) in kept.iter().enumerate() {
        let charge: i8 = if det > 0.0 { 1 } else { -1 };
        let nearest = kept
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (q.0[0] - p[0]).hypot(q.0[1] - p[1]))
            .fold(f64::INFINITY, f64::min);
        // the winding equals the jacobian sign once the loop is small enough
        // to see only the linear part; shrink it a few times before
        // declaring a mismatch
        let mut rho = (cell / 8.0).min(0.3 * nearest);
        let mut consistent = false;
        for _ in 0..4 {
            if winding_number(field, kind, p, rho) == charge as i32 {
                consistent = true;
                break;
            }
            rho *= 0.1;
        }
        if !consistent {
            diag.winding_mismatches += 1;
        }
        if residual > 1e-10 * options.gradient_scale {
            diag.loose_residuals += 1;
        }
        found.push(Singularity { position: p, kind, charge, residual });
    }
    diag.accepted = found.len() as u64;
    (found, diag)
}

/// Signed pair sums of one realization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RealizationTally {
    /// Singularities in the inner window.
    pub centers: u64,
    /// Net charge in the inner window.
    pub net_charge: i64,
    /// Net charge in the whole window.
    pub net_charge_full: i64,
    pub sum_qq: Vec<i64>,
    pub pairs: Vec<u64>,
}

/// Binned signed pair sums over ordered pairs with the first point in the
/// inner window, plus per-realization tallies for error estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    pub bin_width: f64,
    pub bins: usize,
    pub window: Window,
    pub tallies: Vec<RealizationTally>,
}

/// One bin of the empirical correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    pub r_lo: f64,
    pub r_hi: f64,
    pub sum_qq: i64,
    pub pairs: u64,
    pub g: f64,
    pub stderr: f64,
}

/// Cumulative charge within `radius` of a singularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeCharge {
    pub radius: f64,
    pub q: f64,
    pub stderr: f64,
}

impl PairHistogram {
    pub fn new(bin_width: f64, r_max: f64, window: Window) -> Result<Self> {
        window.validate()?;
        if !(bin_width > 0.0 && r_max > 0.0) {
            return Err(Error::InvalidParameter(format!("bad binning: width {bin_width}, r_max {r_max}")));
        }
        if r_max > window.margin + 1e-12 {
            return Err(Error::InvalidParameter(format!("r_max {r_max} exceeds the margin {}", window.margin)));
        }
        let bins = (r_max / bin_width - 1e-9).ceil() as usize;
        Ok(PairHistogram { bin_width, bins, window, tallies: Vec::new() })
    }

    pub fn r_max(&self) -> f64 {
        self.bins as f64 * self.bin_width
    }

    /// Tally one realization's singularities.
    pub fn tally(&self, points: &[Singularity]) -> RealizationTally {
        let r_max = self.r_max();
        let mut t = RealizationTally {
            centers: 0,
            net_charge: 0,
            net_charge_full: points.iter().map(|p| p.charge as i64).sum(),
            sum_qq: vec![0; self.bins],
            pairs: vec![0; self.bins],
        };
        let mut sorted: Vec<&Singularity> = points.iter().collect();
        sorted.sort_by(|a, b| a.position[0].total_cmp(&b.position[0]));
        for (i, a) in sorted.iter().enumerate() {
            if !self.window.in_inner(a.position) {
                continue;
            }
            t.centers += 1;
            t.net_charge += a.charge as i64;
            let lo = sorted.partition_point(|p| p.position[0] < a.position[0] - r_max);
            for (j, b) in sorted.iter().enumerate().skip(lo) {
                if b.position[0] > a.position[0] + r_max {
                    break;
                }
                if j == i {
                    continue;
                }
                let r = (b.position[0] - a.position[0]).hypot(b.position[1] - a.position[1]);
                if r > 0.0 && r <= r_max {
                    let bin = ((r / self.bin_width).ceil() as usize).clamp(1, self.bins) - 1;
                    t.sum_qq[bin] += (a.charge as i64) * (b.charge as i64);
                    t.pairs[bin] += 1;
                }
            }
        }
        t
    }

    // Tallies are kept sorted so that any push/merge order gives the same
    // histogram, down to the floating-point summation order.
    pub fn push(&mut self, tally: RealizationTally) {
        let at = self.tallies.partition_point(|t| *t <= tally);
        self.tallies.insert(at, tally);
    }

    pub fn merge(&mut self, other: PairHistogram) {
        self.tallies.extend(other.tallies);
        self.tallies.sort();
    }

    pub fn total_centers(&self) -> u64 {
        self.tallies.iter().map(|t| t.centers).sum()
    }

    /// Mean density in the inner window with its realization-to-realization error.
    pub fn density(&self) -> Estimate {
        let area = self.window.inner_area();
        let counts: Vec<f64> = self.tallies.iter().map(|t| t.centers as f64 / area).collect();
        mean_estimate(&counts)
    }

    /// Ratio estimator `sum S_k / sum N_k` with its delta-method error.
    fn ratio(&self, s: impl Fn(&RealizationTally) -> i64) -> (f64, f64) {
        let k = self.tallies.len() as f64;
        let total_s: i64 = self.tallies.iter().map(&s).sum();
        let total_n = self.total_centers() as f64;
        if total_n == 0.0 {
            return (0.0, 0.0);
        }
        let ratio = total_s as f64 / total_n;
        let mean_n = total_n / k;
        let spread: f64 = self
            .tallies
            .iter()
            .map(|t| (s(t) as f64 - ratio * t.centers as f64).powi(2))
            .sum();
        let err = if k > 1.0 { (spread / (k * (k - 1.0))).sqrt() / mean_n } else { f64::INFINITY };
        (ratio, err)
    }

    /// Empirical `g` per bin: `sum q_i q_j / (d N_centers shell_area)`.
    pub fn estimate_g(&self) -> Vec<BinEstimate> {
        let d = self.density().mean;
        (0..self.bins)
            .map(|b| {
                let r_lo = b as f64 * self.bin_width;
                let r_hi = r_lo + self.bin_width;
                let shell = PI * (r_hi * r_hi - r_lo * r_lo);
                let (ratio, err) = self.ratio(|t| t.sum_qq[b]);
                let scale = if d > 0.0 { 1.0 / (d * shell) } else { 0.0 };
                BinEstimate {
                    r_lo,
                    r_hi,
                    sum_qq: self.tallies.iter().map(|t| t.sum_qq[b]).sum(),
                    pairs: self.tallies.iter().map(|t| t.pairs[b]).sum(),
                    g: ratio * scale,
                    stderr: err * scale,
                }
            })
            .collect()
    }

    /// Mean charge within each bin's outer radius of a singularity.
    pub fn empirical_screening(&self) -> Vec<CumulativeCharge> {
        (0..self.bins)
            .map(|b| {
                let (q, stderr) = self.ratio(|t| t.sum_qq[..=b].iter().sum());
                CumulativeCharge { radius: (b + 1) as f64 * self.bin_width, q, stderr }
            })
            .collect()
    }
}

fn mean_estimate(values: &[f64]) -> Estimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        f64::INFINITY
    };
    Estimate { mean, stderr: (var / m).sqrt(), samples: values.len() }
}

/// Parameters of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub kind: SingularityKind,
    pub realizations: usize,
    pub seed: u64,
    pub window: Window,
    pub waves: usize,
    pub bin_width: f64,
    /// Largest pair distance binned; at most the margin.
    pub r_max: f64,
    /// Grid resolution in units of the scan wavelength.
    pub resolution: f64,
}

impl SimulationConfig {
    pub fn new(kind: SingularityKind) -> Self {
        SimulationConfig {
            kind,
            realizations: 200,
            seed: 1,
            window: Window::square(40.0, 8.0),
            waves: 256,
            bin_width: 0.1,
            r_max: 8.0,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub histogram: PairHistogram,
    pub density: Estimate,
    pub diagnostics: DetectionDiagnostics,
}

/// Run independent realizations in parallel and merge their tallies.
pub fn simulate(model: &CorrelationModel, config: &SimulationConfig) -> Result<SimulationResult> {
    if config.realizations < 2 {
        return Err(Error::InvalidParameter("need at least two realizations".into()));
    }
    let options = DetectOptions::for_model(model, config.kind)?.with_resolution(config.resolution);
    let mut histogram = PairHistogram::new(config.bin_width, config.r_max, config.window)?;
    let per: Vec<Result<(RealizationTally, DetectionDiagnostics)>> = (0..config.realizations as u64)
        .into_par_iter()
        .map(|index| {
            let field = synthesize(model, config.kind, config.window, config.waves, config.seed, index)?;
            let (points, diag) = detect(&field, config.kind, config.window, &options);
            Ok((histogram.tally(&points), diag))
        })
        .collect();
    let mut diagnostics = DetectionDiagnostics::default();
    for item in per {
        let (tally, diag) = item?;
        histogram.push(tally);
        diagnostics.merge(&diag);
    }
    let density = histogram.density();
    Ok(SimulationResult { config: *config, histogram, density, diagnostics })
}

/// Analytic `g` averaged over the annulus `[lo, hi]` with area weight.
pub fn shell_average<G: FnMut(f64) -> Result<f64>>(mut g: G, lo: f64, hi: f64) -> Result<f64> {
    let rule = GaussRule::new(8);
    let mut failure = None;
    let num = rule.integrate(lo, hi, |r| {
        r * g(r).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(num / (0.5 * (hi * hi - lo * lo)))
}

/// Reduced chi-square of the empirical bins within `[lo, hi]` against `g`.
pub fn reduced_chi_square<G: FnMut(f64) -> Result<f64>>(
    bins: &[BinEstimate],
    mut g: G,
    lo: f64,
    hi: f64,
) -> Result<(f64, usize)> {
    let mut chi2 = 0.0;
    let mut dof = 0;
    for b in bins.iter().filter(|b| b.r_lo >= lo - 1e-9 && b.r_hi <= hi + 1e-9) {
        if !(b.stderr > 0.0) {
            continue;
        }
        let expect = shell_average(&mut g, b.r_lo, b.r_hi)?;
        chi2 += ((b.g - expect) / b.stderr).powi(2);
        dof += 1;
    }
    if dof == 0 {
        return Err(Error::InvalidParameter("no populated bins in the chi-square range".into()));
    }
    Ok((chi2 / dof as f64, dof))
}
