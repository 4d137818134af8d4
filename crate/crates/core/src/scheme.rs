//! The generic matrix scheme for two-point charge correlations.
//!
//! For a singularity defined as a zero of an `n`-vector `v` whose jacobian
//! uses `m` distinct derivative slots, the Gaussian vector
//! `u = (derivative slots at A and B, v at A, v at B)` has covariance
//! `Sigma = [[A, B], [B^T, K]]`. Conditioning on `v_A = v_B = 0` leaves the
//! derivative slots with covariance `Xi = A - B K^-1 B^T` (the Schur
//! complement), and
//!
//! `g(r) = D / (d^2 (2 pi)^n sqrt(det K))`,  `D = E_Xi[J_A J_B]`,
//!
//! where `D` is expanded over perfect matchings of the jacobian factors.
//!
//! Slot orderings (0-based indices into `Sigma`):
//!
//! | kind | derivative slots | field-value block `K` |
//! |------|------------------|-----------------------|
//! | `VectorZero(n)` | `d_j v_i` at A for `(i, j)` row-major, then the same at B | `v_A1..v_An, v_B1..v_Bn` |
//! | `Critical2D` | `f_Axx, f_Ayy, f_Bxx, f_Byy, f_Axy, f_Bxy` | `f_Ax, f_Bx, f_Ay, f_By` |
//! | `Umbilic2D` | `f_Axxx, f_Axyy, f_Bxxx, f_Bxyy, f_Axxy, f_Ayyy, f_Bxxy, f_Byyy` | `(f_Axx-f_Ayy)/2, (f_Bxx-f_Byy)/2, f_Axy, f_Bxy` |

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::analytic::density;
use crate::correlation::CorrelationModel;
use crate::error::{Error, Result};
use crate::extended::{eliminate, lu_determinant, DoubleDouble};
use crate::kind::SingularityKind;

/// The scheme refuses separations at or below this value.
pub const R_MIN: f64 = 1e-3;

/// Largest condition number of `K` accepted before the Schur complement.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: f64,
    /// Local slot indices, one per factor.
    pub slots: Vec<usize>,
}

/// A jacobian written as a sum of `n`-fold products of derivative slots at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianForm {
    pub n: usize,
    pub m: usize,
    pub monomials: Vec<Monomial>,
}

impl JacobianForm {
    /// `det(d_j v_i)` with slot `i * n + j`.
    pub fn vector(n: usize) -> Self {
        let monomials = permutations(n)
            .into_iter()
            .map(|(perm, sign)| Monomial {
                coefficient: sign,
                slots: perm.iter().enumerate().map(|(i, &j)| i * n + j).collect(),
            })
            .collect();
        JacobianForm { n, m: n * n, monomials }
    }

    /// Hessian determinant `f_xx f_yy - f_xy^2`; slots `(xx, yy, xy)`.
    pub fn critical() -> Self {
        JacobianForm {
            n: 2,
            m: 3,
            monomials: vec![
                Monomial { coefficient: 1.0, slots: vec![0, 1] },
                Monomial { coefficient: -1.0, slots: vec![2, 2] },
            ],
        }
    }

    /// Jacobian of `((f_xx - f_yy)/2, f_xy)`:
    /// `(f_xxx f_xyy + f_yyy f_xxy - f_xyy^2 - f_xxy^2) / 2`; slots `(xxx, xyy, xxy, yyy)`.
    pub fn umbilic() -> Self {
        JacobianForm {
            n: 2,
            m: 4,
            monomials: vec![
                Monomial { coefficient: 0.5, slots: vec![0, 1] },
                Monomial { coefficient: 0.5, slots: vec![3, 2] },
                Monomial { coefficient: -0.5, slots: vec![1, 1] },
                Monomial { coefficient: -0.5, slots: vec![2, 2] },
            ],
        }
    }

    pub fn for_kind(kind: SingularityKind) -> Self {
        match kind {
            SingularityKind::VectorZero(n) => JacobianForm::vector(n),
            SingularityKind::Critical2D => JacobianForm::critical(),
            SingularityKind::Umbilic2D => JacobianForm::umbilic(),
        }
    }

    /// Evaluate the form on concrete slot values.
    pub fn evaluate(&self, slots: &[f64]) -> f64 {
        self.monomials
            .iter()
            .map(|mono| mono.coefficient * mono.slots.iter().map(|&s| slots[s]).product::<f64>())
            .sum()
    }
}

/// All permutations of `0..n` with their signs.
fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, f64)>) {
        let n = used.len();
        if prefix.len() == n {
            let inversions = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| prefix[i] > prefix[j])
                .count();
            out.push((prefix.clone(), if inversions % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for k in 0..n {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Assembled matrices for one kind at one separation.
#[derive(Debug, Clone)]
pub struct SchemeProblem {
    pub kind: SingularityKind,
    pub r: f64,
    pub sigma: DMatrix<f64>,
    pub kmat: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    /// `Xi` split as `A + Delta` with `Delta = -B K^-1 B^T`; see [`evaluate_d`].
    pub xi_base: DMatrix<f64>,
    pub xi_delta: DMatrix<f64>,
    pub jacobian: JacobianForm,
    /// Index in `xi` of each local jacobian slot at point A.
    pub slots_a: Vec<usize>,
    /// Same for point B.
    pub slots_b: Vec<usize>,
    pub det_k: f64,
    pub k_condition: f64,
}

impl SchemeProblem {
    /// Number of derivative rows/columns of `Sigma` (`2m`).
    pub fn derivative_dim(&self) -> usize {
        self.xi.nrows()
    }

    /// `det Xi` with the Schur complement redone in double-double.
    ///
    /// At small `r` `Xi` is nearly singular (condition ~1e13 for the
    /// critical case at `r = 0.3`), so the determinant of the rounded `xi`
    /// keeps only a few digits.
    pub fn det_xi(&self) -> f64 {
        let n = self.sigma.nrows();
        let k = self.kmat.nrows();
        let dm = n - k;
        // K first, eliminated without pivoting (it is positive definite);
        // what remains in the trailing block is Xi
        let order: Vec<usize> = (dm..n).chain(0..dm).collect();
        let mut a: Vec<Vec<DoubleDouble>> =
            order.iter().map(|&i| order.iter().map(|&j| self.sigma[(i, j)].into()).collect()).collect();
        eliminate(&mut a, k);
        let xi = a[k..].iter().map(|row| row[k..].to_vec()).collect();
        lu_determinant(xi).to_f64()
    }
}


fn symmetric_from_upper(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    for &(i, j, v) in entries {
        s[(i, j)] = v;
        s[(j, i)] = v;
    }
    s
}

/// Build `Sigma` for `kind` at separation `r` and reduce it to `K` and `Xi`.
pub fn assemble_sigma(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<SchemeProblem> {
    kind.validate()?;
    if !(r > R_MIN) {
        return Err(Error::DegenerateSeparation { r, r_min: R_MIN });
    }
    let (sigma, slots_a, slots_b) = match kind {
        SingularityKind::VectorZero(n) => vector_sigma(n, model, r)?,
        SingularityKind::Critical2D => critical_sigma(model, r)?,
        SingularityKind::Umbilic2D => umbilic_sigma(model, r)?,
    };
    let n = kind.dimension();
    let dm = sigma.nrows() - 2 * n;
    let a = sigma.view((0, 0), (dm, dm)).into_owned();
    let b = sigma.view((0, dm), (dm, 2 * n)).into_owned();
    let kmat = sigma.view((dm, dm), (2 * n, 2 * n)).into_owned();
    if kmat.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("model {model} cannot supply the correlations {kind} needs")));
    }

    let eig = SymmetricEigen::new(kmat.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = Cholesky::new(kmat.clone()).ok_or(Error::IllConditioned { condition })?;
    let det_k: f64 = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
    let kinv_bt = chol.solve(&b.transpose());
    let mut delta = -(&b * kinv_bt);
    for i in 0..dm {
        for j in i + 1..dm {
            let v = 0.5 * (delta[(i, j)] + delta[(j, i)]);
            delta[(i, j)] = v;
            delta[(j, i)] = v;
        }
    }
    let xi = &a + &delta;
    Ok(SchemeProblem {
        kind,
        r,
        sigma,
        kmat,
        xi,
        xi_base: a,
        xi_delta: delta,
        jacobian: JacobianForm::for_kind(kind),
        slots_a,
        slots_b,
        det_k,
        k_condition: condition,
    })
}

type Assembled = (DMatrix<f64>, Vec<usize>, Vec<usize>);

fn vector_sigma(n: usize, model: &CorrelationModel, r: f64) -> Result<Assembled> {
    let d = model.derived(r)?;
    let f0 = d.origin.f0;
    let m = n * n;
    let size = 2 * m + 2 * n;
    let sa = |i: usize, j: usize| i * n + j;
    let sb = |i: usize, j: usize| m + i * n + j;
    let va = |i: usize| 2 * m + i;
    let vb = |i: usize| 2 * m + n + i;
    let mut e = Vec::new();
    for i in 0..n {
        for j in 0..n {
            e.push((sa(i, j), sa(i, j), f0));
            e.push((sb(i, j), sb(i, j), f0));
            e.push((sa(i, j), sb(i, j), if j == 0 { d.f } else { d.h }));
        }
        e.push((sa(i, 0), vb(i), d.e));
        e.push((sb(i, 0), va(i), -d.e));
        e.push((va(i), va(i), 1.0));
        e.push((vb(i), vb(i), 1.0));
        e.push((va(i), vb(i), d.c));
    }
    Ok((symmetric_from_upper(size, &e), (0..m).collect(), (m..2 * m).collect()))
}

fn critical_sigma(model: &CorrelationModel, r: f64) -> Result<Assembled> {
    let d = model.derived(r)?;
    let o = d.origin;
    let (f0, m0, l0) = (o.f0, o.m0, o.l0);
    #[rustfmt::skip]
    let rows: [[f64; 10]; 10] = [
        [m0,  l0,  d.m,  d.l,  0.0, 0.0, 0.0,  d.g, 0.0,  0.0],
        [l0,  m0,  d.l,  d.n,  0.0, 0.0, 0.0,  d.i, 0.0,  0.0],
        [d.m, d.l, m0,   l0,   0.0, 0.0, -d.g, 0.0, 0.0,  0.0],
        [d.l, d.n, l0,   m0,   0.0, 0.0, -d.i, 0.0, 0.0,  0.0],
        [0.0, 0.0, 0.0,  0.0,  l0,  d.l, 0.0,  0.0, 0.0,  d.i],
        [0.0, 0.0, 0.0,  0.0,  d.l, l0,  0.0,  0.0, -d.i, 0.0],
        [0.0, 0.0, -d.g, -d.i, 0.0, 0.0, f0,   d.f, 0.0,  0.0],
        [d.g, d.i, 0.0,  0.0,  0.0, 0.0, d.f,  f0,  0.0,  0.0],
        [0.0, 0.0, 0.0,  0.0,  0.0, -d.i, 0.0, 0.0, f0,   d.h],
        [0.0, 0.0, 0.0,  0.0,  d.i, 0.0, 0.0,  0.0, d.h,  f0],
    ];
    let sigma = DMatrix::from_fn(10, 10, |i, j| rows[i][j]);
    Ok((sigma, vec![0, 1, 4], vec![2, 3, 5]))
}

fn umbilic_sigma(model: &CorrelationModel, r: f64) -> Result<Assembled> {
    let d = model.derived(r)?;
    let o = d.origin;
    let (l0, s0, t0) = (o.l0, o.s0, o.t0);
    let (w, x, y) = (d.w(), d.x(), d.y());
    let (q, rr) = (d.q, d.r);
    // Entries coupling third derivatives to the field values carry the sign
    // of the covariance <d^a f_A d^b f_B> = (-1)^|a| d^(a+b) C with P, Q, R
    // defined as minus the corresponding cartesian derivatives of C.
    #[rustfmt::skip]
    let rows: [[f64; 12]; 12] = [
        [s0,  t0,  d.s, d.t, 0.0, 0.0, 0.0, 0.0, 0.0, x,   0.0, 0.0],
        [t0,  t0,  d.t, d.u, 0.0, 0.0, 0.0, 0.0, 0.0, y,   0.0, 0.0],
        [d.s, d.t, s0,  t0,  0.0, 0.0, 0.0, 0.0, -x,  0.0, 0.0, 0.0],
        [d.t, d.u, t0,  t0,  0.0, 0.0, 0.0, 0.0, -y,  0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, t0,  t0,  d.t, d.u, 0.0, 0.0, 0.0, q],
        [0.0, 0.0, 0.0, 0.0, t0,  s0,  d.u, d.v, 0.0, 0.0, 0.0, rr],
        [0.0, 0.0, 0.0, 0.0, d.t, d.u, t0,  t0,  0.0, 0.0, -q,  0.0],
        [0.0, 0.0, 0.0, 0.0, d.u, d.v, t0,  s0,  0.0, 0.0, -rr, 0.0],
        [0.0, 0.0, -x,  -y,  0.0, 0.0, 0.0, 0.0, l0,  w,   0.0, 0.0],
        [x,   y,   0.0, 0.0, 0.0, 0.0, 0.0, 0.0, w,   l0,  0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -q,  -rr, 0.0, 0.0, l0,  d.l],
        [0.0, 0.0, 0.0, 0.0, q,   rr,  0.0, 0.0, 0.0, 0.0, d.l, l0],
    ];
    let sigma = DMatrix::from_fn(12, 12, |i, j| rows[i][j]);
    Ok((sigma, vec![0, 1, 4, 5], vec![2, 3, 6, 7]))
}

/// Entry `Xi_ij` of the conditional derivative covariance, 1-based as in
/// the slot table above.
pub fn xi_entry(problem: &SchemeProblem, i: usize, j: usize) -> Result<f64> {
    let dm = problem.derivative_dim();
    if i == 0 || j == 0 || i > dm || j > dm {
        return Err(Error::Contract(format!("Xi index ({i}, {j}) outside 1..={dm}")));
    }
    Ok(problem.xi[(i - 1, j - 1)])
}

/// All perfect matchings of `count` positions, each as a list of index pairs.
pub fn wick_pairings(count: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    if count % 2 == 1 {
        return Err(Error::Contract(format!("cannot pair an odd number ({count}) of factors")));
    }
    fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        let Some((&first, tail)) = rest.split_first() else {
            out.push(acc.clone());
            return;
        };
        for k in 0..tail.len() {
            let mut remaining: Vec<usize> = tail.to_vec();
            let partner = remaining.remove(k);
            acc.push((first, partner));
            rec(&remaining, acc, out);
            acc.pop();
        }
    }
    let positions: Vec<usize> = (0..count).collect();
    let mut out = Vec::new();
    rec(&positions, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Error-free running sum (cascaded two-sum), so that large terms which
/// cancel exactly leave the small ones intact.
#[derive(Default)]
struct ExactSum {
    hi: f64,
    lo: f64,
}

impl ExactSum {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        self.hi = s;
        self.lo += err;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// `D = E[J_A J_B]` under the covariance `Xi`, by Wick expansion.
///
/// Far apart, `D` is tiny while the individual pairing products are O(1)
/// and cancel exactly only in exact arithmetic. Each `Xi` entry is therefore
/// kept as `A + Delta`, every product is expanded over that split, and all
/// terms are accumulated without rounding loss.
pub fn evaluate_d(problem: &SchemeProblem) -> f64 {
    let jac = &problem.jacobian;
    let pairings = wick_pairings(2 * jac.n).expect("2n is even");
    let (base, delta) = (&problem.xi_base, &problem.xi_delta);
    let mut total = ExactSum::default();
    let mut factors = Vec::with_capacity(jac.n);
    for ma in &jac.monomials {
        for mb in &jac.monomials {
            let tau: Vec<usize> = ma
                .slots
                .iter()
                .map(|&s| problem.slots_a[s])
                .chain(mb.slots.iter().map(|&s| problem.slots_b[s]))
                .collect();
            let coef = ma.coefficient * mb.coefficient;
            for p in &pairings {
                factors.clear();
                factors.extend(p.iter().map(|&(x, y)| (base[(tau[x], tau[y])], delta[(tau[x], tau[y])])));
                for mask in 0u32..(1 << factors.len()) {
                    let term: f64 = factors
                        .iter()
                        .enumerate()
                        .map(|(k, &(b, d))| if mask >> k & 1 == 1 { d } else { b })
                        .product();
                    if term != 0.0 {
                        total.add(coef * term);
                    }
                }
            }
        }
    }
    total.value()
}

/// Charge correlation `g(r)` from the matrix scheme.
pub fn scheme_g(kind: SingularityKind, model: &CorrelationModel, r: f64) -> Result<f64> {
    let problem = assemble_sigma(kind, model, r)?;
    let d = density(kind, model)?;
    let n = kind.dimension() as i32;
    Ok(evaluate_d(&problem) / (d * d * (2.0 * PI).powi(n) * problem.det_k.sqrt()))
}
