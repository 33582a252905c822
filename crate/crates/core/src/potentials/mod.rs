//! Potentials: matrix-valued (1,0)-forms with rational entries in z, one
//! matrix per power of the loop parameter.

mod parse;
mod rational;

pub use parse::{parse_expr, parse_potential, serialize_potential};
pub use rational::{Poly, RationalExpr};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{algebra_residual, b1_of, inverse, split_blocks, sup, CMat, C64};
use crate::loops::TwistedLoop;

/// Number of random points used to certify identities of rational functions.
pub const IDENTITY_SAMPLES: usize = 20;
pub const IDENTITY_TOL: f64 = 1e-12;
const SAMPLE_SEED: u64 = 0x5eed_2014;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Normalized,
    Holomorphic,
    Constant,
}

/// Square or rectangular matrix of rational expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<RationalExpr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExprMatrix {
            rows,
            cols,
            entries: vec![RationalExpr::zero(); rows * cols],
        }
    }

    pub fn from_constant(m: &CMat) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, RationalExpr::constant(m[(i, j)]));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &RationalExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: RationalExpr) {
        self.entries[i * self.cols + j] = e;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub(crate) fn set_block(&mut self, r0: usize, c0: usize, rows: &[Vec<RationalExpr>]) {
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                self.set(r0 + i, c0 + j, e.clone());
            }
        }
    }

    /// Fill the off-diagonal blocks from a 4 x n block B: [[0, B], [-B^t J1, 0]].
    pub(crate) fn set_b1(&mut self, rows: &[Vec<RationalExpr>]) {
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                self.set(i, 4 + j, e.clone());
                let lower = if i == 0 { e.clone() } else { -e };
                self.set(4 + j, i, lower);
            }
        }
    }

    pub fn is_block_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| (i < 4) == (j < 4) || self.get(i, j).is_zero()))
    }

    pub fn is_b1_form(&self) -> bool {
        let n = self.rows - 4;
        let diag_zero = (0..self.rows).all(|i| (0..self.cols).all(|j| (i < 4) != (j < 4) || self.get(i, j).is_zero()));
        diag_zero
            && (0..4).all(|i| {
                (0..n).all(|j| {
                    let e = self.get(i, 4 + j);
                    let want = if i == 0 { e.clone() } else { -e };
                    *self.get(4 + j, i) == want
                })
            })
    }

    pub fn eval(&self, z: C64) -> Result<CMat> {
        let mut out = CMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let e = self.get(i, j);
                if !e.is_zero() {
                    out[(i, j)] = e.eval(z)?;
                }
            }
        }
        Ok(out)
    }

    pub fn derivative(&self) -> ExprMatrix {
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.derivative()).collect(),
        }
    }

    pub fn mul(&self, o: &ExprMatrix) -> ExprMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = ExprMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = RationalExpr::zero();
                for k in 0..self.cols {
                    let (a, b) = (self.get(i, k), o.get(k, j));
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &(a * b);
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add(&self, o: &ExprMatrix) -> ExprMatrix {
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(o.entries.iter()).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn poles(&self) -> Vec<C64> {
        self.entries.iter().filter(|e| !e.is_polynomial()).flat_map(|e| e.poles()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    n: usize,
    kind: PotentialKind,
    basepoint: C64,
    terms: BTreeMap<i64, ExprMatrix>,
}

impl Potential {
    pub(crate) fn from_parts(
        n: usize,
        kind: PotentialKind,
        basepoint: C64,
        terms: BTreeMap<i64, ExprMatrix>,
    ) -> Self {
        Potential {
            n,
            kind,
            basepoint,
            terms,
        }
    }

    /// A normalized potential lambda^{-1} [[0, B], [-B^t J1, 0]] dz from a 4 x n block.
    pub fn normalized_from_b1(b1: &[Vec<RationalExpr>], basepoint: C64) -> Result<Self> {
        if b1.len() != 4 || b1[0].is_empty() || b1.iter().any(|r| r.len() != b1[0].len()) {
            return Err(Error::domain("B1 must be a 4 x n block"));
        }
        let n = b1[0].len();
        let mut mat = ExprMatrix::zeros(n + 4, n + 4);
        mat.set_b1(b1);
        let mut terms = BTreeMap::new();
        terms.insert(-1, mat);
        Ok(Potential::from_parts(n, PotentialKind::Normalized, basepoint, terms))
    }

    /// Constant potential with matrix coefficients per loop power.
    pub fn constant(n: usize, terms: &BTreeMap<i64, CMat>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (&j, m) in terms {
            if m.nrows() != n + 4 || m.ncols() != n + 4 {
                return Err(Error::SizeMismatch {
                    expected: n + 4,
                    found: m.nrows(),
                });
            }
            out.insert(j, ExprMatrix::from_constant(m));
        }
        Ok(Potential::from_parts(n, PotentialKind::Constant, C64::new(0.0, 0.0), out))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn basepoint(&self) -> C64 {
        self.basepoint
    }

    pub fn with_basepoint(mut self, z0: C64) -> Self {
        self.basepoint = z0;
        self
    }

    pub fn terms(&self) -> &BTreeMap<i64, ExprMatrix> {
        &self.terms
    }

    pub fn min_power(&self) -> i64 {
        self.terms.keys().next().copied().unwrap_or(0)
    }

    pub fn max_power(&self) -> i64 {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|m| m.is_zero())
    }

    /// Coefficient matrices at z, keyed by loop power.
    pub fn eval(&self, z: C64) -> Result<BTreeMap<i64, CMat>> {
        self.terms.iter().map(|(&j, m)| Ok((j, m.eval(z)?))).collect()
    }

    /// The potential at z as a twisted loop (powers must lie in [-1, d]).
    pub fn eval_loop(&self, z: C64) -> Result<TwistedLoop> {
        let dn = (-self.min_power()).max(0) as usize;
        let dp = self.max_power().max(0) as usize;
        let mut out = TwistedLoop::zeros(self.n, dn, dp);
        for (j, m) in self.eval(z)? {
            out.set_coeff(j, m);
        }
        Ok(out)
    }

    /// The 4 x n block of the lambda^{-1} term.
    pub fn b1(&self, z: C64) -> Result<CMat> {
        match self.terms.get(&-1) {
            Some(m) => Ok(b1_of(&m.eval(z)?)),
            None => Ok(CMat::zeros(4, self.n)),
        }
    }

    /// Roots of all denominators.
    pub fn poles(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for m in self.terms.values() {
            for p in m.poles() {
                if out.iter().all(|q| (q - p).norm() > 1e-9) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Seeded sample points in the unit disc about the basepoint, away from poles.
    pub fn sample_points(&self, count: usize) -> Vec<C64> {
        let poles = self.poles();
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let r = rng.random_range(0.0f64..1.0).sqrt();
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let z = self.basepoint + C64::from_polar(r, t);
            if poles.iter().all(|p| (p - z).norm() > 1e-3) {
                out.push(z);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    /// max ||B^t J1 B|| over the samples.
    pub null_residual: f64,
    /// max ||eta_{-1}^3||.
    pub nilpotency_residual: f64,
    /// Largest entry in a block forbidden by the twist parity.
    pub parity_residual: f64,
    /// max ||X^t I + I X|| over all terms.
    pub algebra_residual: f64,
    /// Terms other than lambda^{-1} (a normalized potential has none).
    pub extra_terms: usize,
    pub samples: usize,
    pub passed: bool,
}

/// Null condition, nilpotency, parity and algebra checks at 20 seeded points.
pub fn validate_normalized(p: &Potential) -> ValidationReport {
    let mut rep = ValidationReport {
        null_residual: 0.0,
        nilpotency_residual: 0.0,
        parity_residual: 0.0,
        algebra_residual: 0.0,
        extra_terms: p.terms.keys().filter(|&&j| j != -1 && !p.terms[&j].is_zero()).count(),
        samples: IDENTITY_SAMPLES,
        passed: false,
    };
    let mut ok = true;
    for z in p.sample_points(IDENTITY_SAMPLES) {
        let Ok(terms) = p.eval(z) else {
            ok = false;
            continue;
        };
        for (&j, m) in &terms {
            let (k, q) = split_blocks(m);
            let bad = if j.rem_euclid(2) == 0 { sup(&q) } else { sup(&k) };
            rep.parity_residual = rep.parity_residual.max(bad);
            rep.algebra_residual = rep.algebra_residual.max(algebra_residual(m));
        }
        if let Some(eta) = terms.get(&-1) {
            let b = b1_of(eta);
            rep.null_residual = rep.null_residual.max(crate::linalg::null_residual(&b));
            rep.nilpotency_residual = rep.nilpotency_residual.max(sup(&(eta * eta * eta)));
        }
    }
    rep.passed = ok
        && rep.extra_terms == 0
        && rep.null_residual < IDENTITY_TOL
        && rep.nilpotency_residual < IDENTITY_TOL
        && rep.parity_residual == 0.0
        && rep.algebra_residual < IDENTITY_TOL;
    rep
}

/// B1 = (v, i v) with v = (f11, f21, f31, f41); requires -f11^2 + f21^2 + f31^2 + f41^2 = 0.
pub fn make_isotropic_potential(f: [RationalExpr; 4], basepoint: C64) -> Result<Potential> {
    let q = &(&(&f[1] * &f[1]) + &(&f[2] * &f[2])) + &(&(&f[3] * &f[3]) - &(&f[0] * &f[0]));
    let i = RationalExpr::constant(C64::new(0.0, 1.0));
    let rows: Vec<Vec<RationalExpr>> = f.iter().map(|e| vec![e.clone(), &i * e]).collect();
    let p = Potential::normalized_from_b1(&rows, basepoint)?;
    let mut worst: f64 = 0.0;
    for z in p.sample_points(IDENTITY_SAMPLES) {
        worst = worst.max(q.eval(z)?.norm());
    }
    if worst > IDENTITY_TOL {
        return Err(Error::NullConditionViolated { residual: worst });
    }
    Ok(p)
}

/// Rows (f1; -f1; f3; i f3); satisfies the null condition identically.
pub fn make_lightlike_potential(f1: &[RationalExpr], f3: &[RationalExpr], basepoint: C64) -> Result<Potential> {
    if f1.len() != f3.len() || f1.is_empty() {
        return Err(Error::domain("f1 and f3 must be non-empty rows of equal length"));
    }
    let i = RationalExpr::constant(C64::new(0.0, 1.0));
    let rows = vec![
        f1.to_vec(),
        f1.iter().map(|e| -e).collect(),
        f3.to_vec(),
        f3.iter().map(|e| &i * e).collect(),
    ];
    Potential::normalized_from_b1(&rows, basepoint)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialForm {
    LightlikeForm,
    ReducibleRank1,
    IsotropicForm,
    Generic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub form: PotentialForm,
    /// Largest numerical rank of B1 over the samples.
    pub rank: usize,
    /// Index of the Lorentz transform in the fixed search list that exposed the pattern.
    pub transform: Option<usize>,
}

/// The fixed search list: sign flips diag(1, s1, s2, s3) with s1 s2 s3 = 1
/// composed with quarter-turn rotations in the (2,3) plane.
fn search_transforms() -> Vec<CMat> {
    let signs = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    let mut out = Vec::new();
    for s in signs {
        for q in 0..4 {
            let (c, sn) = match q {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            };
            let mut rot = CMat::identity(4, 4);
            rot[(2, 2)] = C64::new(c, 0.0);
            rot[(2, 3)] = C64::new(-sn, 0.0);
            rot[(3, 2)] = C64::new(sn, 0.0);
            rot[(3, 3)] = C64::new(c, 0.0);
            let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
                C64::new(1.0, 0.0),
                C64::new(s[0], 0.0),
                C64::new(s[1], 0.0),
                C64::new(s[2], 0.0),
            ]));
            out.push(rot * d);
        }
    }
    out
}

fn numerical_rank(b: &CMat) -> usize {
    let sv = b.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |a, &v| a.max(v));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > 1e-9 * top).count()
}

fn row(b: &CMat, i: usize) -> Vec<C64> {
    (0..b.ncols()).map(|j| b[(i, j)]).collect()
}

fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}

fn scaled(v: &[C64], s: C64) -> Vec<C64> {
    v.iter().map(|x| x * s).collect()
}

/// Match B1 against the lightlike, reduced rank-one and isotropic patterns,
/// trying a fixed list of Lorentz transforms on the rows.
pub fn classify_potential(p: &Potential) -> Classification {
    let samples: Vec<CMat> = p
        .sample_points(IDENTITY_SAMPLES)
        .into_iter()
        .filter_map(|z| p.b1(z).ok())
        .collect();
    let rank = samples.iter().map(numerical_rank).max().unwrap_or(0);
    let i = C64::new(0.0, 1.0);
    let transforms = search_transforms();
    let all = |pred: &dyn Fn(&CMat, f64) -> bool, l: &CMat| {
        samples.iter().all(|b| {
            let lb = l * b;
            let tol = 1e-10 * (1.0 + sup(b));
            pred(&lb, tol)
        })
    };
    let zero = |b: &CMat, r: usize, tol: f64| row(b, r).iter().all(|v| v.norm() <= tol);
    let lightlike = |b: &CMat, tol: f64| {
        close(&row(b, 1), &scaled(&row(b, 0), -C64::new(1.0, 0.0)), tol)
            && close(&row(b, 3), &scaled(&row(b, 2), i), tol)
    };
    let reduced = |b: &CMat, tol: f64| {
        lightlike(b, tol) && ((zero(b, 0, tol) && zero(b, 1, tol)) || (zero(b, 2, tol) && zero(b, 3, tol)))
    };
    let isotropic = |b: &CMat, tol: f64| {
        b.ncols() == 2 && {
            let c0: Vec<C64> = (0..4).map(|r| b[(r, 0)]).collect();
            let c1: Vec<C64> = (0..4).map(|r| b[(r, 1)]).collect();
            close(&c1, &scaled(&c0, i), tol) || close(&c1, &scaled(&c0, -i), tol)
        }
    };
    type Pred<'a> = &'a dyn Fn(&CMat, f64) -> bool;
    let order: [(PotentialForm, Pred); 3] = [
        (PotentialForm::ReducibleRank1, &reduced),
        (PotentialForm::LightlikeForm, &lightlike),
        (PotentialForm::IsotropicForm, &isotropic),
    ];
    for (form, pred) in order {
        for (k, l) in transforms.iter().enumerate() {
            if all(pred, l) {
                return Classification {
                    form,
                    rank,
                    transform: Some(k),
                };
            }
        }
    }
    Classification {
        form: PotentialForm::Generic,
        rank,
        transform: None,
    }
}

/// A z-dependent plus loop w = sum_{j>=0} w_j(z) lambda^j with rational entries.
#[derive(Clone, Debug)]
pub struct PlusGauge {
    pub terms: BTreeMap<usize, ExprMatrix>,
}

/// w^{-1} p w + w^{-1} dw, term by term in lambda and truncated at `degree`.
/// The constant term w_0 must not depend on z.
pub fn gauge_transform(p: &Potential, w: &PlusGauge, degree: usize) -> Result<Potential> {
    let m = p.n + 4;
    let w0 = w
        .terms
        .get(&0)
        .ok_or_else(|| Error::domain("gauge has no constant term"))?;
    let mut w0c = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            w0c[(i, j)] = w0
                .get(i, j)
                .as_constant()
                .ok_or_else(|| Error::domain("the lambda^0 term of the gauge must be constant in z"))?;
        }
    }
    let w0i = inverse(&w0c).map_err(|_| Error::domain("gauge leading term is not invertible"))?;
    let w0i_e = ExprMatrix::from_constant(&w0i);
    let wt = |k: usize| w.terms.get(&k).cloned().unwrap_or_else(|| ExprMatrix::zeros(m, m));
    // u = w^{-1}: u_0 = w0^{-1}, u_k = -w0^{-1} sum_{i=1..k} w_i u_{k-i}
    let top = degree + 1;
    let mut u: Vec<ExprMatrix> = vec![w0i_e.clone()];
    for k in 1..=top {
        let mut acc = ExprMatrix::zeros(m, m);
        for i in 1..=k {
            let wi = wt(i);
            if !wi.is_zero() {
                acc = acc.add(&wi.mul(&u[k - i]));
            }
        }
        let next = w0i_e.mul(&acc);
        let neg = ExprMatrix {
            rows: m,
            cols: m,
            entries: next.entries.iter().map(|e| -e).collect(),
        };
        u.push(neg);
    }
    let lo = p.min_power().min(0);
    let mut out: BTreeMap<i64, ExprMatrix> = BTreeMap::new();
    let mut add = |j: i64, mtx: ExprMatrix| {
        if j <= degree as i64 && !mtx.is_zero() {
            let e = out.entry(j).or_insert_with(|| ExprMatrix::zeros(m, m));
            *e = e.add(&mtx);
        }
    };
    // w^{-1} p w
    for (&j, pj) in &p.terms {
        for (a, ua) in u.iter().enumerate() {
            if j + a as i64 > degree as i64 {
                break;
            }
            let left = ua.mul(pj);
            for (&b, wb) in &w.terms {
                let total = j + a as i64 + b as i64;
                if total >= lo && total <= degree as i64 {
                    add(total, left.mul(wb));
                }
            }
        }
    }
    // w^{-1} dw
    for (&b, wb) in &w.terms {
        let db = wb.derivative();
        if db.is_zero() {
            continue;
        }
        for (a, ua) in u.iter().enumerate() {
            let total = (a + b) as i64;
            if total <= degree as i64 {
                add(total, ua.mul(&db));
            }
        }
    }
    Ok(Potential::from_parts(p.n, PotentialKind::Holomorphic, p.basepoint, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    const S6: &str = "\
# Example surface in S^6
potential { n = 4; kind = normalized; basepoint = (0, 0); }
coeff[-1] {
  B1 = [[iz, -z, -i/2, 1/2],
        [-iz, z, -i/2, 1/2],
        [-1, -i, -z/2, -iz/2],
        [i, -1, -iz/2, z/2]];
}
";

    fn e(s: &str) -> RationalExpr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn s6_parses_and_validates() {
        let p = parse_potential(S6).unwrap();
        assert_eq!(p.n(), 4);
        assert_eq!(p.kind(), PotentialKind::Normalized);
        let rep = validate_normalized(&p);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.null_residual < 1e-12 && rep.nilpotency_residual < 1e-12);
        let b = p.b1(c(1.0, 0.0)).unwrap();
        assert_eq!(b[(0, 0)], c(0.0, 1.0));
        assert_eq!(b[(3, 3)], c(0.5, 0.0));
    }

    #[test]
    fn serialize_roundtrip() {
        let p = parse_potential(S6).unwrap();
        let text = serialize_potential(&p);
        let q = parse_potential(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(serialize_potential(&q), text);
        let mut full = p.terms()[&-1].clone();
        full.set(0, 0, e("z"));
        let r = Potential::from_parts(4, PotentialKind::Holomorphic, c(0.0, 0.0), BTreeMap::from([(-1, full)]));
        let text = serialize_potential(&r);
        assert!(text.contains("FULL"));
        assert_eq!(parse_potential(&text).unwrap(), r);
    }

    #[test]
    fn validator_examples() {
        let one = e("1");
        let zero = RationalExpr::zero();
        let light = Potential::normalized_from_b1(
            &[vec![e("z")], vec![e("-z")], vec![zero.clone()], vec![zero.clone()]],
            c(0.0, 0.0),
        )
        .unwrap();
        assert!(validate_normalized(&light).passed);
        let padded = Potential::normalized_from_b1(
            &[
                vec![one.clone(), zero.clone()],
                vec![zero.clone(), one.clone()],
                vec![zero.clone(), zero.clone()],
                vec![zero.clone(), zero.clone()],
            ],
            c(0.0, 0.0),
        )
        .unwrap();
        let rep = validate_normalized(&padded);
        assert!(!rep.passed && rep.null_residual > 0.5);
    }

    #[test]
    fn isotropic_constructor() {
        let z = RationalExpr::zero();
        assert!(make_isotropic_potential([e("1"), e("1"), z.clone(), z.clone()], c(0.0, 0.0)).is_ok());
        let p = make_isotropic_potential([e("z"), e("z"), z.clone(), z.clone()], c(0.0, 0.0)).unwrap();
        assert!(validate_normalized(&p).passed);
        assert_eq!(classify_potential(&p).form, PotentialForm::ReducibleRank1);
        let q = make_isotropic_potential([e("z^2+1"), e("2z"), e("z^2-1"), z.clone()], c(0.0, 0.0)).unwrap();
        assert_eq!(classify_potential(&q).form, PotentialForm::IsotropicForm);
        match make_isotropic_potential([e("1"), z.clone(), z.clone(), z], c(0.0, 0.0)) {
            Err(Error::NullConditionViolated { residual }) => assert!((residual - 1.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lightlike_constructor() {
        let p = make_lightlike_potential(&[e("z"), e("1")], &[e("z^2"), e("2")], c(0.0, 0.0)).unwrap();
        assert!(validate_normalized(&p).passed);
        let cl = classify_potential(&p);
        assert_eq!(cl.form, PotentialForm::LightlikeForm);
        assert_eq!(cl.rank, 2);
        let z = RationalExpr::zero();
        let r = make_lightlike_potential(&[z.clone(), z.clone()], &[e("z"), e("1")], c(0.0, 0.0)).unwrap();
        assert_eq!(classify_potential(&r).form, PotentialForm::ReducibleRank1);
        let r = make_lightlike_potential(&[e("1"), z.clone()], &[z.clone(), z], c(0.0, 0.0)).unwrap();
        assert_eq!(classify_potential(&r).form, PotentialForm::ReducibleRank1);
    }

    #[test]
    fn s6_is_generic_rank_two() {
        let p = parse_potential(S6).unwrap();
        let cl = classify_potential(&p);
        assert_eq!(cl.form, PotentialForm::Generic);
        assert_eq!(cl.rank, 2);
    }

    #[test]
    fn classification_stable_under_diagonal_conjugation() {
        let p = make_lightlike_potential(&[e("z"), e("1")], &[e("z^2"), e("2")], c(0.0, 0.0)).unwrap();
        // conjugate by diag(1, -1, -1, 1) x diag(-1, -1)
        let mut k = CMat::identity(6, 6);
        for idx in [1, 2, 4, 5] {
            k[(idx, idx)] = c(-1.0, 0.0);
        }
        let g = PlusGauge {
            terms: BTreeMap::from([(0, ExprMatrix::from_constant(&k))]),
        };
        let q = gauge_transform(&p, &g, 0).unwrap();
        let q = Potential::from_parts(q.n, PotentialKind::Normalized, q.basepoint, q.terms);
        assert_eq!(classify_potential(&q).form, PotentialForm::LightlikeForm);
    }

    #[test]
    fn gauge_identity_and_constant() {
        let p = parse_potential(S6).unwrap();
        let id = PlusGauge {
            terms: BTreeMap::from([(0, ExprMatrix::from_constant(&CMat::identity(8, 8)))]),
        };
        let q = gauge_transform(&p, &id, 4).unwrap();
        assert_eq!(q.terms(), p.terms());
        let mut k = CMat::identity(8, 8);
        k[(2, 2)] = c(0.0, 0.0);
        k[(3, 3)] = c(0.0, 0.0);
        k[(2, 3)] = c(-1.0, 0.0);
        k[(3, 2)] = c(1.0, 0.0);
        let g = PlusGauge {
            terms: BTreeMap::from([(0, ExprMatrix::from_constant(&k))]),
        };
        let q = gauge_transform(&p, &g, 4).unwrap();
        let z = c(0.3, -0.2);
        let expect = k.transpose() * p.eval(z).unwrap()[&-1].clone() * &k;
        assert!(sup(&(q.eval(z).unwrap()[&-1].clone() - expect)) < 1e-15);
    }

    #[test]
    fn gauge_with_positive_power() {
        // w = I + lambda z P: w^{-1} p w + w^{-1} w_z evaluated numerically
        let p = parse_potential(S6).unwrap();
        let mut pz = ExprMatrix::zeros(8, 8);
        pz.set_b1(&[
            vec![e("z"), e("0"), e("0"), e("0")],
            vec![e("0"); 4],
            vec![e("0"), e("z"), e("0"), e("0")],
            vec![e("0"); 4],
        ]);
        let g = PlusGauge {
            terms: BTreeMap::from([(0, ExprMatrix::from_constant(&CMat::identity(8, 8))), (1, pz.clone())]),
        };
        let q = gauge_transform(&p, &g, 14).unwrap();
        let z = c(0.2, 0.1);
        let lam = C64::from_polar(1.0, 0.4);
        let eval_series = |pot: &Potential| -> CMat {
            let mut acc = CMat::zeros(8, 8);
            for (j, m) in pot.eval(z).unwrap() {
                acc += m * lam.powi(j as i32);
            }
            acc
        };
        let wv = CMat::identity(8, 8) + pz.eval(z).unwrap() * lam;
        let dw = pz.derivative().eval(z).unwrap() * lam;
        let wi = inverse(&wv).unwrap();
        let exact = &wi * eval_series(&p) * &wv + &wi * dw;
        assert!(sup(&(eval_series(&q) - exact)) < 1e-8);
        // lower truncation keeps the same leading coefficients
        let q3 = gauge_transform(&p, &g, 3).unwrap();
        for j in -1..=3 {
            assert_eq!(q3.terms().get(&j), q.terms().get(&j));
        }
        assert!(q.min_power() == -1);
    }

    #[test]
    fn poles_found() {
        let text = "potential { n = 1; kind = normalized; basepoint = (0,0); }\n\
                    coeff[-1] { B1 = [[1/(z-0.5)], [-1/(z-0.5)], [0], [0]]; }";
        let p = parse_potential(text).unwrap();
        let poles = p.poles();
        assert_eq!(poles.len(), 1);
        assert!((poles[0] - c(0.5, 0.0)).norm() < 1e-12);
        assert!(validate_normalized(&p).passed);
    }
}
