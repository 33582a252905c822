//! Truncated matrix Laurent series in the loop parameter, with the twist
//! parity built in: even powers are block diagonal, odd powers off-diagonal.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{split_blocks, sup, CMat, C64};

pub const DEFAULT_DEGREE: usize = 8;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Sample count used when nothing else is requested: a power of two with
/// comfortable headroom over the number of stored coefficients.
pub fn default_samples(total_degree: usize) -> usize {
    (4 * (total_degree + 1)).next_power_of_two().max(64)
}

pub fn unit_roots(count: usize) -> Vec<C64> {
    (0..count)
        .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / count as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopClass {
    General,
    Plus,
    Minus,
    MinusStar,
    Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "LoopJson", try_from = "LoopJson")]
pub struct TwistedLoop {
    n: usize,
    d_neg: usize,
    d_pos: usize,
    coeffs: Vec<CMat>,
    dropped: f64,
}

fn parity_project(j: i64, m: &mut CMat) {
    let (k, p) = split_blocks(m);
    *m = if j.rem_euclid(2) == 0 { k } else { p };
}

fn parity_violation(j: i64, m: &CMat) -> f64 {
    let (k, p) = split_blocks(m);
    if j.rem_euclid(2) == 0 {
        sup(&p)
    } else {
        sup(&k)
    }
}

impl TwistedLoop {
    pub fn zeros(n: usize, d_neg: usize, d_pos: usize) -> Self {
        let m = n + 4;
        TwistedLoop {
            n,
            d_neg,
            d_pos,
            coeffs: vec![CMat::zeros(m, m); d_neg + d_pos + 1],
            dropped: 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant_unchecked(CMat::identity(n + 4, n + 4))
    }

    fn constant_unchecked(m: CMat) -> Self {
        TwistedLoop {
            n: m.nrows() - 4,
            d_neg: 0,
            d_pos: 0,
            coeffs: vec![m],
            dropped: 0.0,
        }
    }

    /// A constant loop; its value must be block diagonal.
    pub fn constant(m: CMat) -> Result<Self> {
        if m.nrows() < 5 || m.nrows() != m.ncols() {
            return Err(Error::domain("constant loop needs a square matrix of size >= 5"));
        }
        let v = parity_violation(0, &m);
        if v > 0.0 {
            return Err(Error::domain(format!(
                "constant term must be block diagonal (off-block {v:.3e})"
            )));
        }
        Ok(Self::constant_unchecked(m))
    }

    /// Build from a power -> coefficient map, rejecting parity violations
    /// above `tol` and zeroing what remains.
    pub fn from_map(
        n: usize,
        d_neg: usize,
        d_pos: usize,
        map: &BTreeMap<i64, CMat>,
        tol: f64,
    ) -> Result<Self> {
        let mut out = Self::zeros(n, d_neg, d_pos);
        for (&j, m) in map {
            if j < -(d_neg as i64) || j > d_pos as i64 {
                return Err(Error::domain(format!("power {j} outside [-{d_neg}, {d_pos}]")));
            }
            if m.nrows() != n + 4 || m.ncols() != n + 4 {
                return Err(Error::SizeMismatch {
                    expected: n + 4,
                    found: m.nrows(),
                });
            }
            let v = parity_violation(j, m);
            if v > tol {
                return Err(Error::domain(format!(
                    "coefficient of power {j} violates the twist parity by {v:.3e}"
                )));
            }
            out.set_coeff(j, m.clone());
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 4
    }

    pub fn d_neg(&self) -> usize {
        self.d_neg
    }

    pub fn d_pos(&self) -> usize {
        self.d_pos
    }

    pub fn powers(&self) -> std::ops::RangeInclusive<i64> {
        -(self.d_neg as i64)..=self.d_pos as i64
    }

    /// Norm of coefficients discarded by truncation so far.
    pub fn dropped(&self) -> f64 {
        self.dropped
    }

    pub fn coeff(&self, j: i64) -> Option<&CMat> {
        if j < -(self.d_neg as i64) || j > self.d_pos as i64 {
            None
        } else {
            Some(&self.coeffs[(j + self.d_neg as i64) as usize])
        }
    }

    pub fn coeff_or_zero(&self, j: i64) -> CMat {
        self.coeff(j)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.dim(), self.dim()))
    }

    /// Store a coefficient, projecting onto the blocks allowed at that power.
    pub fn set_coeff(&mut self, j: i64, mut m: CMat) {
        assert!(j >= -(self.d_neg as i64) && j <= self.d_pos as i64);
        parity_project(j, &mut m);
        self.coeffs[(j + self.d_neg as i64) as usize] = m;
    }

    pub fn evaluate(&self, lambda: C64) -> Result<CMat> {
        if lambda == C64::new(0.0, 0.0) {
            if self.powers().any(|j| j < 0 && sup(self.coeff(j).unwrap()) > 0.0) {
                return Err(Error::domain("evaluation at lambda = 0 hits a pole"));
            }
            return Ok(self.coeff_or_zero(0));
        }
        Ok(self.eval_nonzero(lambda))
    }

    fn eval_nonzero(&self, lambda: C64) -> CMat {
        let m = self.dim();
        let mut acc = CMat::zeros(m, m);
        for j in self.powers() {
            let cj = self.coeff(j).unwrap();
            acc += cj * lambda.powi(j as i32);
        }
        acc
    }

    /// Values at the `count` roots of unity, via one FFT per entry.
    pub fn samples(&self, count: usize) -> Vec<CMat> {
        let m = self.dim();
        let plan = fft_plan(count, true);
        let mut out = vec![CMat::zeros(m, m); count];
        let mut buf = vec![C64::new(0.0, 0.0); count];
        for r in 0..m {
            for cidx in 0..m {
                buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for j in self.powers() {
                    let idx = j.rem_euclid(count as i64) as usize;
                    buf[idx] += self.coeff(j).unwrap()[(r, cidx)];
                }
                plan.process(&mut buf);
                for k in 0..count {
                    out[k][(r, cidx)] = buf[k];
                }
            }
        }
        out
    }

    /// Coefficients in [-d_neg, d_pos] recovered from values at the roots of
    /// unity; the largest discarded coefficient is kept as the truncation error.
    pub fn from_samples(n: usize, samples: &[CMat], d_neg: usize, d_pos: usize) -> Self {
        let count = samples.len();
        let m = n + 4;
        let plan = fft_plan(count, false);
        let mut full = vec![CMat::zeros(m, m); count];
        let mut buf = vec![C64::new(0.0, 0.0); count];
        let scale = 1.0 / count as f64;
        for r in 0..m {
            for cidx in 0..m {
                for k in 0..count {
                    buf[k] = samples[k][(r, cidx)];
                }
                plan.process(&mut buf);
                for k in 0..count {
                    full[k][(r, cidx)] = buf[k] * scale;
                }
            }
        }
        let mut out = Self::zeros(n, d_neg, d_pos);
        let keep = d_neg + d_pos + 1;
        let mut dropped: f64 = 0.0;
        let mut parity: f64 = 0.0;
        for (idx, cm) in full.into_iter().enumerate() {
            let j = if idx as i64 <= d_pos as i64 {
                idx as i64
            } else {
                idx as i64 - count as i64
            };
            if keep <= count && j >= -(d_neg as i64) && j <= d_pos as i64 {
                parity = parity.max(parity_violation(j, &cm));
                out.set_coeff(j, cm);
            } else {
                dropped = dropped.max(sup(&cm));
            }
        }
        out.dropped = dropped.max(parity);
        out
    }

    /// Cauchy product truncated to the larger of the input degrees.
    pub fn multiply(&self, other: &TwistedLoop) -> Result<TwistedLoop> {
        let dn = self.d_neg.max(other.d_neg);
        let dp = self.d_pos.max(other.d_pos);
        self.multiply_to(other, dn, dp)
    }

    pub fn multiply_to(&self, other: &TwistedLoop, d_neg: usize, d_pos: usize) -> Result<TwistedLoop> {
        if self.n != other.n {
            return Err(Error::SizeMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut out = Self::zeros(self.n, d_neg, d_pos);
        let mut dropped: f64 = 0.0;
        let lo = -(self.d_neg as i64) - other.d_neg as i64;
        let hi = self.d_pos as i64 + other.d_pos as i64;
        for j in lo..=hi {
            let mut acc = CMat::zeros(self.dim(), self.dim());
            for a in self.powers() {
                let b = j - a;
                if let Some(cb) = other.coeff(b) {
                    acc += self.coeff(a).unwrap() * cb;
                }
            }
            if j >= -(d_neg as i64) && j <= d_pos as i64 {
                out.set_coeff(j, acc);
            } else {
                dropped = dropped.max(sup(&acc));
            }
        }
        out.dropped = dropped.max(self.dropped).max(other.dropped);
        Ok(out)
    }

    /// Inverse by pointwise inversion at `count` roots of unity (default
    /// chosen from the degrees). Returns the loop and ||a * a^{-1} - I||
    /// measured on the samples.
    pub fn invert(&self) -> Result<(TwistedLoop, f64)> {
        self.invert_with(default_samples(self.d_neg + self.d_pos), self.d_neg, self.d_pos)
    }

    pub fn invert_with(&self, count: usize, d_neg: usize, d_pos: usize) -> Result<(TwistedLoop, f64)> {
        let roots = unit_roots(count);
        let vals = self.samples(count);
        let mut inv = Vec::with_capacity(count);
        for (k, v) in vals.iter().enumerate() {
            let vi = v
                .clone()
                .try_inverse()
                .ok_or(Error::SingularLoop { lambda: roots[k] })?;
            if vi.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::SingularLoop { lambda: roots[k] });
            }
            inv.push(vi);
        }
        let out = Self::from_samples(self.n, &inv, d_neg, d_pos);
        let back = out.samples(count);
        let id = CMat::identity(self.dim(), self.dim());
        let residual = vals
            .iter()
            .zip(back.iter())
            .map(|(a, b)| sup(&(a * b - &id)))
            .fold(0.0, f64::max);
        Ok((out, residual))
    }

    /// The real-form involution: c_j -> conj(c_{-j}).
    pub fn tau(&self) -> TwistedLoop {
        let mut out = Self::zeros(self.n, self.d_pos, self.d_neg);
        for j in self.powers() {
            out.set_coeff(-j, self.coeff(j).unwrap().map(|v| v.conj()));
        }
        out.dropped = self.dropped;
        out
    }

    /// Largest entry of the blocks forbidden at each power.
    pub fn parity_defect(&self) -> f64 {
        self.powers()
            .map(|j| parity_violation(j, self.coeff(j).unwrap()))
            .fold(0.0, f64::max)
    }

    /// ||tau(a) - a|| over coefficients.
    pub fn reality_defect(&self) -> f64 {
        let lo = self.d_neg.max(self.d_pos) as i64;
        let mut r: f64 = 0.0;
        for j in -lo..=lo {
            let a = self.coeff_or_zero(j);
            let b = self.coeff_or_zero(-j).map(|v| v.conj());
            r = r.max(sup(&(a - b)));
        }
        r
    }

    pub fn classes(&self, tol: f64) -> Vec<LoopClass> {
        let mut out = Vec::new();
        let neg = self.powers().filter(|&j| j < 0).map(|j| sup(self.coeff(j).unwrap())).fold(0.0, f64::max);
        let pos = self.powers().filter(|&j| j > 0).map(|j| sup(self.coeff(j).unwrap())).fold(0.0, f64::max);
        if neg <= tol {
            out.push(LoopClass::Plus);
        }
        if pos <= tol {
            out.push(LoopClass::Minus);
            let id = CMat::identity(self.dim(), self.dim());
            if sup(&(self.coeff_or_zero(0) - id)) <= tol {
                out.push(LoopClass::MinusStar);
            }
        }
        if self.reality_defect() <= tol {
            out.push(LoopClass::Real);
        }
        if out.is_empty() {
            out.push(LoopClass::General);
        }
        out
    }

    /// Sup norm of the difference of two loops over the union of supports.
    pub fn distance(&self, other: &TwistedLoop) -> f64 {
        let lo = self.d_neg.max(other.d_neg) as i64;
        let hi = self.d_pos.max(other.d_pos) as i64;
        (-lo..=hi)
            .map(|j| sup(&(self.coeff_or_zero(j) - other.coeff_or_zero(j))))
            .fold(0.0, f64::max)
    }

    /// Right multiplication by a block-diagonal constant.
    pub fn right_mul_const(&self, m: &CMat) -> TwistedLoop {
        let mut out = self.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            let mut v = &*c * m;
            parity_project(idx as i64 - self.d_neg as i64, &mut v);
            *c = v;
        }
        out
    }

    /// Left multiplication by a block-diagonal constant.
    pub fn left_mul_const(&self, m: &CMat) -> TwistedLoop {
        let mut out = self.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            let mut v = m * &*c;
            parity_project(idx as i64 - self.d_neg as i64, &mut v);
            *c = v;
        }
        out
    }

    /// self += a * x, coefficientwise; both loops must share degrees.
    pub fn axpy(&mut self, a: C64, x: &TwistedLoop) {
        assert!(self.n == x.n && self.d_neg == x.d_neg && self.d_pos == x.d_pos);
        for (c, xc) in self.coeffs.iter_mut().zip(x.coeffs.iter()) {
            *c += xc * a;
        }
        self.dropped = self.dropped.max(x.dropped);
    }

    /// Largest entry over all coefficients.
    pub fn sup_norm(&self) -> f64 {
        self.coeffs.iter().map(sup).fold(0.0, f64::max)
    }

    /// Same loop stored with wider truncation degrees.
    pub fn widened(&self, d_neg: usize, d_pos: usize) -> TwistedLoop {
        let mut out = Self::zeros(self.n, d_neg.max(self.d_neg), d_pos.max(self.d_pos));
        for j in self.powers() {
            out.set_coeff(j, self.coeff(j).unwrap().clone());
        }
        out.dropped = self.dropped;
        out
    }

    pub fn to_json(&self) -> LoopJson {
        LoopJson {
            n: self.n,
            d_neg: self.d_neg,
            d_pos: self.d_pos,
            coeffs: self
                .powers()
                .filter(|&j| sup(self.coeff(j).unwrap()) > 0.0)
                .map(|j| CoeffJson {
                    power: j,
                    matrix: matrix_to_json(self.coeff(j).unwrap()),
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &LoopJson) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in &doc.coeffs {
            map.insert(c.power, matrix_from_json(&c.matrix)?);
        }
        Self::from_map(doc.n, doc.d_neg, doc.d_pos, &map, 1e-12)
    }
}

impl From<TwistedLoop> for LoopJson {
    fn from(l: TwistedLoop) -> Self {
        l.to_json()
    }
}

impl TryFrom<LoopJson> for TwistedLoop {
    type Error = Error;
    fn try_from(doc: LoopJson) -> Result<Self> {
        TwistedLoop::from_json(&doc)
    }
}

/// Serialized form: {n, d_neg, d_pos, coeffs: [{power, matrix: [[[re,im],...],...]}]}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopJson {
    pub n: usize,
    pub d_neg: usize,
    pub d_pos: usize,
    pub coeffs: Vec<CoeffJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoeffJson {
    pub power: i64,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

pub fn matrix_to_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::domain("empty matrix"));
    }
    let ccount = rows[0].len();
    if rows.iter().any(|row| row.len() != ccount) {
        return Err(Error::domain("ragged matrix rows"));
    }
    Ok(CMat::from_fn(r, ccount, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

/// Series inverse of a minus loop I + h_{-1} l^{-1} + ... , exact up to the
/// requested degree.
pub fn invert_minus_star(h: &TwistedLoop, degree: usize) -> TwistedLoop {
    let m = h.dim();
    let mut out = TwistedLoop::zeros(h.n(), degree, 0);
    out.set_coeff(0, CMat::identity(m, m));
    for k in 1..=degree as i64 {
        let mut acc = CMat::zeros(m, m);
        for i in 1..=k {
            if let Some(hi) = h.coeff(-i) {
                acc -= hi * out.coeff(-(k - i)).unwrap();
            }
        }
        out.set_coeff(-k, acc);
    }
    out
}

/// exp of a random twisted algebra loop X with powers in [-1, 1], sampled and
/// truncated to `deg`. X is scaled so that max over |lambda| = 1 of the
/// spectral norm of X(lambda) equals `scale`.
pub fn random_group_loop(n: usize, scale: f64, deg: usize, rng: &mut rand_chacha::ChaCha8Rng) -> TwistedLoop {
    use crate::linalg::{matrix_exp, random_algebra};
    let mut x = TwistedLoop::zeros(n, 1, 1);
    for j in -1..=1 {
        x.set_coeff(j, random_algebra(n, 1.0, rng));
    }
    let count = default_samples(2 * deg);
    let nrm = x
        .samples(count)
        .into_iter()
        .map(|v| v.singular_values().max())
        .fold(0.0, f64::max);
    for j in -1..=1 {
        let cj = x.coeff(j).unwrap() * C64::new(scale / nrm, 0.0);
        x.set_coeff(j, cj);
    }
    let vals: Vec<CMat> = x.samples(count).iter().map(|v| matrix_exp(v).unwrap()).collect();
    TwistedLoop::from_samples(n, &vals, deg, deg)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn parity_closed(seed in any::<u64>(), n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_group_loop(n, 0.4, 6, &mut rng);
            let b = random_group_loop(n, 0.4, 6, &mut rng);
            prop_assert_eq!(a.multiply(&b).unwrap().parity_defect(), 0.0);
            prop_assert_eq!(a.tau().parity_defect(), 0.0);
            prop_assert_eq!(a.invert().unwrap().0.parity_defect(), 0.0);
        }

        #[test]
        fn tau_is_multiplicative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_group_loop(2, 0.4, 6, &mut rng);
            let b = random_group_loop(2, 0.4, 6, &mut rng);
            let lhs = a.multiply_to(&b, 12, 12).unwrap().tau();
            let rhs = a.tau().multiply_to(&b.tau(), 12, 12).unwrap();
            prop_assert!(lhs.distance(&rhs) < 1e-12);
        }

        #[test]
        fn tau_involution(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_group_loop(2, 0.4, 6, &mut rng);
            prop_assert_eq!(a.tau().tau(), a);
        }

        #[test]
        fn evaluation_is_multiplicative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_group_loop(2, 0.4, 6, &mut rng);
            let b = random_group_loop(2, 0.4, 6, &mut rng);
            let p = a.multiply_to(&b, 12, 12).unwrap();
            for lam in unit_roots(8) {
                let d = p.evaluate(lam).unwrap() - a.evaluate(lam).unwrap() * b.evaluate(lam).unwrap();
                prop_assert!(sup(&d) < 1e-12);
            }
        }
    }
}
