//! Birkhoff and Iwasawa splittings of twisted loops, the K = K_real * S
//! normalization of the constant term, and open-cell detection.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    conj, delta0, imag_sup, inverse, one_norm, real_part, split_blocks, sup, to_complex, CMat,
    RMat, C64, I,
};
use crate::loops::{default_samples, invert_minus_star, TwistedLoop};

pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e12;
const RESIDUAL_SAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    IdentityCell,
    SecondCell,
    Boundary,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingKind {
    Birkhoff,
    Iwasawa,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorOptions {
    /// Number of unknown negative coefficients; `None` picks it from the input.
    pub degree: Option<usize>,
    /// Unit-circle sample count; `None` picks a power of two from the degree.
    pub samples: Option<usize>,
    pub condition_threshold: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions {
            degree: None,
            samples: None,
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
        }
    }
}

impl FactorOptions {
    fn degree_for(&self, g: &TwistedLoop) -> usize {
        self.degree
            .unwrap_or_else(|| (2 * g.d_neg().max(g.d_pos())).max(8))
    }

    fn samples_for(&self, degree: usize) -> usize {
        self.samples.unwrap_or_else(|| default_samples(degree))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub kind: SplittingKind,
    pub factors: Vec<TwistedLoop>,
    /// For Birkhoff: sup of g_minus g_plus - g; for Iwasawa: sup of g v_plus - f.
    /// Both measured at 16 unit-circle points offset from the FFT grid.
    pub residual: f64,
    pub cell: Cell,
    /// One-norm condition number of the Toeplitz system.
    pub condition: f64,
    /// ||tau(f) - f|| (Iwasawa only).
    pub reality_defect: Option<f64>,
    /// ||k_real - I|| when v_plus(0) is renormalized; zero means v_plus(0) in S.
    pub s_defect: Option<f64>,
    /// Largest coefficient discarded by truncation.
    pub truncation: f64,
}

impl FactorizationReport {
    /// Residual recomputed from the stored factors.
    pub fn recompute_residual(&self, g: &TwistedLoop) -> Result<f64> {
        match self.kind {
            SplittingKind::Birkhoff => product_residual(g, &self.factors[0], &self.factors[1]),
            SplittingKind::Iwasawa => product_residual(&self.factors[0], g, &self.factors[1]),
        }
    }
}

fn residual_points() -> Vec<C64> {
    (0..RESIDUAL_SAMPLES)
        .map(|k| {
            C64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * (k as f64 + 0.5) / RESIDUAL_SAMPLES as f64,
            )
        })
        .collect()
}

/// sup over the residual points of |a b - t|.
fn product_residual(t: &TwistedLoop, a: &TwistedLoop, b: &TwistedLoop) -> Result<f64> {
    let mut r: f64 = 0.0;
    for lam in residual_points() {
        let prod = a.evaluate(lam)? * b.evaluate(lam)?;
        r = r.max(sup(&(prod - t.evaluate(lam)?)));
    }
    Ok(r)
}

/// g = g_minus * g_plus with g_minus(infinity) = I.
pub fn birkhoff(g: &TwistedLoop) -> Result<(TwistedLoop, TwistedLoop, FactorizationReport)> {
    birkhoff_with(g, &FactorOptions::default())
}

pub fn birkhoff_with(
    g: &TwistedLoop,
    opts: &FactorOptions,
) -> Result<(TwistedLoop, TwistedLoop, FactorizationReport)> {
    let d = opts.degree_for(g);
    let (h, condition) = solve_minus_inverse(g, d, opts.condition_threshold)?;
    let dp = g.d_pos();
    // g_plus = (h g) restricted to non-negative powers
    let hg = h.multiply_to(g, 0, dp)?;
    let mut g_plus = TwistedLoop::zeros(g.n(), 0, dp);
    for j in 0..=dp as i64 {
        g_plus.set_coeff(j, hg.coeff_or_zero(j));
    }
    let g_minus = invert_minus_star(&h, d);
    let residual = product_residual(g, &g_minus, &g_plus)?;
    let report = FactorizationReport {
        kind: SplittingKind::Birkhoff,
        factors: vec![g_minus.clone(), g_plus.clone()],
        residual,
        cell: Cell::Unknown,
        condition,
        reality_defect: None,
        s_defect: None,
        truncation: g.dropped(),
    };
    Ok((g_minus, g_plus, report))
}

/// h = I + sum_k h_{-k} l^{-k} with (h g)_j = 0 for j = -1..-d, plus the
/// condition number of the block Toeplitz system.
fn solve_minus_inverse(g: &TwistedLoop, d: usize, threshold: f64) -> Result<(TwistedLoop, f64)> {
    let m = g.dim();
    let size = d * m;
    let mut a = CMat::zeros(size, size);
    let mut rhs = CMat::zeros(m, size);
    for k in 1..=d {
        for jj in 1..=d {
            if let Some(c) = g.coeff(k as i64 - jj as i64) {
                a.view_mut(((k - 1) * m, (jj - 1) * m), (m, m)).copy_from(c);
            }
        }
    }
    for jj in 1..=d {
        if let Some(c) = g.coeff(-(jj as i64)) {
            rhs.view_mut((0, (jj - 1) * m), (m, m)).copy_from(&(-c));
        }
    }
    let ainv = a.clone().try_inverse().ok_or(Error::BigCellViolation {
        condition: f64::INFINITY,
    })?;
    let condition = one_norm(&a) * one_norm(&ainv);
    if !condition.is_finite() || condition > threshold {
        return Err(Error::BigCellViolation { condition });
    }
    let hmat = rhs * ainv;
    let mut h = TwistedLoop::zeros(g.n(), d, 0);
    h.set_coeff(0, CMat::identity(m, m));
    for k in 1..=d {
        h.set_coeff(-(k as i64), hmat.view((0, (k - 1) * m), (m, m)).into_owned());
    }
    Ok((h, condition))
}

/// Output of the K = K_real * S normalization.
#[derive(Clone, Debug)]
pub struct KFactor {
    pub k_real: RMat,
    pub s: CMat,
    /// max |Im(k0 s^{-1})| at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// Factor a block-diagonal k0 in SO(1,3,C) x SO(n,C) as k_real * s with
/// k_real in SO+(1,3) x SO(n) and s in the solvable complement S1 x S2.
pub fn k_factor_normalize(k0: &CMat) -> Result<KFactor> {
    let (kf, k00) = k_factor_inner(k0)?;
    if k00 < 0.0 {
        return Err(Error::NotInCell { residual: kf.residual });
    }
    Ok(kf)
}

fn k_factor_inner(k0: &CMat) -> Result<(KFactor, f64)> {
    let m = k0.nrows();
    if m < 5 || k0.ncols() != m {
        return Err(Error::domain("k_factor_normalize needs a square matrix of size >= 5"));
    }
    let (_, off) = split_blocks(k0);
    if sup(&off) > 1e-10 * (1.0 + sup(k0)) {
        return Err(Error::domain("k0 must be block diagonal"));
    }
    let n = m - 4;
    let k1 = k0.view((0, 0), (4, 4)).into_owned();
    let k2 = k0.view((4, 4), (n, n)).into_owned();
    let (s1, r1, iterations) = lorentz_solvable_factor(&k1)?;
    let (u2, s2) = compact_solvable_factor(&k2)?;
    let kr1 = &k1 * inverse(&s1)?;
    let mut s = CMat::zeros(m, m);
    s.view_mut((0, 0), (4, 4)).copy_from(&s1);
    s.view_mut((4, 4), (n, n)).copy_from(&s2);
    let mut k_real = RMat::zeros(m, m);
    k_real.view_mut((0, 0), (4, 4)).copy_from(&real_part(&kr1));
    k_real.view_mut((4, 4), (n, n)).copy_from(&u2);
    let k00 = k_real[(0, 0)];
    Ok((
        KFactor {
            k_real,
            s,
            residual: r1,
            iterations,
        },
        k00,
    ))
}

/// exp(Bd) * exp(C) for the six real coordinates of the Lorentz-block solvable algebra.
fn s1_matrix(x: &[f64; 6]) -> CMat {
    let (a, t) = (x[0], x[1]);
    let a13 = C64::new(x[2], x[3]);
    let a23 = C64::new(x[4], x[5]);
    let mut eb = CMat::zeros(4, 4);
    eb[(0, 0)] = C64::new(a.cos(), 0.0);
    eb[(1, 1)] = eb[(0, 0)];
    eb[(0, 1)] = I * a.sin();
    eb[(1, 0)] = eb[(0, 1)];
    eb[(2, 2)] = C64::new(t.cosh(), 0.0);
    eb[(3, 3)] = eb[(2, 2)];
    eb[(2, 3)] = I * t.sinh();
    eb[(3, 2)] = -I * t.sinh();
    let mut cm = CMat::zeros(4, 4);
    cm[(0, 2)] = a13;
    cm[(0, 3)] = I * a13;
    cm[(1, 2)] = a23;
    cm[(1, 3)] = I * a23;
    cm[(2, 0)] = a13;
    cm[(2, 1)] = -a23;
    cm[(3, 0)] = I * a13;
    cm[(3, 1)] = -I * a23;
    // C is nilpotent of order three
    let ec = CMat::identity(4, 4) + &cm + &cm * &cm * C64::new(0.5, 0.0);
    eb * ec
}

fn s1_inverse(x: &[f64; 6]) -> CMat {
    let neg = [-x[0], -x[1], -x[2], -x[3], -x[4], -x[5]];
    // (exp(B) exp(C))^{-1} = exp(-C) exp(-B); build both factors separately
    let eb_inv = s1_matrix(&[neg[0], neg[1], 0.0, 0.0, 0.0, 0.0]);
    let ec_inv = s1_matrix(&[0.0, 0.0, neg[2], neg[3], neg[4], neg[5]]);
    ec_inv * eb_inv
}

fn lorentz_residual(k1: &CMat, x: &[f64; 6]) -> Vec<f64> {
    let prod = k1 * s1_inverse(x);
    prod.iter().map(|v| v.im).collect()
}

/// Gauss-Newton for s in S1 with Im(k1 s^{-1}) = 0.
fn lorentz_solvable_factor(k1: &CMat) -> Result<(CMat, f64, usize)> {
    const TOL: f64 = 1e-13;
    const MAX_ITER: usize = 60;
    let scale = 1.0 + sup(k1);
    let mut x = [0.0f64; 6];
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut r = lorentz_residual(k1, &x);
    let mut it = 0;
    while it < MAX_ITER && norm(&r) > TOL * scale {
        let eps = 1e-7;
        let mut jac = RMat::zeros(16, 6);
        for i in 0..6 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            let rp = lorentz_residual(k1, &xp);
            let rm = lorentz_residual(k1, &xm);
            for row in 0..16 {
                jac[(row, i)] = (rp[row] - rm[row]) / (2.0 * eps);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(16, r.iter().map(|v| -v));
        let dx = jac
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::numeric(e.to_string()))?;
        let mut step = 1.0;
        let current = norm(&r);
        loop {
            let mut trial = x;
            for i in 0..6 {
                trial[i] += step * dx[i];
            }
            let rt = lorentz_residual(k1, &trial);
            if norm(&rt) < current || step < 1e-4 {
                x = trial;
                r = rt;
                break;
            }
            step *= 0.5;
        }
        it += 1;
    }
    let res = norm(&r);
    if !(res <= 1e-10 * scale) {
        return Err(Error::NotInCell { residual: res });
    }
    Ok((s1_matrix(&x), res, it))
}

/// Basis in which SO(n, C)'s real form is the unitary one and S2 is upper
/// triangular with positive diagonal.
fn compact_basis(n: usize) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = CMat::zeros(n, n);
    for k in 0..n / 2 {
        let mm = n - 1 - k;
        t[(k, k)] = C64::new(h, 0.0);
        t[(mm, k)] = C64::new(0.0, h);
        t[(k, mm)] = C64::new(h, 0.0);
        t[(mm, mm)] = C64::new(0.0, -h);
    }
    if n % 2 == 1 {
        t[(n / 2, n / 2)] = C64::new(1.0, 0.0);
    }
    t
}

fn compact_solvable_factor(k2: &CMat) -> Result<(RMat, CMat)> {
    let n = k2.nrows();
    let t = compact_basis(n);
    let ti = inverse(&t)?;
    let x = &ti * k2 * &t;
    let qr = x.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        if d.norm() == 0.0 {
            return Err(Error::NotInCell { residual: 0.0 });
        }
        let ph = d / d.norm();
        for row in 0..n {
            q[(row, k)] *= ph;
        }
        for col in 0..n {
            r[(k, col)] /= ph;
        }
    }
    let u = &t * q * &ti;
    let s = &t * r * &ti;
    Ok((real_part(&u), s))
}

#[derive(Clone, Debug)]
pub struct Iwasawa {
    pub f: TwistedLoop,
    pub v_plus: TwistedLoop,
    pub report: FactorizationReport,
}

/// g * v_plus = f with f real and v_plus(0) in S.
pub fn iwasawa(g: &TwistedLoop) -> Result<(TwistedLoop, TwistedLoop, FactorizationReport)> {
    let out = iwasawa_with(g, &FactorOptions::default())?;
    Ok((out.f, out.v_plus, out.report))
}

pub fn iwasawa_with(g: &TwistedLoop, opts: &FactorOptions) -> Result<Iwasawa> {
    let n = g.n();
    let m = g.dim();
    let d = opts.degree_for(g);
    let count = opts.samples_for(2 * d);
    let gs = g.samples(count);
    // W = tau(g)^{-1} g; on the unit circle tau(g) is the pointwise conjugate
    let mut ws = Vec::with_capacity(count);
    for s in &gs {
        let ct = conj(s);
        let lu = ct.lu();
        let w = lu
            .solve(s)
            .ok_or_else(|| Error::CellBoundary("tau(g) singular on the unit circle".into()))?;
        ws.push(w);
    }
    let w = TwistedLoop::from_samples(n, &ws, d, d);
    let inner = FactorOptions {
        degree: Some(d),
        ..opts.clone()
    };
    let (_, w_plus, brep) = birkhoff_with(&w, &inner).map_err(|e| match e {
        Error::BigCellViolation { condition } => {
            Error::CellBoundary(format!("Birkhoff of tau(g)^-1 g failed, condition {condition:.3e}"))
        }
        other => other,
    })?;
    let w0 = w_plus.coeff_or_zero(0);
    // conj(c) = c w0 with c = I + conj(w0); c^{-t} J c^{-1} is then real
    let c = CMat::identity(m, m) + conj(&w0);
    let ci = inverse(&c).map_err(|_| Error::CellBoundary("constant term is singular".into()))?;
    let form = crate::linalg::FormMatrix::new(n)?.to_cmat();
    let mm = real_part(&(ci.transpose() * &form * &ci));
    let mm = (&mm + mm.transpose()) * 0.5;
    let mut r = RMat::zeros(m, m);
    for (lo, len, negatives) in [(0usize, 4usize, 1usize), (4, n, 0)] {
        let block = mm.view((lo, lo), (len, len)).into_owned();
        let eig = SymmetricEigen::new(block);
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let neg = order.iter().filter(|&&i| eig.eigenvalues[i] < 0.0).count();
        if neg != negatives {
            return Err(Error::CellBoundary(format!(
                "constant term has the wrong signature ({neg} negative directions in a block expecting {negatives})"
            )));
        }
        for (row, &i) in order.iter().enumerate() {
            let sc = eig.eigenvalues[i].abs().sqrt();
            for col in 0..len {
                r[(lo + row, lo + col)] = sc * eig.eigenvectors[(col, i)];
            }
        }
    }
    let mut cp = to_complex(&r) * &c;
    for (lo, len) in [(0usize, 4usize), (4, n)] {
        let det = cp.view((lo, lo), (len, len)).into_owned().determinant();
        if det.re < 0.0 {
            for col in 0..m {
                cp[(lo + len - 1, col)] = -cp[(lo + len - 1, col)];
            }
        }
    }
    let (kf, k00) = k_factor_inner(&conj(&cp)).map_err(not_in_cell_as_boundary)?;
    let kf = if k00 < 0.0 {
        for row in [0usize, 1] {
            for col in 0..m {
                cp[(row, col)] = -cp[(row, col)];
            }
        }
        let (kf2, k00b) = k_factor_inner(&conj(&cp)).map_err(not_in_cell_as_boundary)?;
        if k00b < 0.0 {
            return Err(Error::CellBoundary("no time-orientation preserving real factor".into()));
        }
        kf2
    } else {
        kf
    };
    // v_plus = W_plus^{-1} c'^{-1} k_real, whose constant term is s^{-1}
    let right = inverse(&cp)? * to_complex(&kf.k_real);
    let (wpi, _) = w_plus.invert_with(count, 0, d)?;
    let mut v_plus = wpi.right_mul_const(&right);
    // the constant term of a plus loop's inverse is exactly the inverse of its constant term
    v_plus.set_coeff(0, inverse(&w0)? * &right);
    let vs = v_plus.samples(count);
    let fs: Vec<CMat> = gs.iter().zip(vs.iter()).map(|(a, b)| a * b).collect();
    let f = TwistedLoop::from_samples(n, &fs, d, d);
    let f1 = f.evaluate(C64::new(1.0, 0.0))?;
    if f1[(0, 0)].re < 1.0 - 1e-8 || imag_sup(&f1) > 1e-6 * (1.0 + sup(&f1)) {
        return Err(Error::CellBoundary(format!(
            "real factor leaves the identity component (f00 = {:.3e})",
            f1[(0, 0)].re
        )));
    }
    let residual = product_residual(&f, g, &v_plus)?;
    let reality = f.reality_defect();
    let s_defect = match k_factor_normalize(&v_plus.coeff_or_zero(0)) {
        Ok(k) => crate::linalg::rsup(&(k.k_real - RMat::identity(m, m))),
        Err(_) => f64::INFINITY,
    };
    let report = FactorizationReport {
        kind: SplittingKind::Iwasawa,
        factors: vec![f.clone(), v_plus.clone()],
        residual,
        cell: Cell::IdentityCell,
        condition: brep.condition,
        reality_defect: Some(reality),
        s_defect: Some(s_defect),
        truncation: w.dropped().max(f.dropped()),
    };
    Ok(Iwasawa { f, v_plus, report })
}

fn not_in_cell_as_boundary(e: Error) -> Error {
    match e {
        Error::NotInCell { residual } => Error::CellBoundary(format!(
            "constant term not in SO+(1,3) S1 x SO(n) S2 (residual {residual:.3e})"
        )),
        other => other,
    }
}

/// Which open Iwasawa cell contains g.
pub fn cell_classify(g: &TwistedLoop) -> Cell {
    cell_classify_with(g, &FactorOptions::default())
}

pub fn cell_classify_with(g: &TwistedLoop, opts: &FactorOptions) -> Cell {
    let first = iwasawa_with(g, opts);
    if first.is_ok() {
        return Cell::IdentityCell;
    }
    let shifted = g.left_mul_const(&delta0(g.n()));
    let second = iwasawa_with(&shifted, opts);
    if second.is_ok() {
        return Cell::SecondCell;
    }
    let boundary = |r: &Result<Iwasawa>| matches!(r, Err(Error::CellBoundary(msg)) if msg.contains("Birkhoff"));
    let cond = birkhoff_condition(g, opts);
    if boundary(&first) || cond > opts.condition_threshold {
        Cell::Boundary
    } else {
        Cell::Unknown
    }
}

fn birkhoff_condition(g: &TwistedLoop, opts: &FactorOptions) -> f64 {
    match solve_minus_inverse(g, opts.degree_for(g), f64::INFINITY) {
        Ok((_, c)) => c,
        Err(_) => f64::INFINITY,
    }
}

/// The real part of a matrix if its imaginary part is negligible.
pub fn as_real(m: &CMat, tol: f64) -> Option<RMat> {
    if imag_sup(m) <= tol {
        Some(real_part(m))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, is_in_group, matrix_exp, FormMatrix, GroupMembership};
    use crate::loops::random_group_loop;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counterexample() -> CMat {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut k = CMat::identity(6, 6);
        k[(0, 0)] = c(h, 0.0);
        k[(0, 2)] = c(0.0, h);
        k[(2, 0)] = c(0.0, h);
        k[(2, 2)] = c(h, 0.0);
        k
    }

    #[test]
    fn birkhoff_identity() {
        let (gm, gp, rep) = birkhoff(&TwistedLoop::identity(2)).unwrap();
        assert!(gm.distance(&TwistedLoop::identity(2)) == 0.0);
        assert!(gp.distance(&TwistedLoop::identity(2)) == 0.0);
        assert!(rep.residual == 0.0);
    }

    #[test]
    fn birkhoff_of_plus_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_group_loop(2, 0.4, 6, &mut rng);
        let mut plus = TwistedLoop::zeros(2, 0, 6);
        for j in 0..=6 {
            plus.set_coeff(j, g.coeff_or_zero(j));
        }
        let (gm, gp, _) = birkhoff(&plus).unwrap();
        assert!(gm.distance(&TwistedLoop::identity(2)) < 1e-14);
        assert!(gp.distance(&plus) < 1e-14);
    }

    #[test]
    fn birkhoff_nilpotent_exponential() {
        let mut b = CMat::zeros(4, 2);
        b[(0, 0)] = c(0.2, 0.1);
        b[(1, 0)] = c(-0.2, -0.1);
        b[(2, 1)] = c(0.15, 0.0);
        b[(3, 1)] = c(0.0, 0.15);
        let nm = crate::linalg::p_from_b1(&b);
        let mut x = TwistedLoop::zeros(2, 1, 1);
        x.set_coeff(-1, nm.clone());
        x.set_coeff(1, conj(&nm));
        let vals: Vec<CMat> = x.samples(64).iter().map(|v| matrix_exp(v).unwrap()).collect();
        let g = TwistedLoop::from_samples(2, &vals, 8, 8);
        let (gm, gp, rep) = birkhoff(&g).unwrap();
        assert!(rep.residual < 1e-10, "{}", rep.residual);
        assert_eq!(gm.coeff(0).unwrap(), &CMat::identity(6, 6));
        assert_eq!(gp.d_neg(), 0);
        assert!((rep.recompute_residual(&g).unwrap() - rep.residual).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_group_loop(2, 0.5, 8, &mut rng);
        let (a, b, _) = birkhoff(&g).unwrap();
        let (a2, b2, _) = birkhoff(&g).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn k_factor_identity_and_real() {
        let k = k_factor_normalize(&CMat::identity(7, 7)).unwrap();
        assert!(crate::linalg::rsup(&(k.k_real - RMat::identity(7, 7))) < 1e-15);
        assert!(sup(&(k.s - CMat::identity(7, 7))) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = crate::linalg::random_algebra(3, 0.7, &mut rng);
        let (kx, _) = split_blocks(&real_part(&x).map(|v| c(v, 0.0)));
        let k0 = matrix_exp(&kx).unwrap();
        let k = k_factor_normalize(&k0).unwrap();
        assert!(sup(&(to_complex(&k.k_real) - &k0)) < 1e-12);
        assert!(sup(&(k.s - CMat::identity(7, 7))) < 1e-12);
    }

    #[test]
    fn k_factor_complex_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = crate::linalg::random_algebra(2, 0.5, &mut rng);
        let (kx, _) = split_blocks(&x);
        let k0 = matrix_exp(&kx).unwrap();
        let k = k_factor_normalize(&k0).unwrap();
        assert!(sup(&(to_complex(&k.k_real) * &k.s - &k0)) < 1e-11);
        let form = FormMatrix::new(2).unwrap();
        assert_eq!(
            is_in_group(&to_complex(&k.k_real), &form, 1e-10).unwrap(),
            GroupMembership::RealPlus
        );
    }

    #[test]
    fn complex_rotation_factors_through_real_boost() {
        // expected to lie outside SO+(1,3) S1, but it factors: the real part is the
        // boost with cosh = sqrt 2 in the (0, 3) plane, s has a13 = i, a34 = ln sqrt 2
        let k0 = counterexample();
        let kf = k_factor_normalize(&k0).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        let mut boost = RMat::identity(6, 6);
        boost[(0, 0)] = r2;
        boost[(3, 3)] = r2;
        boost[(0, 3)] = 1.0;
        boost[(3, 0)] = 1.0;
        assert!((&kf.k_real - boost).amax() < 1e-12);
        assert!(sup(&(to_complex(&kf.k_real) * &kf.s - k0)) < 1e-12);
    }

    #[test]
    fn counterexample_is_in_group() {
        let form = FormMatrix::new(2).unwrap();
        assert_eq!(
            is_in_group(&counterexample(), &form, 1e-12).unwrap(),
            GroupMembership::ComplexGroup
        );
    }

    #[test]
    fn iwasawa_of_real_loop() {
        let mut x = TwistedLoop::zeros(2, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = crate::linalg::random_algebra(2, 0.3, &mut rng);
        let (_, p) = split_blocks(&a);
        x.set_coeff(-1, p.clone());
        x.set_coeff(1, conj(&p));
        let vals: Vec<CMat> = x.samples(64).iter().map(|v| matrix_exp(v).unwrap()).collect();
        let g = TwistedLoop::from_samples(2, &vals, 8, 8);
        assert!(g.reality_defect() < 1e-14);
        let (f, v, rep) = iwasawa(&g).unwrap();
        assert!(f.distance(&g) < 1e-10, "{}", f.distance(&g));
        assert!(v.distance(&TwistedLoop::identity(2)) < 1e-10);
        assert!(rep.reality_defect.unwrap() < 1e-10);
    }

    #[test]
    fn iwasawa_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let g = random_group_loop(2, 0.5, 8, &mut rng);
        let (f, v, rep) = iwasawa(&g).unwrap();
        assert!(rep.residual < 1e-8, "{}", rep.residual);
        assert!(rep.reality_defect.unwrap() < 1e-8);
        assert!(rep.s_defect.unwrap() < 1e-10, "{:?}", rep.s_defect);
        assert_eq!(f.parity_defect(), 0.0);
        assert_eq!(v.d_neg(), 0);
        assert!((rep.recompute_residual(&g).unwrap() - rep.residual).abs() < 1e-12);
    }

    #[test]
    fn iwasawa_plus_loop_in_s() {
        // a plus loop whose constant term lies in S: f = I
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_group_loop(2, 0.3, 6, &mut rng);
        let (_, _, rep) = iwasawa(&g).unwrap();
        let vp = &rep.factors[1];
        let (f, v2, _) = iwasawa(vp).unwrap();
        assert!(f.distance(&TwistedLoop::identity(2)) < 1e-9, "{}", f.distance(&TwistedLoop::identity(2)));
        // g v = f = I forces v = g^{-1}
        assert!(product_residual(&TwistedLoop::identity(2), vp, &v2).unwrap() < 1e-9);
    }

    #[test]
    fn cells() {
        assert_eq!(cell_classify(&TwistedLoop::identity(2)), Cell::IdentityCell);
        let d = TwistedLoop::constant(delta0(2)).unwrap();
        assert_eq!(cell_classify(&d), Cell::SecondCell);
    }

    #[test]
    fn report_serializes() {
        let (_, _, rep) = birkhoff(&TwistedLoop::identity(1)).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        let back: FactorizationReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.factors[0], rep.factors[0]);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::loops::random_group_loop;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn birkhoff_roundtrip(seed in any::<u64>(), n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_group_loop(n, 0.5, 8, &mut rng);
            let (gm, gp, rep) = birkhoff(&g).unwrap();
            prop_assert!(rep.residual < 1e-8);
            prop_assert_eq!(gm.coeff(0).unwrap(), &CMat::identity(n + 4, n + 4));
            prop_assert_eq!(gm.parity_defect(), 0.0);
            prop_assert_eq!(gp.parity_defect(), 0.0);
        }

        #[test]
        fn iwasawa_reality(seed in any::<u64>(), n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_group_loop(n, 0.5, 8, &mut rng);
            let (_, _, rep) = iwasawa(&g).unwrap();
            prop_assert!(rep.residual < 1e-8);
            prop_assert!(rep.reality_defect.unwrap() < 1e-8);
            prop_assert!(rep.s_defect.unwrap() < 1e-10);
        }
    }
}
