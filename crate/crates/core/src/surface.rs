//! From frames to surfaces: the immersion y, its canonical lift and the
//! conformal invariants (Hopf differential, Schwarzian, normal frame), with
//! the derived diagnostics and file export.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_from_c, FrameField, FramePoint, Grid, IntegrationOptions, PathIntegrator, PointStatus};
use crate::potentials::Potential;
use crate::linalg::{b1_of, inverse, minkowski, minkowski_real, CMat, CVec, RMat, RVec, C64};
use crate::loops::TwistedLoop;

const I: C64 = C64::new(0.0, 1.0);

fn real_j1() -> RMat {
    RMat::from_diagonal(&RVec::from_vec(vec![-1.0, 1.0, 1.0, 1.0]))
}

/// Point of the sphere from a real light-cone vector.
pub fn lift_to_point(y: &RVec) -> Result<RVec> {
    if y[0].abs() < 1e-12 {
        return Err(Error::DegenerateLift(y[0]));
    }
    Ok(y.rows(1, y.len() - 1) / y[0])
}

/// Immersion from an adapted frame: Y is proportional to col0 - col1 of F(lambda).
pub fn frame_to_immersion(f: &TwistedLoop, lambda: C64) -> Result<RVec> {
    let fl = f.evaluate(lambda)?;
    let m = fl.nrows();
    let y = RVec::from_fn(m, |i, _| (fl[(i, 0)] - fl[(i, 1)]).re);
    lift_to_point(&y)
}

/// The real null direction (in frame coordinates of the Lorentz block)
/// annihilated by B1^t J1. When the kernel is a plane, the null line in it
/// closest to `reference` is returned.
pub fn immersion_direction(b1: &CMat, reference: &RVec) -> Result<RVec> {
    let j = real_j1();
    let m = b1.transpose() * crate::linalg::to_complex(&j);
    let rows = m.nrows();
    let mut stacked = RMat::zeros(2 * rows, 4);
    for r in 0..rows {
        for c in 0..4 {
            stacked[(r, c)] = m[(r, c)].re;
            stacked[(rows + r, c)] = m[(r, c)].im;
        }
    }
    let gram = stacked.transpose() * &stacked;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues[order[3]].max(1e-300);
    let col = |k: usize| eig.eigenvectors.column(order[k]).into_owned();
    if eig.eigenvalues[order[1]] > 1e-10 * scale {
        return Ok(col(0));
    }
    // two-dimensional kernel: find its null lines
    let (p, q) = (col(0), col(1));
    let a = minkowski_real(p.as_slice(), p.as_slice());
    let b = minkowski_real(p.as_slice(), q.as_slice());
    let c = minkowski_real(q.as_slice(), q.as_slice());
    let small = nalgebra::Matrix2::new(a, b, b, c);
    let e2 = SymmetricEigen::new(small);
    let (lo, hi) = if e2.eigenvalues[0] <= e2.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (mu_lo, mu_hi) = (e2.eigenvalues[lo], e2.eigenvalues[hi]);
    if mu_lo > 0.0 || mu_hi < 0.0 {
        return Err(Error::DegenerateLift(mu_lo.max(-mu_hi)));
    }
    let (v_lo, v_hi) = (e2.eigenvectors.column(lo), e2.eigenvectors.column(hi));
    let mut best: Option<(f64, RVec)> = None;
    for sign in [1.0, -1.0] {
        let w0 = mu_hi.sqrt() * v_lo[0] + sign * (-mu_lo).sqrt() * v_hi[0];
        let w1 = mu_hi.sqrt() * v_lo[1] + sign * (-mu_lo).sqrt() * v_hi[1];
        let v = (&p * w0 + &q * w1).normalize();
        let score = v.dot(reference).abs() / reference.norm().max(1e-300);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, v));
        }
    }
    Ok(best.unwrap().1)
}

fn reference_direction() -> RVec {
    RVec::from_vec(vec![1.0, -1.0, 0.0, 0.0])
}

/// Immersion from a DPW frame point. The Iwasawa frame is adapted only up to
/// a K-valued gauge, so Y is located as the null direction killed by the
/// frame's own B1 = A0^{-1} B1hat C0.
pub fn immersion_from_point(pt: &FramePoint, lambda: C64) -> Result<RVec> {
    let (f, vp0, eta) = match (&pt.f, &pt.v_plus0, &pt.eta_m1) {
        (Some(f), Some(v), Some(e)) => (f, v, e),
        (Some(f), _, None) => return frame_to_immersion(f, lambda),
        _ => return Err(Error::numeric("frame point has no frame")),
    };
    let m = vp0.nrows();
    let a0 = vp0.view((0, 0), (4, 4)).into_owned();
    let c0 = vp0.view((4, 4), (m - 4, m - 4)).into_owned();
    let b1 = inverse(&a0)? * b1_of(eta) * c0;
    let yc = immersion_direction(&b1, &reference_direction())?;
    let fl = f.evaluate(lambda)?;
    let y = RVec::from_fn(m, |i, _| (0..4).map(|k| fl[(i, k)].re * yc[k]).sum());
    lift_to_point(&y)
}

/// Samples of an immersion on the lattice centre + (a hu, b hv), |a|, |b| <= radius.
#[derive(Clone, Debug)]
pub struct SurfacePatch {
    pub centre: (f64, f64),
    pub hu: f64,
    pub hv: f64,
    pub radius: i32,
    points: Vec<RVec>,
}

impl SurfacePatch {
    pub fn sample<F>(centre: (f64, f64), h: f64, radius: i32, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<RVec> + Sync,
    {
        let side = (2 * radius + 1) as usize;
        let points = (0..side * side)
            .into_par_iter()
            .map(|idx| {
                let a = (idx % side) as i32 - radius;
                let b = (idx / side) as i32 - radius;
                f(centre.0 + a as f64 * h, centre.1 + b as f64 * h)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SurfacePatch {
            centre,
            hu: h,
            hv: h,
            radius,
            points,
        })
    }

    pub fn from_points(centre: (f64, f64), hu: f64, hv: f64, radius: i32, points: Vec<RVec>) -> Result<Self> {
        let side = (2 * radius + 1) as usize;
        if points.len() != side * side {
            return Err(Error::SizeMismatch {
                expected: side * side,
                found: points.len(),
            });
        }
        Ok(SurfacePatch {
            centre,
            hu,
            hv,
            radius,
            points,
        })
    }

    pub fn get(&self, a: i32, b: i32) -> &RVec {
        let side = 2 * self.radius + 1;
        &self.points[((b + self.radius) * side + a + self.radius) as usize]
    }
}

/// Patch of a DPW surface: C at the centre comes from the basepoint and every
/// other node from a short path off the centre, then Iwasawa and the kernel
/// rule give the point.
pub fn dpw_patch(
    p: &Potential,
    centre: C64,
    h: f64,
    radius: i32,
    lambda: C64,
    opts: &IntegrationOptions,
) -> Result<SurfacePatch> {
    let pi = PathIntegrator::new(p, opts, h);
    let c0 = pi.at(centre)?;
    let point = |u: f64, v: f64| {
        let z = C64::new(u, v);
        let corner = C64::new(u, centre.im);
        let c = pi.path(&c0, &[centre, corner, z])?;
        let fp = frame_from_c(p, z, c, &opts.factor);
        match fp.status {
            PointStatus::Ok => immersion_from_point(&fp, lambda),
            _ => Err(Error::CellBoundary(fp.message.unwrap_or_default())),
        }
    };
    SurfacePatch::sample((centre.re, centre.im), h, radius, point)
}

/// Square array of complex vectors indexed by lattice offsets.
#[derive(Clone)]
struct Field {
    r: i32,
    v: Vec<CVec>,
}

const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

#[derive(Clone, Copy)]
enum Op {
    Z,
    Zb,
    Zz,
    Zzb,
    Zbzb,
}

impl Field {
    fn build(r: i32, mut f: impl FnMut(i32, i32) -> CVec) -> Field {
        let mut v = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for b in -r..=r {
            for a in -r..=r {
                v.push(f(a, b));
            }
        }
        Field { r, v }
    }

    fn at(&self, a: i32, b: i32) -> &CVec {
        let side = 2 * self.r + 1;
        &self.v[((b + self.r) * side + a + self.r) as usize]
    }

    fn apply(&self, op: Op, hu: f64, hv: f64) -> Field {
        let dim = self.v[0].len();
        Field::build(self.r - 2, |a, b| {
            let mut du = CVec::zeros(dim);
            let mut dv = CVec::zeros(dim);
            let mut duu = CVec::zeros(dim);
            let mut dvv = CVec::zeros(dim);
            let mut duv = CVec::zeros(dim);
            for k in 0..5 {
                let o = k as i32 - 2;
                du += self.at(a + o, b) * C64::new(D1[k] / hu, 0.0);
                dv += self.at(a, b + o) * C64::new(D1[k] / hv, 0.0);
                duu += self.at(a + o, b) * C64::new(D2[k] / (hu * hu), 0.0);
                dvv += self.at(a, b + o) * C64::new(D2[k] / (hv * hv), 0.0);
                for l in 0..5 {
                    let w = D1[k] * D1[l];
                    if w != 0.0 {
                        duv += self.at(a + o, b + l as i32 - 2) * C64::new(w / (hu * hv), 0.0);
                    }
                }
            }
            let q = C64::new(0.25, 0.0);
            match op {
                Op::Z => (du - dv * I) * C64::new(0.5, 0.0),
                Op::Zb => (du + dv * I) * C64::new(0.5, 0.0),
                Op::Zz => (&duu - duv * (I * 2.0) - &dvv) * q,
                Op::Zzb => (duu + dvv) * q,
                Op::Zbzb => (&duu + duv * (I * 2.0) - &dvv) * q,
            }
        })
    }
}

fn bil(x: &CVec, y: &CVec) -> C64 {
    minkowski(x.as_slice(), y.as_slice())
}

/// <x, conj(y)>
fn herm(x: &CVec, y: &CVec) -> C64 {
    crate::linalg::minkowski_herm(x.as_slice(), y.as_slice())
}

fn to_c(v: &RVec) -> CVec {
    v.map(|x| C64::new(x, 0.0))
}

/// Projection onto the Minkowski orthogonal complement of span{Y, N, Y_u, Y_v}.
struct NormalProjector {
    basis: Vec<CVec>,
    gram_inv: RMat,
}

impl NormalProjector {
    fn new(y: &CVec, n: &CVec, yz: &CVec) -> Result<Self> {
        let yu = yz.map(|c| C64::new(2.0 * c.re, 0.0));
        let yv = yz.map(|c| C64::new(-2.0 * c.im, 0.0));
        let basis = vec![y.map(|c| C64::new(c.re, 0.0)), n.map(|c| C64::new(c.re, 0.0)), yu, yv];
        let gram = RMat::from_fn(4, 4, |i, j| bil(&basis[i], &basis[j]).re);
        let gram_inv = gram.try_inverse().ok_or_else(|| Error::numeric("degenerate mean-curvature sphere"))?;
        Ok(NormalProjector { basis, gram_inv })
    }

    fn apply(&self, w: &CVec) -> CVec {
        let g: Vec<C64> = self.basis.iter().map(|e| bil(w, e)).collect();
        let mut out = w.clone();
        for i in 0..4 {
            let mut c = C64::new(0.0, 0.0);
            for (j, gj) in g.iter().enumerate() {
                c += gj * self.gram_inv[(i, j)];
            }
            out -= &self.basis[i] * c;
        }
        out
    }

    /// Orthonormal normal frame by Gram-Schmidt on the projected ambient axes.
    fn normal_frame(&self, dim: usize, count: usize) -> Vec<RVec> {
        let mut psi: Vec<RVec> = Vec::with_capacity(count);
        for k in 0..dim {
            if psi.len() == count {
                break;
            }
            let mut e = CVec::zeros(dim);
            e[k] = C64::new(1.0, 0.0);
            let mut v: RVec = self.apply(&e).map(|c| c.re);
            for p in &psi {
                let d = minkowski_real(v.as_slice(), p.as_slice());
                v -= p * d;
            }
            let nn = minkowski_real(v.as_slice(), v.as_slice());
            if nn > 1e-6 {
                psi.push(v / nn.sqrt());
            }
        }
        psi
    }
}

/// Conformal Gauss map data at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConformalFrame {
    /// The point y on the sphere.
    pub y: RVec,
    /// Canonical lift Y = e^{-omega} (1, y).
    pub lift: RVec,
    /// N with <N, N> = 0 and <N, Y> = -1.
    pub normal: RVec,
    pub y_z: CVec,
    pub omega: f64,
    /// Conformal Hopf differential.
    pub kappa: CVec,
    /// Schwarzian.
    pub s: C64,
    /// Orthonormal frame of the normal bundle.
    pub psi: Vec<RVec>,
    /// Components of kappa in `psi`.
    pub k: CVec,
    /// Components of D_zbar kappa in `psi` (needs a 13x13 patch).
    pub beta: Option<CVec>,
    /// The 4x4 block of the Maurer-Cartan form built from s and |kappa|^2.
    pub a1: CMat,
    /// The 4xn block built from beta and k.
    pub b1: Option<CMat>,
}

impl ConformalFrame {
    /// <kappa, conj(kappa)>
    pub fn kappa_sq(&self) -> f64 {
        herm(&self.kappa, &self.kappa).re
    }

    /// Integrand of the Willmore energy in du dv.
    pub fn energy_density(&self) -> f64 {
        4.0 * self.kappa_sq()
    }
}

/// Residuals of the differential identities at the patch centre.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PatchDiagnostics {
    /// |<Y_z, Y_z>|
    pub conformality: f64,
    /// |D_zbar D_zbar kappa + conj(s) kappa / 2|
    pub willmore: f64,
    /// |s_zbar / 2 - 3 <kappa, D_z conj(kappa)> - <D_z kappa, conj(kappa)>|
    pub codazzi: f64,
    /// |<kappa, kappa>|, |<D_z kappa, kappa>|, |<D_z kappa, D_z kappa>|
    pub isotropy: [f64; 3],
    /// |<Y, Y>|, |<N, N>|, |<N, Y> + 1|
    pub lift: [f64; 3],
}

fn a1_block(s: C64, k2: f64) -> CMat {
    let r = 1.0 / (2.0 * std::f64::consts::SQRT_2);
    let one = C64::new(1.0, 0.0);
    let k2 = C64::new(k2, 0.0);
    let s1 = (one - s - k2 * 2.0) * r;
    let s2 = -I * (one + s - k2 * 2.0) * r;
    let s3 = (one + s + k2 * 2.0) * r;
    let s4 = -I * (one - s + k2 * 2.0) * r;
    let mut a = CMat::zeros(4, 4);
    a[(0, 2)] = s1;
    a[(0, 3)] = s2;
    a[(1, 2)] = s3;
    a[(1, 3)] = s4;
    a[(2, 0)] = s1;
    a[(2, 1)] = -s3;
    a[(3, 0)] = s2;
    a[(3, 1)] = -s4;
    a
}

fn b1_block(beta: &CVec, k: &CVec) -> CMat {
    let n = k.len();
    let r2 = C64::new(std::f64::consts::SQRT_2, 0.0);
    let mut b = CMat::zeros(4, n);
    for j in 0..n {
        b[(0, j)] = beta[j] * r2;
        b[(1, j)] = -beta[j] * r2;
        b[(2, j)] = -k[j];
        b[(3, j)] = -I * k[j];
    }
    b
}

/// Conformal Gauss frame at the patch centre; a radius of at least 4 is
/// needed, and 6 or more also yields beta, B1 and the higher diagnostics.
pub fn conformal_gauss_frame(patch: &SurfacePatch) -> Result<(ConformalFrame, Option<PatchDiagnostics>)> {
    let r = patch.radius;
    if r < 4 {
        return Err(Error::domain("conformal frame needs a patch radius of at least 4"));
    }
    let (hu, hv) = (patch.hu, patch.hv);
    let dim = patch.get(0, 0).len() + 1;
    let nnorm = dim - 4;
    let y = Field::build(r, |a, b| to_c(patch.get(a, b)));
    let yz = y.apply(Op::Z, hu, hv);
    // canonical lift on radius r - 2
    let mut omega = Vec::new();
    let lift = {
        let mut bad = None;
        let f = Field::build(r - 2, |a, b| {
            let q: f64 = yz.at(a, b).iter().map(|c| c.norm_sqr()).sum();
            if q < 1e-20 {
                bad = Some(q);
            }
            let w = 0.5 * (2.0 * q).ln();
            if a == 0 && b == 0 {
                omega.push(w);
            }
            let e = (-w).exp();
            let mut out = CVec::zeros(dim);
            out[0] = C64::new(e, 0.0);
            for (k, v) in y.at(a, b).iter().enumerate() {
                out[k + 1] = v * e;
            }
            out
        });
        if let Some(q) = bad {
            return Err(Error::BranchPoint(q));
        }
        f
    };
    let omega = omega[0];
    let lz = lift.apply(Op::Z, hu, hv);
    let lzz = lift.apply(Op::Zz, hu, hv);
    let lzzb = lift.apply(Op::Zzb, hu, hv);
    let r2 = r - 4;
    let mut s_vals = Vec::new();
    let kappa = Field::build(r2, |a, b| {
        let s = bil(lzz.at(a, b), lzzb.at(a, b)) * 4.0;
        s_vals.push(s);
        lzz.at(a, b) + lift.at(a, b) * (s / 2.0)
    });
    let s_field = Field {
        r: r2,
        v: s_vals.iter().map(|s| CVec::from_element(1, *s)).collect(),
    };
    let y0 = lift.at(0, 0).clone();
    let k0 = kappa.at(0, 0).clone();
    let s0 = s_field.at(0, 0)[0];
    let k2 = herm(&k0, &k0).re;
    let n0 = lzzb.at(0, 0) * C64::new(2.0, 0.0) + &y0 * C64::new(2.0 * k2, 0.0);
    let yz0 = lz.at(0, 0).clone();
    let proj = NormalProjector::new(&y0, &n0, &yz0)?;
    let psi = proj.normal_frame(dim, nnorm);
    let k = CVec::from_iterator(psi.len(), psi.iter().map(|p| bil(&k0, &to_c(p))));
    let mut frame = ConformalFrame {
        y: patch.get(0, 0).clone(),
        lift: y0.map(|c| c.re),
        normal: n0.map(|c| c.re),
        y_z: yz0.clone(),
        omega,
        kappa: k0.clone(),
        s: s0,
        psi: psi.clone(),
        k: k.clone(),
        beta: None,
        a1: a1_block(s0, k2),
        b1: None,
    };
    if r2 < 2 {
        return Ok((frame, None));
    }
    let kzb = kappa.apply(Op::Zb, hu, hv).at(0, 0).clone();
    let kz = kappa.apply(Op::Z, hu, hv).at(0, 0).clone();
    let kzbzb = kappa.apply(Op::Zbzb, hu, hv).at(0, 0).clone();
    let szb = s_field.apply(Op::Zb, hu, hv).at(0, 0)[0];
    let beta = CVec::from_iterator(psi.len(), psi.iter().map(|p| bil(&kzb, &to_c(p))));
    frame.b1 = Some(b1_block(&beta, &k));
    frame.beta = Some(beta);
    let will = proj.apply(&kzbzb) + &k0 * (s0.conj() / 2.0);
    let dzk = proj.apply(&kz);
    let dz_kbar = proj.apply(&kzb.map(|c| c.conj()));
    let kbar = k0.map(|c| c.conj());
    let codazzi = szb / 2.0 - bil(&k0, &dz_kbar) * 3.0 - bil(&dzk, &kbar);
    let diag = PatchDiagnostics {
        conformality: bil(&yz0, &yz0).norm(),
        willmore: herm(&will, &will).re.max(0.0).sqrt(),
        codazzi: codazzi.norm(),
        isotropy: [bil(&k0, &k0).norm(), bil(&dzk, &k0).norm(), bil(&dzk, &dzk).norm()],
        lift: [bil(&y0, &y0).norm(), bil(&n0, &n0).norm(), (bil(&n0, &y0) + 1.0).norm()],
    };
    Ok((frame, Some(diag)))
}

/// |<Y_z, Y_z>| at the centre of a patch of radius at least 2.
pub fn conformality_at(patch: &SurfacePatch) -> Result<f64> {
    let y = Field::build(patch.radius, |a, b| to_c(patch.get(a, b)));
    let yz = y.apply(Op::Z, patch.hu, patch.hv);
    let v = yz.at(0, 0);
    let q: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if q < 1e-20 {
        return Err(Error::BranchPoint(q));
    }
    // e^{-2 omega} <y_z, y_z> with e^{2 omega} = 2 |y_z|^2
    let s: C64 = v.iter().map(|c| c * c).sum();
    Ok(s.norm() / (2.0 * q))
}

/// Largest |<Y_z, Y_z>| over the centres of the given patches.
pub fn conformality_check(patches: &[SurfacePatch]) -> Result<f64> {
    patches.iter().map(conformality_at).try_fold(0.0f64, |m, r| r.map(|v| m.max(v)))
}

/// Largest Willmore-equation residual over patches of radius at least 6.
pub fn willmore_residual(patches: &[SurfacePatch]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in patches {
        let (_, d) = conformal_gauss_frame(p)?;
        let d = d.ok_or_else(|| Error::domain("willmore residual needs a patch radius of at least 6"))?;
        worst = worst.max(d.willmore);
    }
    Ok(worst)
}

/// Largest |<kappa, kappa>| over the given frames.
pub fn isotropy_check(frames: &[ConformalFrame]) -> f64 {
    frames.iter().map(|f| bil(&f.kappa, &f.kappa).norm()).fold(0.0, f64::max)
}

/// Energy integral with an error estimate (Simpson against trapezoid).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    pub error_estimate: f64,
    pub rule: QuadratureRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Simpson,
    Trapezoid,
}

fn weights(count: usize, h: f64, simpson: bool) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    (0..count)
        .map(|k| {
            let end = k == 0 || k == count - 1;
            if simpson {
                h / 3.0 * if end { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 }
            } else {
                h * if end { 0.5 } else { 1.0 }
            }
        })
        .collect()
}

/// Integrate an energy density (already including the factor 4) over the
/// grid rectangle. Every point must be present.
pub fn willmore_energy(density: &[Option<f64>], grid: &Grid) -> Result<EnergyReport> {
    if density.len() != grid.len() {
        return Err(Error::SizeMismatch {
            expected: grid.len(),
            found: density.len(),
        });
    }
    let missing = density.iter().filter(|d| d.is_none()).count();
    if missing > 0 {
        return Err(Error::InsufficientCoverage(format!("{missing} of {} grid points have no energy density", grid.len())));
    }
    let integrate = |simpson: bool| {
        let wu = weights(grid.re_count, grid.du(), simpson);
        let wv = weights(grid.im_count, grid.dv(), simpson);
        let mut acc = 0.0;
        for l in 0..grid.im_count {
            for k in 0..grid.re_count {
                acc += wu[k] * wv[l] * density[grid.index(k, l)].unwrap();
            }
        }
        acc
    };
    let simpson_ok = grid.re_count % 2 == 1 && grid.im_count % 2 == 1 && grid.re_count > 2 && grid.im_count > 2;
    let trap = integrate(false);
    if simpson_ok {
        let s = integrate(true);
        Ok(EnergyReport {
            value: s,
            error_estimate: (s - trap).abs(),
            rule: QuadratureRule::Simpson,
        })
    } else {
        Ok(EnergyReport {
            value: trap,
            error_estimate: f64::NAN,
            rule: QuadratureRule::Trapezoid,
        })
    }
}

/// Energy density 4<kappa, conj(kappa)> at every grid point of an immersion
/// given as a function of (u, v), by patches of radius 4 and step h.
pub fn energy_density_field<F>(f: F, grid: &Grid, h: f64) -> Vec<Option<f64>>
where
    F: Fn(f64, f64) -> Result<RVec> + Sync,
{
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let z = grid.point(idx);
            let patch = SurfacePatch::sample((z.re, z.im), h, 4, &f).ok()?;
            conformal_gauss_frame(&patch).ok().map(|(cf, _)| cf.energy_density())
        })
        .collect()
}

/// Surface samples on a grid with optional per-point scalars.
#[derive(Clone, Debug)]
pub struct SurfaceGrid {
    pub grid: Grid,
    /// Ambient dimension n + 3.
    pub dim: usize,
    pub points: Vec<Option<RVec>>,
    pub omega: Vec<Option<f64>>,
    pub energy_density: Vec<Option<f64>>,
    pub status: Vec<PointStatus>,
}

impl SurfaceGrid {
    pub fn new(grid: Grid, dim: usize) -> Self {
        let n = grid.len();
        SurfaceGrid {
            grid,
            dim,
            points: vec![None; n],
            omega: vec![None; n],
            energy_density: vec![None; n],
            status: vec![PointStatus::NotComputed; n],
        }
    }

    /// Project every frame of the field at the given lambda.
    pub fn from_frames(field: &FrameField, lambda: C64) -> Self {
        let dim = field.points.iter().find_map(|p| p.f.as_ref().map(|f| f.dim() - 1)).unwrap_or(0);
        let mut out = SurfaceGrid::new(field.grid, dim);
        let ys: Vec<(PointStatus, Option<RVec>)> = field
            .points
            .par_iter()
            .map(|pt| match pt.status {
                PointStatus::Ok => match immersion_from_point(pt, lambda) {
                    Ok(y) => (PointStatus::Ok, Some(y)),
                    Err(_) => (PointStatus::NotComputed, None),
                },
                s => (s, None),
            })
            .collect();
        for (i, (s, y)) in ys.into_iter().enumerate() {
            out.status[i] = s;
            out.points[i] = y;
        }
        out
    }

    pub fn from_fn<F>(grid: &Grid, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<RVec> + Sync,
    {
        let pts: Vec<Result<RVec>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let z = grid.point(i);
                f(z.re, z.im)
            })
            .collect();
        let dim = pts.iter().find_map(|p| p.as_ref().ok().map(|v| v.len())).unwrap_or(0);
        let mut out = SurfaceGrid::new(*grid, dim);
        for (i, p) in pts.into_iter().enumerate() {
            match p {
                Ok(v) => {
                    out.points[i] = Some(v);
                    out.status[i] = PointStatus::Ok;
                }
                Err(e) => {
                    out.status[i] = match e {
                        Error::Pole { .. } | Error::PoleEncountered { .. } => PointStatus::PoleSkipped,
                        _ => PointStatus::NotComputed,
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn ok_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    /// Patch of grid points around (k, l), if all are present.
    pub fn patch(&self, k: usize, l: usize, radius: i32) -> Option<SurfacePatch> {
        let (k, l) = (k as i64, l as i64);
        let r = radius as i64;
        if k - r < 0 || l - r < 0 || k + r >= self.grid.re_count as i64 || l + r >= self.grid.im_count as i64 {
            return None;
        }
        let mut pts = Vec::new();
        for b in -r..=r {
            for a in -r..=r {
                pts.push(self.points[self.grid.index((k + a) as usize, (l + b) as usize)].clone()?);
            }
        }
        let c = self.grid.point(self.grid.index(k as usize, l as usize));
        SurfacePatch::from_points((c.re, c.im), self.grid.du(), self.grid.dv(), radius, pts).ok()
    }

    /// Fill omega (needs 2 neighbours each way) and the energy density
    /// (needs 4) by finite differences on the grid itself.
    pub fn fill_scalars(&mut self) {
        let g = self.grid;
        let vals: Vec<(Option<f64>, Option<f64>)> = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let (k, l) = (idx % g.re_count, idx / g.re_count);
                let om = self.patch(k, l, 2).and_then(|p| {
                    let y = Field::build(2, |a, b| to_c(p.get(a, b)));
                    let yz = y.apply(Op::Z, p.hu, p.hv);
                    let q: f64 = yz.at(0, 0).iter().map(|c| c.norm_sqr()).sum();
                    (q > 0.0).then(|| 0.5 * (2.0 * q).ln())
                });
                let ed = self
                    .patch(k, l, 4)
                    .and_then(|p| conformal_gauss_frame(&p).ok())
                    .map(|(cf, _)| cf.energy_density());
                (om, ed)
            })
            .collect();
        for (i, (om, ed)) in vals.into_iter().enumerate() {
            self.omega[i] = om;
            self.energy_density[i] = ed;
        }
    }

    /// Diagnostics over every grid point with a full 13x13 neighbourhood.
    pub fn diagnostics(&self) -> GridDiagnostics {
        let g = self.grid;
        let results: Vec<(f64, Option<PatchDiagnostics>)> = (0..g.len())
            .into_par_iter()
            .filter_map(|idx| {
                let (k, l) = (idx % g.re_count, idx / g.re_count);
                let conf = self.patch(k, l, 2).and_then(|p| conformality_at(&p).ok())?;
                let d = self.patch(k, l, 6).and_then(|p| conformal_gauss_frame(&p).ok()).and_then(|(_, d)| d);
                Some((conf, d))
            })
            .collect();
        let mut out = GridDiagnostics::default();
        for (conf, d) in results {
            out.conformality_points += 1;
            out.conformality = out.conformality.max(conf);
            if let Some(d) = d {
                out.interior_points += 1;
                out.willmore = out.willmore.max(d.willmore);
                out.isotropy = out.isotropy.max(d.isotropy[0]);
                out.codazzi = out.codazzi.max(d.codazzi);
            }
        }
        out
    }

    /// Energy over the sub-rectangle that drops `margin` points on every side
    /// (densities need a stencil, so the border has none).
    pub fn interior_energy(&self, margin: usize) -> Result<(Grid, EnergyReport)> {
        let g = self.grid;
        if g.re_count <= 2 * margin + 1 || g.im_count <= 2 * margin + 1 {
            return Err(Error::InsufficientCoverage("grid too small for the margin".into()));
        }
        let inner = Grid::new(
            (g.re(margin), g.re(g.re_count - 1 - margin), g.re_count - 2 * margin),
            (g.im(margin), g.im(g.im_count - 1 - margin), g.im_count - 2 * margin),
        )?;
        let density: Vec<Option<f64>> = (0..inner.len())
            .map(|i| {
                let (k, l) = (i % inner.re_count, i / inner.re_count);
                self.energy_density[g.index(k + margin, l + margin)]
            })
            .collect();
        Ok((inner, willmore_energy(&density, &inner)?))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["u".to_string(), "v".to_string()];
        header.extend((0..self.dim).map(|i| format!("y_{i}")));
        header.extend(["omega", "energy_density", "status"].map(String::from));
        wr.write_record(&header).map_err(io_err)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for i in 0..self.grid.len() {
            let z = self.grid.point(i);
            let mut rec = vec![format!("{:?}", z.re), format!("{:?}", z.im)];
            match &self.points[i] {
                Some(y) => rec.extend(y.iter().map(|x| format!("{x:?}"))),
                None => rec.extend(std::iter::repeat_n(String::new(), self.dim)),
            }
            rec.push(opt(self.omega[i]));
            rec.push(opt(self.energy_density[i]));
            rec.push(status_name(self.status[i]).to_string());
            wr.write_record(&rec).map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(io_err)?.clone();
        let dim = header.iter().filter(|h| h.starts_with("y_")).count();
        if header.len() != dim + 5 || &header[0] != "u" || &header[1] != "v" {
            return Err(Error::Validation("unexpected surface CSV header".into()));
        }
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| Error::Validation(format!("bad number '{s}'")))
            }
        };
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(io_err)?;
            if rec.len() != dim + 5 {
                return Err(Error::Validation("ragged surface CSV row".into()));
            }
            let u = parse(&rec[0])?.ok_or_else(|| Error::Validation("missing u".into()))?;
            let v = parse(&rec[1])?.ok_or_else(|| Error::Validation("missing v".into()))?;
            let ys: Vec<Option<f64>> = (0..dim).map(|i| parse(&rec[2 + i])).collect::<Result<_>>()?;
            let y = if ys.iter().all(|x| x.is_some()) {
                Some(RVec::from_iterator(dim, ys.into_iter().map(|x| x.unwrap())))
            } else {
                None
            };
            let status = status_from_name(&rec[dim + 4])?;
            rows.push((u, v, y, parse(&rec[dim + 2])?, parse(&rec[dim + 3])?, status));
        }
        let us: BTreeSet<u64> = rows.iter().map(|r| r.0.to_bits()).collect();
        let vs: BTreeSet<u64> = rows.iter().map(|r| r.1.to_bits()).collect();
        let (mut us, mut vs): (Vec<f64>, Vec<f64>) =
            (us.into_iter().map(f64::from_bits).collect(), vs.into_iter().map(f64::from_bits).collect());
        us.sort_by(f64::total_cmp);
        vs.sort_by(f64::total_cmp);
        if us.is_empty() || us.len() * vs.len() != rows.len() {
            return Err(Error::Validation("surface CSV is not a full rectangular grid".into()));
        }
        let grid = Grid::new(
            (us[0], *us.last().unwrap(), us.len()),
            (vs[0], *vs.last().unwrap(), vs.len()),
        )?;
        let mut out = SurfaceGrid::new(grid, dim);
        for (u, v, y, om, ed, st) in rows {
            let k = us.partition_point(|&x| x < u);
            let l = vs.partition_point(|&x| x < v);
            let i = grid.index(k, l);
            out.points[i] = y;
            out.omega[i] = om;
            out.energy_density[i] = ed;
            out.status[i] = st;
        }
        Ok(out)
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

fn status_name(s: PointStatus) -> &'static str {
    match s {
        PointStatus::Ok => "ok",
        PointStatus::PoleSkipped => "pole_skipped",
        PointStatus::CellBoundary => "cell_boundary",
        PointStatus::NotComputed => "not_computed",
    }
}

fn status_from_name(s: &str) -> Result<PointStatus> {
    Ok(match s {
        "ok" => PointStatus::Ok,
        "pole_skipped" => PointStatus::PoleSkipped,
        "cell_boundary" => PointStatus::CellBoundary,
        "not_computed" => PointStatus::NotComputed,
        other => return Err(Error::Validation(format!("unknown status '{other}'"))),
    })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub conformality: f64,
    pub willmore: f64,
    pub isotropy: f64,
    pub codazzi: f64,
    pub conformality_points: usize,
    pub interior_points: usize,
}

/// Map from S^{d-1} to R^3 for mesh export.
#[derive(Clone, Debug)]
pub enum Projection {
    /// Rows of a 3 x d matrix.
    Linear(RMat),
    /// From the pole -e_0, keeping the coordinates 1, 2, 3 of the image.
    Stereographic,
}

impl Projection {
    pub fn first_axes(dim: usize) -> Self {
        Projection::Linear(RMat::from_fn(3, dim, |i, j| if i == j { 1.0 } else { 0.0 }))
    }

    pub fn apply(&self, y: &RVec) -> Option<[f64; 3]> {
        match self {
            Projection::Linear(m) => {
                let p = m * y;
                Some([p[0], p[1], p[2]])
            }
            Projection::Stereographic => {
                let d = 1.0 + y[0];
                if d.abs() < 1e-12 {
                    return None;
                }
                let at = |i: usize| if i < y.len() { y[i] / d } else { 0.0 };
                Some([at(1), at(2), at(3)])
            }
        }
    }
}

/// Triangle mesh in R^3.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Two triangles per grid cell whose four corners project.
    pub fn from_surface(s: &SurfaceGrid, proj: &Projection) -> Self {
        let g = s.grid;
        let mut index = vec![None; g.len()];
        let mut mesh = Mesh::default();
        for (i, p) in s.points.iter().enumerate() {
            if let Some(v) = p.as_ref().and_then(|y| proj.apply(y)) {
                index[i] = Some(mesh.vertices.len());
                mesh.vertices.push(v);
            }
        }
        for l in 0..g.im_count.saturating_sub(1) {
            for k in 0..g.re_count.saturating_sub(1) {
                let c = [g.index(k, l), g.index(k + 1, l), g.index(k + 1, l + 1), g.index(k, l + 1)].map(|i| index[i]);
                if let [Some(a), Some(b), Some(c2), Some(d)] = c {
                    mesh.faces.push([a, b, c2]);
                    mesh.faces.push([a, c2, d]);
                }
            }
        }
        mesh
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:?} {:?} {:?}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }

    pub fn read_obj<R: BufRead>(r: R) -> Result<Self> {
        let mut mesh = Mesh::default();
        for line in r.lines() {
            let line = line.map_err(|e| Error::Validation(e.to_string()))?;
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => mesh.vertices.push(three(it.map(|t| t.parse::<f64>()))?),
                Some("f") => {
                    let idx = three(it.map(|t| t.split('/').next().unwrap_or("").parse::<usize>()))?;
                    if idx.contains(&0) {
                        return Err(Error::Validation("obj indices start at 1".into()));
                    }
                    mesh.faces.push(idx.map(|i| i - 1));
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    pub fn write_ply<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ply\nformat ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        writeln!(w, "property double x\nproperty double y\nproperty double z")?;
        writeln!(w, "element face {}", self.faces.len())?;
        writeln!(w, "property list uchar int vertex_indices\nend_header")?;
        for v in &self.vertices {
            writeln!(w, "{:?} {:?} {:?}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }

    pub fn read_ply<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("ply: {m}"));
        let mut lines = r.lines().map(|l| l.map_err(|e| Error::Validation(e.to_string())));
        let (mut nv, mut nf) = (None, None);
        loop {
            let line = lines.next().ok_or_else(|| bad("missing end_header"))??;
            let t: Vec<&str> = line.split_whitespace().collect();
            match t.as_slice() {
                ["element", "vertex", n] => nv = n.parse::<usize>().ok(),
                ["element", "face", n] => nf = n.parse::<usize>().ok(),
                ["end_header"] => break,
                _ => {}
            }
        }
        let (nv, nf) = (nv.ok_or_else(|| bad("no vertex count"))?, nf.ok_or_else(|| bad("no face count"))?);
        let mut mesh = Mesh::default();
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("truncated vertices"))??;
            mesh.vertices.push(three(line.split_whitespace().map(|t| t.parse::<f64>()))?);
        }
        for _ in 0..nf {
            let line = lines.next().ok_or_else(|| bad("truncated faces"))??;
            let mut it = line.split_whitespace();
            if it.next() != Some("3") {
                return Err(bad("only triangles are supported"));
            }
            mesh.faces.push(three(it.map(|t| t.parse::<usize>()))?);
        }
        Ok(mesh)
    }
}

fn three<T: Copy + Default, E>(it: impl Iterator<Item = std::result::Result<T, E>>) -> Result<[T; 3]> {
    let v: Vec<T> = it
        .take(3)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Validation("malformed mesh line".into()))?;
    if v.len() != 3 {
        return Err(Error::Validation("mesh line needs three entries".into()));
    }
    Ok([v[0], v[1], v[2]])
}
