//! Constant potentials (lambda^{-1} B + A) dz: bracket conditions, the
//! closed-form exponential frames, vacuum classification and the cylinder
//! and Ejiri families.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Grid;
use crate::linalg::{
    algebra_residual, b1_of, conj, inverse, matrix_exp, minkowski_herm, null_residual, offdiag_sup, p_from_b1, split_blocks,
    sup, CMat, CVec, C64,
};
use crate::loops::{default_samples, unit_roots, TwistedLoop};
use crate::potentials::Potential;
use crate::linalg::RVec;
use crate::surface::{lift_to_point, willmore_energy, EnergyReport, SurfaceGrid};

const TOL: f64 = 1e-10;

fn bracket(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneousReport {
    /// |[eta_{-1}, conj(eta_0)]|
    pub mixed_bracket: f64,
    /// |[eta_{-1}, conj(eta_{-1})] + [eta_0, conj(eta_0)]|
    pub sum_bracket: f64,
    /// eta_0 entries (1,3) + (2,3) counted from one, and counted from zero.
    pub eta0_13_plus_23_one_based: C64,
    pub eta0_13_plus_23_zero_based: C64,
    pub passed: bool,
}

/// Check the two bracket conditions for a constant potential.
pub fn validate_homogeneous(eta_m1: &CMat, eta_0: &CMat) -> Result<HomogeneousReport> {
    let m = eta_m1.nrows();
    if m < 5 || eta_m1.shape() != (m, m) || eta_0.shape() != (m, m) {
        return Err(Error::SizeMismatch {
            expected: m,
            found: eta_0.nrows(),
        });
    }
    let scale = 1.0 + sup(eta_m1) + sup(eta_0);
    if offdiag_sup(eta_0) > 1e-12 * scale || split_blocks(eta_m1).0.iter().any(|c| c.norm() > 1e-12 * scale) {
        return Err(Error::Validation("eta_0 must be block diagonal and eta_-1 off-diagonal".into()));
    }
    if algebra_residual(eta_m1) > 1e-10 * scale || algebra_residual(eta_0) > 1e-10 * scale {
        return Err(Error::Validation("potential terms are not in the Lie algebra".into()));
    }
    let mixed_bracket = sup(&bracket(eta_m1, &conj(eta_0)));
    let sum_bracket = sup(&(bracket(eta_m1, &conj(eta_m1)) + bracket(eta_0, &conj(eta_0))));
    Ok(HomogeneousReport {
        mixed_bracket,
        sum_bracket,
        eta0_13_plus_23_one_based: eta_0[(0, 2)] + eta_0[(1, 2)],
        eta0_13_plus_23_zero_based: eta_0[(1, 3)] + eta_0[(2, 3)],
        passed: mixed_bracket < TOL && sum_bracket < TOL,
    })
}

fn blocks(p: &Potential) -> Result<(CMat, CMat)> {
    let z = p.basepoint();
    let m = p.n() + 4;
    let mut b = CMat::zeros(m, m);
    let mut a = CMat::zeros(m, m);
    for (&j, e) in p.terms() {
        let v = e.eval(z)?;
        match j {
            -1 => b = v,
            0 => a = v,
            _ => return Err(Error::Validation(format!("homogeneous potentials have only powers -1 and 0, found {j}"))),
        }
    }
    for e in p.terms().values() {
        if e.derivative().eval(z)?.iter().any(|c| c.norm() > 0.0) {
            return Err(Error::Validation("homogeneous potentials must be constant".into()));
        }
    }
    Ok((b, a))
}

/// The constant blocks (eta_{-1}, eta_0) of a homogeneous potential.
pub fn homogeneous_blocks(p: &Potential) -> Result<(CMat, CMat)> {
    blocks(p)
}

/// F(z, lambda) = exp(w (lambda^{-1} B + A) + conj(w) (lambda conj(B) + conj(A))),
/// w = z - z0, assembled from lambda samples into loop coefficients.
pub fn homogeneous_frame(p: &Potential, z: C64) -> Result<TwistedLoop> {
    let (b, a) = blocks(p)?;
    let rep = validate_homogeneous(&b, &a)?;
    if !rep.passed {
        return Err(Error::Validation(format!(
            "bracket conditions fail: {:.3e}, {:.3e}",
            rep.mixed_bracket, rep.sum_bracket
        )));
    }
    let w = z - p.basepoint();
    let x = w.norm() * (sup(&b) + sup(&a)) * (p.n() + 4) as f64;
    let degree = (16.0 + 3.0 * x).ceil() as usize;
    let count = default_samples(2 * degree);
    let (bc, ac) = (conj(&b), conj(&a));
    let samples = unit_roots(count)
        .into_iter()
        .map(|l| {
            let e = (&b / l + &a) * w + (&bc * l + &ac) * w.conj();
            matrix_exp(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TwistedLoop::from_samples(p.n(), &samples, degree, degree))
}

/// Maurer-Cartan form F^{-1} F_z of the homogeneous frame at lambda, by
/// sixth-order central differences with step h.
pub fn homogeneous_mc_form(p: &Potential, z: C64, lambda: C64, h: f64) -> Result<CMat> {
    let (b, a) = blocks(p)?;
    let (bc, ac) = (conj(&b), conj(&a));
    let frame = |zz: C64| {
        let w = zz - p.basepoint();
        matrix_exp(&((&b / lambda + &a) * w + (&bc * lambda + &ac) * w.conj()))
    };
    const W: [(f64, f64); 6] = [
        (-3.0, -1.0 / 60.0),
        (-2.0, 3.0 / 20.0),
        (-1.0, -3.0 / 4.0),
        (1.0, 3.0 / 4.0),
        (2.0, -3.0 / 20.0),
        (3.0, 1.0 / 60.0),
    ];
    let m = p.n() + 4;
    let mut fu = CMat::zeros(m, m);
    let mut fv = CMat::zeros(m, m);
    for (k, wt) in W {
        fu += frame(z + C64::new(k * h, 0.0))? * C64::new(wt / h, 0.0);
        fv += frame(z + C64::new(0.0, k * h))? * C64::new(wt / h, 0.0);
    }
    let fz = (fu - fv * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0);
    Ok(inverse(&frame(z)?)? * fz)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumClass {
    /// The harmonic map reduces to SO(1, n+1) / SO(1,1) x SO(n).
    ReducesLorentz,
    /// The harmonic map reduces to SO(n+2) / SO(2) x SO(n).
    ReducesCompact,
    Invalid,
}

/// Classify a vacuum B1 (4 x n) of rank at most one through its generating
/// vector v0: <v0, conj(v0)> = 0 or not.
pub fn vacuum_classify(b1: &CMat) -> VacuumClass {
    if b1.nrows() != 4 || b1.ncols() == 0 {
        return VacuumClass::Invalid;
    }
    let scale = sup(b1);
    if scale == 0.0 {
        return VacuumClass::Invalid;
    }
    let svd = b1.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv.len() > 1 && sv[1] > 1e-10 * sv[0] {
        return VacuumClass::Invalid;
    }
    if null_residual(b1) > 1e-10 * scale * scale {
        return VacuumClass::Invalid;
    }
    let j = (0..b1.ncols())
        .max_by(|&x, &y| b1.column(x).norm().total_cmp(&b1.column(y).norm()))
        .unwrap();
    let v0: CVec = b1.column(j).into_owned() / C64::new(b1.column(j).norm(), 0.0);
    let h = minkowski_herm(v0.as_slice(), v0.as_slice());
    if h.norm() < 1e-10 {
        VacuumClass::ReducesLorentz
    } else {
        VacuumClass::ReducesCompact
    }
}

fn constant_potential(n: usize, b1: &CMat, a: &CMat) -> Result<Potential> {
    Potential::constant(n, &BTreeMap::from([(-1, p_from_b1(b1)), (0, a.clone())]))
}

/// The homogeneous cylinder family in S^4 (a^2 + b^2 = 1).
pub fn cylinder_potential(a: f64, b: f64) -> Result<Potential> {
    if (a * a + b * b - 1.0).abs() > 1e-12 {
        return Err(Error::domain("cylinder parameters need a^2 + b^2 = 1"));
    }
    let c = |re: f64, im: f64| C64::new(re, im);
    let r = 1.0 / (4.0 * SQRT_2);
    let mut b1 = CMat::zeros(4, 2);
    b1[(0, 0)] = c(0.0, a * b / (2.0 * SQRT_2));
    b1[(1, 0)] = c(0.0, -a * b / (2.0 * SQRT_2));
    b1[(2, 1)] = c(0.0, b / 2.0);
    // printed with the opposite sign; this one is forced by the structure equations
    b1[(3, 1)] = c(-b / 2.0, 0.0);
    let mut m = CMat::zeros(6, 6);
    m[(0, 2)] = c(r, 0.0);
    m[(0, 3)] = c(0.0, -(1.0 + 2.0 * a * a) * r);
    m[(1, 2)] = c(3.0 * r, 0.0);
    m[(1, 3)] = c(0.0, -(1.0 + 2.0 * b * b) * r);
    m[(2, 0)] = c(r, 0.0);
    m[(2, 1)] = c(-3.0 * r, 0.0);
    m[(3, 0)] = c(0.0, -(1.0 + 2.0 * a * a) * r);
    m[(3, 1)] = c(0.0, (1.0 + 2.0 * b * b) * r);
    m[(4, 5)] = c(-a / 2.0, 0.0);
    m[(5, 4)] = c(a / 2.0, 0.0);
    constant_potential(2, &b1, &m)
}

/// Ejiri's family in S^5 (b > 0).
pub fn ejiri_potential(b: f64) -> Result<Potential> {
    if !(b > 0.0) {
        return Err(Error::domain("ejiri parameter b must be positive"));
    }
    let c = |re: f64, im: f64| C64::new(re, im);
    let b2 = b * b;
    let k1 = c((4.0 * b2 + 2.0).sqrt() / (12.0 * b), 0.0);
    let k2 = c(0.0, -(3f64).sqrt() / 6.0);
    let beta = c(0.0, -SQRT_2 * (4.0 * b2 - 1.0) / (72.0 * b2));
    let a13 = c(0.0, -(2.0 * b2 + 1.0).sqrt() / (6.0 * b));
    let a23 = c(6f64.sqrt() / 6.0, 0.0);
    let s1 = c(SQRT_2 * (20.0 * b2 + 1.0) / (144.0 * b2), 0.0);
    let s2 = c(0.0, -SQRT_2 * (12.0 * b2 - 1.0) / (48.0 * b2));
    let s3 = c(SQRT_2 * (52.0 * b2 - 1.0) / (144.0 * b2), 0.0);
    // the fourth entry is printed as a second "s_2"
    let s4 = c(0.0, -SQRT_2 * (12.0 * b2 + 1.0) / (48.0 * b2));
    let i = c(0.0, 1.0);
    let mut b1 = CMat::zeros(4, 3);
    b1[(0, 2)] = beta * SQRT_2;
    b1[(1, 2)] = -beta * SQRT_2;
    b1[(2, 0)] = -k1;
    b1[(2, 1)] = -k2;
    b1[(3, 0)] = -i * k1;
    b1[(3, 1)] = -i * k2;
    let mut m = CMat::zeros(7, 7);
    m[(0, 2)] = s1;
    m[(0, 3)] = s2;
    m[(1, 2)] = s3;
    m[(1, 3)] = s4;
    m[(2, 0)] = s1;
    m[(2, 1)] = -s3;
    m[(3, 0)] = s2;
    m[(3, 1)] = -s4;
    m[(4, 6)] = -a13;
    m[(5, 6)] = -a23;
    m[(6, 4)] = a13;
    m[(6, 5)] = a23;
    constant_potential(3, &b1, &m)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TorusEnergy {
    pub j: u32,
    pub l: u32,
    /// Family parameter b = l / j.
    pub b: f64,
    pub quadrature: f64,
    pub closed_form: f64,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Willmore energy of the Ejiri torus with coprime (j, l): the constant
/// density 4(|k1|^2 + |k2|^2) integrated over [0, 2 pi] x [0, 2 pi l sqrt3].
pub fn torus_energy(j: u32, l: u32) -> Result<TorusEnergy> {
    if j == 0 || l == 0 || gcd(j, l) != 1 {
        return Err(Error::domain("torus_energy needs coprime positive j, l"));
    }
    let b = l as f64 / j as f64;
    let (eta, _) = blocks(&ejiri_potential(b)?)?;
    let b1 = b1_of(&eta);
    let density = 4.0 * (b1[(2, 0)].norm_sqr() + b1[(2, 1)].norm_sqr());
    let grid = Grid::new((0.0, 2.0 * PI, 9), (0.0, 2.0 * PI * l as f64 * 3f64.sqrt(), 9))?;
    let quadrature = willmore_energy(&vec![Some(density); grid.len()], &grid)?.value;
    let closed_form = 16.0 * PI * PI * 3f64.sqrt() / 9.0 * (l as f64 + (j * j) as f64 / (8.0 * l as f64));
    Ok(TorusEnergy {
        j,
        l,
        b,
        quadrature,
        closed_form,
    })
}

/// The lattice generator 2 pi (1 + i l sqrt3) of the Ejiri torus with parameter l.
pub fn ejiri_period(l: u32) -> C64 {
    C64::new(2.0 * PI, 2.0 * PI * l as f64 * 3f64.sqrt())
}

/// The frame at a single lambda: one matrix exponential.
pub fn homogeneous_frame_at(p: &Potential, z: C64, lambda: C64) -> Result<CMat> {
    let (b, a) = blocks(p)?;
    let w = z - p.basepoint();
    matrix_exp(&((&b / lambda + &a) * w + (conj(&b) * lambda + conj(&a)) * w.conj()))
}

/// Point of the surface given by a homogeneous potential at z and lambda = 1.
pub fn homogeneous_immersion(p: &Potential, z: C64) -> Result<RVec> {
    let f = homogeneous_frame_at(p, z, C64::new(1.0, 0.0))?;
    lift_to_point(&RVec::from_fn(f.nrows(), |i, _| (f[(i, 0)] - f[(i, 1)]).re))
}

/// Willmore energy of the Ejiri torus measured from the surface itself:
/// the immersion is sampled on a count x count grid over the fundamental
/// domain (plus a margin for the stencils), the conformal Gauss frame is
/// rebuilt by finite differences and 4 <kappa, conj(kappa)> is integrated.
pub fn pipeline_torus_energy(j: u32, l: u32, count: usize) -> Result<EnergyReport> {
    if j == 0 || l == 0 || gcd(j, l) != 1 || count < 9 {
        return Err(Error::domain("pipeline_torus_energy needs coprime positive j, l and count >= 9"));
    }
    let p = ejiri_potential(l as f64 / j as f64)?;
    let (lu, lv) = (2.0 * PI, 2.0 * PI * l as f64 * 3f64.sqrt());
    let (hu, hv) = (lu / (count - 1) as f64, lv / (count - 1) as f64);
    const PAD: usize = 4;
    let wide = Grid::new(
        (-(PAD as f64) * hu, lu + PAD as f64 * hu, count + 2 * PAD),
        (-(PAD as f64) * hv, lv + PAD as f64 * hv, count + 2 * PAD),
    )?;
    let mut sg = SurfaceGrid::from_fn(&wide, |u, v| homogeneous_immersion(&p, C64::new(u, v)))?;
    sg.fill_scalars();
    Ok(sg.interior_energy(PAD)?.1)
}

/// max over the points of |y(z + period) - y(z)|.
pub fn period_defect(p: &Potential, points: &[C64], period: C64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &z in points {
        let d = homogeneous_immersion(p, z + period)? - homogeneous_immersion(p, z)?;
        worst = worst.max(d.amax());
    }
    Ok(worst)
}

/// Distance between two frames modulo a constant K-valued gauge:
/// k = F1(1)^{-1} F2(1) should be real block diagonal and F1 k = F2 at every lambda.
pub fn gauge_distance(f1: &TwistedLoop, f2: &TwistedLoop) -> Result<f64> {
    let one = C64::new(1.0, 0.0);
    let k = inverse(&f1.evaluate(one)?)? * f2.evaluate(one)?;
    let mut d = offdiag_sup(&k) + k.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    for l in unit_roots(16) {
        let l = l * C64::from_polar(1.0, 0.1);
        d = d.max(sup(&(f1.evaluate(l)? * &k - f2.evaluate(l)?)));
    }
    Ok(d)
}
