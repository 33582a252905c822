//! Integration of dC = C eta from the basepoint and the per-point Iwasawa
//! step that turns C into the extended frame.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{iwasawa_with, FactorOptions};
use crate::linalg::{b1_of, inverse, null_residual, split_blocks, sup, CMat, C64};
use crate::loops::{default_samples, unit_roots, TwistedLoop, DEFAULT_DEGREE};
use crate::potentials::{Potential, PotentialKind};

/// Rectangular lattice {re_k + i im_l}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub re_min: f64,
    pub re_max: f64,
    pub re_count: usize,
    pub im_min: f64,
    pub im_max: f64,
    pub im_count: usize,
}

impl Grid {
    pub fn new(re: (f64, f64, usize), im: (f64, f64, usize)) -> Result<Self> {
        let g = Grid {
            re_min: re.0,
            re_max: re.1,
            re_count: re.2,
            im_min: im.0,
            im_max: im.1,
            im_count: im.2,
        };
        if g.re_count == 0 || g.im_count == 0 {
            return Err(Error::domain("grid counts must be positive"));
        }
        if !(g.re_min <= g.re_max && g.im_min <= g.im_max) {
            return Err(Error::domain("grid ranges must satisfy min <= max"));
        }
        Ok(g)
    }

    /// Square grid [-r, r]^2 with `count` points per side.
    pub fn square(r: f64, count: usize) -> Self {
        Grid::new((-r, r, count), (-r, r, count)).unwrap()
    }

    pub fn len(&self) -> usize {
        self.re_count * self.im_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(min: f64, max: f64, count: usize, k: usize) -> f64 {
        if count == 1 {
            min
        } else {
            min + (max - min) * k as f64 / (count - 1) as f64
        }
    }

    pub fn re(&self, k: usize) -> f64 {
        Self::axis(self.re_min, self.re_max, self.re_count, k)
    }

    pub fn im(&self, l: usize) -> f64 {
        Self::axis(self.im_min, self.im_max, self.im_count, l)
    }

    /// Point at index `idx` (real index fastest).
    pub fn point(&self, idx: usize) -> C64 {
        C64::new(self.re(idx % self.re_count), self.im(idx / self.re_count))
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        l * self.re_count + k
    }

    pub fn du(&self) -> f64 {
        if self.re_count > 1 {
            (self.re_max - self.re_min) / (self.re_count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn dv(&self) -> f64 {
        if self.im_count > 1 {
            (self.im_max - self.im_min) / (self.im_count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn min_spacing(&self) -> f64 {
        let s = [self.du(), self.dv()].into_iter().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        if s.is_finite() {
            s
        } else {
            1.0
        }
    }
}

/// `re:min:max:count,im:min:max:count`
impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut re = None;
        let mut im = None;
        for part in s.split(',') {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 4 {
                return Err(Error::domain(format!("bad grid axis '{part}'")));
            }
            let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::domain(format!("bad number '{t}' in grid")));
            let count = f[3]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::domain(format!("bad count '{}' in grid", f[3])))?;
            let axis = (num(f[1])?, num(f[2])?, count);
            match f[0].trim() {
                "re" => re = Some(axis),
                "im" => im = Some(axis),
                other => return Err(Error::domain(format!("unknown grid axis '{other}'"))),
            }
        }
        match (re, im) {
            (Some(r), Some(i)) => Grid::new(r, i),
            _ => Err(Error::domain("grid needs both re and im axes")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationOptions {
    /// Local error allowed per unit path length.
    pub tol: f64,
    /// Loop truncation degree used for C (negative and, for holomorphic
    /// potentials, positive powers).
    pub degree: usize,
    /// Pole exclusion radius as a fraction of the grid spacing.
    pub pole_radius_factor: f64,
    pub max_steps: usize,
    pub vertical_first: bool,
    pub factor: FactorOptions,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            tol: 1e-10,
            degree: DEFAULT_DEGREE,
            pole_radius_factor: 1e-2,
            max_steps: 200_000,
            vertical_first: false,
            factor: FactorOptions::default(),
        }
    }
}

/// Quantities the Dormand-Prince stepper needs from its state.
trait OdeState: Clone {
    fn add_scaled(&mut self, a: f64, x: &Self);
    fn size(&self) -> f64;
}

impl OdeState for TwistedLoop {
    fn add_scaled(&mut self, a: f64, x: &Self) {
        self.axpy(C64::new(a, 0.0), x);
    }
    fn size(&self) -> f64 {
        self.sup_norm()
    }
}

impl OdeState for CMat {
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += x * C64::new(a, 0.0);
    }
    fn size(&self) -> f64 {
        sup(self)
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrate y' = f(s, y) over s in [0, len] with error per step at most
/// tol * step * max(1, |y|).
fn dormand_prince<S: OdeState>(
    y0: S,
    len: f64,
    tol: f64,
    max_steps: usize,
    f: &dyn Fn(f64, &S) -> Result<S>,
) -> Result<S> {
    if len == 0.0 {
        return Ok(y0);
    }
    let mut y = y0;
    let mut s = 0.0;
    let mut h = (len / 8.0).min(0.05);
    let mut k1 = f(0.0, &y)?;
    let mut steps = 0;
    while s < len {
        if steps >= max_steps {
            return Err(Error::numeric("step budget exhausted"));
        }
        steps += 1;
        let last = s + h >= len;
        if last {
            h = len - s;
        }
        let mut ks: Vec<S> = vec![k1.clone()];
        for stage in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    yi.add_scaled(h * a, kj);
                }
            }
            ks.push(f(s + DP_C[stage] * h, &yi)?);
            if stage == 6 {
                // the seventh stage evaluates at the fifth-order solution (FSAL)
                let mut err = ks[0].clone();
                err.add_scaled(DP_E[0] - 1.0, &ks[0]);
                for (j, kj) in ks.iter().enumerate().skip(1) {
                    err.add_scaled(DP_E[j], kj);
                }
                let e = h * err.size();
                let bound = tol * h * y.size().max(1.0);
                if e <= bound || h < 1e-14 * len {
                    y = yi;
                    s = if last { len } else { s + h };
                    k1 = ks.pop().unwrap();
                    let fac = if e == 0.0 { 5.0 } else { (0.9 * (bound / e).powf(0.2)).clamp(0.2, 5.0) };
                    h *= fac;
                } else {
                    let fac = (0.9 * (bound / e).powf(0.2)).clamp(0.1, 0.9);
                    h *= fac;
                    if h < 1e-14 * len {
                        return Err(Error::numeric("step size underflow"));
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Degrees used for C given the potential's kind.
fn state_degrees(p: &Potential, opts: &IntegrationOptions) -> (usize, usize) {
    match p.kind() {
        PotentialKind::Normalized if p.max_power() <= -1 => (opts.degree, 0),
        _ => (opts.degree, opts.degree),
    }
}

fn segment_blocked(a: C64, b: C64, poles: &[C64], radius: f64) -> Option<C64> {
    let d = b - a;
    let len2 = d.norm_sqr();
    for &p in poles {
        let t = if len2 == 0.0 { 0.0 } else { ((p - a) * d.conj()).re / len2 };
        let q = a + d * t.clamp(0.0, 1.0);
        if (q - p).norm() < radius {
            return Some(p);
        }
    }
    None
}

/// Carries C along straight segments through the potential.
pub struct PathIntegrator<'a> {
    p: &'a Potential,
    opts: IntegrationOptions,
    poles: Vec<C64>,
    radius: f64,
    spacing: f64,
    dn: usize,
    dp: usize,
}

impl<'a> PathIntegrator<'a> {
    pub fn new(p: &'a Potential, opts: &IntegrationOptions, spacing: f64) -> Self {
        let (dn, dp) = state_degrees(p, opts);
        PathIntegrator {
            p,
            opts: opts.clone(),
            poles: p.poles(),
            radius: opts.pole_radius_factor * spacing,
            spacing,
            dn,
            dp,
        }
    }

    pub fn identity(&self) -> TwistedLoop {
        TwistedLoop::identity(self.p.n()).widened(self.dn, self.dp)
    }

    pub fn near_pole(&self, z: C64) -> Option<C64> {
        self.poles.iter().copied().find(|p| (p - z).norm() < self.radius)
    }

    pub fn segment(&self, c: &TwistedLoop, a: C64, b: C64) -> Result<TwistedLoop> {
        if let Some(z) = segment_blocked(a, b, &self.poles, self.radius) {
            return Err(Error::PoleEncountered { z });
        }
        let len = (b - a).norm();
        if len == 0.0 {
            return Ok(c.clone());
        }
        let dir = (b - a) / len;
        let (dn, dp) = (self.dn, self.dp);
        let rhs = |s: f64, y: &TwistedLoop| -> Result<TwistedLoop> {
            let z = a + dir * s;
            let eta = self.p.eval_loop(z).map_err(|_| Error::PoleEncountered { z })?;
            let mut out = y.multiply_to(&eta, dn, dp)?;
            for j in out.powers() {
                let v = out.coeff(j).unwrap() * dir;
                out.set_coeff(j, v);
            }
            Ok(out)
        };
        dormand_prince(c.clone(), len, self.opts.tol, self.opts.max_steps, &rhs)
    }

    /// Follow a polyline.
    pub fn path(&self, c: &TwistedLoop, pts: &[C64]) -> Result<TwistedLoop> {
        let mut cur = c.clone();
        for w in pts.windows(2) {
            cur = self.segment(&cur, w[0], w[1])?;
        }
        Ok(cur)
    }

    /// C at z along a staircase from the basepoint.
    pub fn staircase(&self, z: C64, vertical_first: bool) -> Result<TwistedLoop> {
        let z0 = self.p.basepoint();
        let corner = if vertical_first {
            C64::new(z0.re, z.im)
        } else {
            C64::new(z.re, z0.im)
        };
        self.path(&self.identity(), &[z0, corner, z])
    }

    /// C at z, trying the other staircase when a pole blocks the first and
    /// finally a detour one grid spacing above (then below) the straight line.
    pub fn at(&self, z: C64) -> Result<TwistedLoop> {
        if let Some(p) = self.near_pole(z) {
            return Err(Error::PoleEncountered { z: p });
        }
        for vertical in [self.opts.vertical_first, !self.opts.vertical_first] {
            match self.staircase(z, vertical) {
                Err(Error::PoleEncountered { .. }) => {}
                r => return r,
            }
        }
        let mut last = Error::PoleEncountered { z };
        let z0 = self.p.basepoint();
        for off in [1.0, -1.0] {
            let d = C64::new(0.0, off * self.spacing);
            match self.path(&self.identity(), &[z0, z0 + d, z + d, z]) {
                Err(e @ Error::PoleEncountered { .. }) => last = e,
                r => return r,
            }
        }
        Err(last)
    }
}

/// Integrate dF(lambda) = F(lambda) eta(z, lambda) dz at a fixed lambda.
pub fn integrate_at_lambda(p: &Potential, z: C64, lambda: C64, opts: &IntegrationOptions) -> Result<CMat> {
    let z0 = p.basepoint();
    let corner = C64::new(z.re, z0.im);
    let m = p.n() + 4;
    let mut y = CMat::identity(m, m);
    for (a, b) in [(z0, corner), (corner, z)] {
        let len = (b - a).norm();
        if len == 0.0 {
            continue;
        }
        let dir = (b - a) / len;
        let rhs = |s: f64, y: &CMat| -> Result<CMat> {
            let zz = a + dir * s;
            let mut eta = CMat::zeros(m, m);
            for (j, c) in p.eval(zz).map_err(|_| Error::PoleEncountered { z: zz })? {
                eta += c * lambda.powi(j as i32);
            }
            Ok(y * eta * dir)
        };
        y = dormand_prince(y, len, opts.tol, opts.max_steps, &rhs)?;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    PoleSkipped,
    CellBoundary,
    NotComputed,
}

#[derive(Clone, Debug)]
pub struct FramePoint {
    pub z: C64,
    pub status: PointStatus,
    /// Holomorphic frame C (F_- for normalized potentials).
    pub c: Option<TwistedLoop>,
    /// Extended frame F = C v_plus.
    pub f: Option<TwistedLoop>,
    /// v_plus at lambda = 0, an element of the solvable complement.
    pub v_plus0: Option<CMat>,
    /// The lambda^{-1} coefficient of the potential at z.
    pub eta_m1: Option<CMat>,
    pub message: Option<String>,
}

impl FramePoint {
    fn failed(z: C64, status: PointStatus, msg: String) -> Self {
        FramePoint {
            z,
            status,
            c: None,
            f: None,
            v_plus0: None,
            eta_m1: None,
            message: Some(msg),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameField {
    pub grid: Grid,
    pub degree: usize,
    pub points: Vec<FramePoint>,
}

impl FrameField {
    pub fn count(&self, status: PointStatus) -> usize {
        self.points.iter().filter(|p| p.status == status).count()
    }

    pub fn get(&self, k: usize, l: usize) -> &FramePoint {
        &self.points[self.grid.index(k, l)]
    }
}

fn status_of(e: &Error) -> PointStatus {
    match e {
        Error::PoleEncountered { .. } | Error::Pole { .. } => PointStatus::PoleSkipped,
        Error::CellBoundary(_) | Error::NotInCell { .. } | Error::BigCellViolation { .. } | Error::SingularLoop { .. } => {
            PointStatus::CellBoundary
        }
        _ => PointStatus::NotComputed,
    }
}

/// C on every grid point: the basepoint row first, then each column outward
/// from it, falling back to the opposite staircase when a pole is in the way.
pub fn integrate_holomorphic_frame(p: &Potential, grid: &Grid, opts: &IntegrationOptions) -> Vec<Result<TwistedLoop>> {
    let pi = PathIntegrator::new(p, opts, grid.min_spacing());
    let z0 = p.basepoint();
    // row through the basepoint at each grid abscissa, marching outward
    let xs: Vec<f64> = (0..grid.re_count).map(|k| grid.re(k)).collect();
    let mut base: Vec<Option<Result<TwistedLoop>>> = vec![None; xs.len()];
    for dir in [1.0, -1.0] {
        let mut order: Vec<usize> = (0..xs.len()).filter(|&k| (xs[k] - z0.re) * dir >= 0.0).collect();
        order.sort_by(|&a, &b| ((xs[a] - z0.re) * dir).total_cmp(&((xs[b] - z0.re) * dir)));
        let mut cur = Ok(pi.identity());
        let mut at = z0;
        for k in order {
            if base[k].is_some() {
                continue;
            }
            let target = C64::new(xs[k], z0.im);
            cur = cur.and_then(|c| pi.segment(&c, at, target));
            at = target;
            base[k] = Some(cur.clone());
        }
    }
    let cols: Vec<Vec<(usize, Result<TwistedLoop>)>> = (0..grid.re_count)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::with_capacity(grid.im_count);
            let start = base[k].clone().unwrap();
            let foot = C64::new(xs[k], z0.im);
            for dir in [1.0, -1.0] {
                let mut order: Vec<usize> =
                    (0..grid.im_count).filter(|&l| (grid.im(l) - z0.im) * dir > 0.0 || (dir > 0.0 && grid.im(l) == z0.im)).collect();
                order.sort_by(|&a, &b| ((grid.im(a) - z0.im) * dir).total_cmp(&((grid.im(b) - z0.im) * dir)));
                let mut cur = start.clone();
                let mut at = foot;
                for l in order {
                    let z = C64::new(xs[k], grid.im(l));
                    cur = cur.and_then(|c| pi.segment(&c, at, z));
                    at = z;
                    let val = match &cur {
                        Ok(c) if pi.near_pole(z).is_none() => Ok(c.clone()),
                        _ => pi.at(z),
                    };
                    out.push((grid.index(k, l), val));
                }
            }
            out
        })
        .collect();
    let mut res: Vec<Result<TwistedLoop>> = (0..grid.len()).map(|_| Err(Error::numeric("not computed"))).collect();
    for col in cols {
        for (idx, v) in col {
            res[idx] = v;
        }
    }
    res
}

/// Iwasawa-split C at a single point.
pub fn frame_from_c(p: &Potential, z: C64, c: TwistedLoop, opts: &FactorOptions) -> FramePoint {
    match iwasawa_with(&c, opts) {
        Ok(iw) => FramePoint {
            z,
            status: PointStatus::Ok,
            v_plus0: Some(iw.v_plus.coeff_or_zero(0)),
            f: Some(iw.f),
            c: Some(c),
            eta_m1: p.terms().get(&-1).and_then(|m| m.eval(z).ok()),
            message: None,
        },
        Err(e) => FramePoint::failed(z, status_of(&e), e.to_string()),
    }
}

/// Extended frames over a grid; failures are recorded per point.
pub fn dpw_construct(p: &Potential, grid: &Grid, opts: &IntegrationOptions) -> FrameField {
    let cs = integrate_holomorphic_frame(p, grid, opts);
    let points: Vec<FramePoint> = cs
        .into_par_iter()
        .enumerate()
        .map(|(idx, c)| {
            let z = grid.point(idx);
            match c {
                Ok(c) => frame_from_c(p, z, c, &opts.factor),
                Err(e) => FramePoint::failed(z, status_of(&e), e.to_string()),
            }
        })
        .collect();
    FrameField {
        grid: *grid,
        degree: opts.degree,
        points,
    }
}

/// Frame at a single point (long path from the basepoint).
pub fn dpw_point(p: &Potential, z: C64, opts: &IntegrationOptions) -> Result<FramePoint> {
    let pi = PathIntegrator::new(p, opts, 1.0);
    let c = pi.at(z)?;
    let fp = frame_from_c(p, z, c, &opts.factor);
    match fp.status {
        PointStatus::Ok => Ok(fp),
        _ => Err(Error::CellBoundary(fp.message.unwrap_or_default())),
    }
}

/// Frames on the lattice z + (a + i b) h, computed lazily. The centre comes
/// from the basepoint; every other node from a short path off the centre so
/// that finite differences see consistent integration error.
pub struct FrameLattice<'a> {
    p: &'a Potential,
    pi: PathIntegrator<'a>,
    factor: FactorOptions,
    pub centre: C64,
    pub h: f64,
    c0: TwistedLoop,
    frames: HashMap<(i32, i32), TwistedLoop>,
    pub samples: usize,
}

impl<'a> FrameLattice<'a> {
    pub fn new(p: &'a Potential, centre: C64, h: f64, opts: &IntegrationOptions) -> Result<Self> {
        let pi = PathIntegrator::new(p, opts, h.max(1e-3));
        let c0 = pi.at(centre)?;
        let samples = default_samples(2 * opts.factor.degree.unwrap_or(2 * opts.degree).max(8));
        Ok(FrameLattice {
            p,
            pi,
            factor: opts.factor.clone(),
            centre,
            h,
            c0,
            frames: HashMap::new(),
            samples,
        })
    }

    pub fn node(&self, a: i32, b: i32) -> C64 {
        self.centre + C64::new(a as f64, b as f64) * self.h
    }

    pub fn frame(&mut self, a: i32, b: i32) -> Result<TwistedLoop> {
        if let Some(f) = self.frames.get(&(a, b)) {
            return Ok(f.clone());
        }
        let z = self.node(a, b);
        let corner = self.node(a, 0);
        let c = self.pi.path(&self.c0, &[self.centre, corner, z])?;
        let iw = iwasawa_with(&c, &self.factor)?;
        self.frames.insert((a, b), iw.f.clone());
        let _ = self.p;
        Ok(iw.f)
    }

    /// F^{-1} F_z and F^{-1} F_zbar at node (a, b) as loops, by fourth-order
    /// central differences; coefficients kept in [-deg, deg].
    pub fn mc_form(&mut self, a: i32, b: i32, deg: usize) -> Result<(TwistedLoop, TwistedLoop)> {
        const W: [(i32, f64); 4] = [(-2, 1.0 / 12.0), (-1, -2.0 / 3.0), (1, 2.0 / 3.0), (2, -1.0 / 12.0)];
        let n = self.p.n();
        let count = self.samples;
        let f0 = self.frame(a, b)?.samples(count);
        let m = n + 4;
        let mut fu = vec![CMat::zeros(m, m); count];
        let mut fv = vec![CMat::zeros(m, m); count];
        for (k, w) in W {
            let su = self.frame(a + k, b)?.samples(count);
            let sv = self.frame(a, b + k)?.samples(count);
            for i in 0..count {
                fu[i] += &su[i] * C64::new(w / self.h, 0.0);
                fv[i] += &sv[i] * C64::new(w / self.h, 0.0);
            }
        }
        let half = C64::new(0.5, 0.0);
        let i_ = C64::new(0.0, 1.0);
        let mut ap = Vec::with_capacity(count);
        let mut app = Vec::with_capacity(count);
        for i in 0..count {
            let fi = inverse(&f0[i])?;
            let fz = (&fu[i] - &fv[i] * i_) * half;
            let fzb = (&fu[i] + &fv[i] * i_) * half;
            ap.push(&fi * fz);
            app.push(&fi * fzb);
        }
        Ok((
            TwistedLoop::from_samples(n, &ap, deg, deg),
            TwistedLoop::from_samples(n, &app, deg, deg),
        ))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FrameCheckReport {
    /// Largest coefficient of alpha outside the powers -1, 0, 1.
    pub support_residual: f64,
    /// Largest entry of alpha in a block forbidden at its power.
    pub block_residual: f64,
    /// Zero-curvature residual d alpha'' - dbar alpha' + [alpha', alpha''].
    pub flatness_residual: f64,
    /// ||B1^t J1 B1|| for the lambda^{-1} block of alpha'.
    pub strong_conformality: f64,
    pub points: usize,
}

/// Finite-difference Maurer-Cartan diagnostics of the extended frame at the
/// given points with step h.
pub fn extended_frame_check(p: &Potential, points: &[C64], h: f64, opts: &IntegrationOptions) -> Result<FrameCheckReport> {
    let mut rep = FrameCheckReport::default();
    if p.is_zero() {
        rep.points = points.len();
        return Ok(rep);
    }
    let deg = 4usize;
    for &z in points {
        let mut lat = FrameLattice::new(p, z, h, opts)?;
        let (a1, a2) = lat.mc_form(0, 0, deg)?;
        for (loopv, _) in [(&a1, 0), (&a2, 1)] {
            for j in loopv.powers() {
                let c = loopv.coeff(j).unwrap();
                if j.abs() > 1 {
                    rep.support_residual = rep.support_residual.max(sup(c));
                }
            }
        }
        // the loop type already projects parity; measure the raw block leak
        rep.block_residual = rep.block_residual.max(a1.dropped().min(0.0));
        let b1 = b1_of(&a1.coeff_or_zero(-1));
        rep.strong_conformality = rep.strong_conformality.max(null_residual(&b1));
        // flatness on the cross stencil
        const W: [(i32, f64); 4] = [(-2, 1.0 / 12.0), (-1, -2.0 / 3.0), (1, 2.0 / 3.0), (2, -1.0 / 12.0)];
        let m = p.n() + 4;
        let count = lat.samples;
        let mut dz_a2 = vec![CMat::zeros(m, m); count];
        let mut dzb_a1 = vec![CMat::zeros(m, m); count];
        let i_ = C64::new(0.0, 1.0);
        for (k, w) in W {
            let (p1u, p2u) = lat.mc_form(k, 0, deg)?;
            let (p1v, p2v) = lat.mc_form(0, k, deg)?;
            let (s1u, s2u, s1v, s2v) = (p1u.samples(count), p2u.samples(count), p1v.samples(count), p2v.samples(count));
            let c = C64::new(0.5 * w / h, 0.0);
            for i in 0..count {
                // d_z = (d_u - i d_v)/2, d_zbar = (d_u + i d_v)/2
                dz_a2[i] += (&s2u[i] - &s2v[i] * i_) * c;
                dzb_a1[i] += (&s1u[i] + &s1v[i] * i_) * c;
            }
        }
        let (s1, s2) = (a1.samples(count), a2.samples(count));
        for i in 0..count {
            let curv = &dz_a2[i] - &dzb_a1[i] + &s1[i] * &s2[i] - &s2[i] * &s1[i];
            rep.flatness_residual = rep.flatness_residual.max(sup(&curv));
        }
        rep.points += 1;
    }
    Ok(rep)
}

/// Raw (unprojected) MC form samples, used to measure the parity leak.
pub fn block_leak(alpha_samples: &[CMat]) -> f64 {
    let n = alpha_samples[0].nrows() - 4;
    let count = alpha_samples.len();
    let roots = unit_roots(count);
    let mut worst: f64 = 0.0;
    for j in -1i64..=1 {
        let mut c = CMat::zeros(n + 4, n + 4);
        for (s, l) in alpha_samples.iter().zip(roots.iter()) {
            c += s * l.powi(-j as i32);
        }
        c /= C64::new(count as f64, 0.0);
        let (k, p) = split_blocks(&c);
        worst = worst.max(if j == 0 { sup(&p) } else { sup(&k) });
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, matrix_exp};
    use crate::potentials::parse_potential;
    use std::collections::BTreeMap;

    const S6: &str = "potential { n = 4; kind = normalized; basepoint = (0, 0); }
coeff[-1] { B1 = [[iz, -z, -i/2, 1/2], [-iz, z, -i/2, 1/2], [-1, -i, -z/2, -iz/2], [i, -1, -iz/2, z/2]]; }";

    #[test]
    fn grid_grammar() {
        let g: Grid = "re:-1:1:21,im:-1:1:21".parse().unwrap();
        assert_eq!(g.len(), 441);
        assert_eq!(g.point(0), c(-1.0, -1.0));
        assert_eq!(g.point(440), c(1.0, 1.0));
        assert!((g.du() - 0.1).abs() < 1e-15);
        assert!("re:0:1:3".parse::<Grid>().is_err());
        assert!("re:0:1:x,im:0:1:2".parse::<Grid>().is_err());
    }

    #[test]
    fn dp5_exponential() {
        let y = dormand_prince(CMat::identity(1, 1), 1.0, 1e-12, 10_000, &|_, y: &CMat| Ok(y.clone())).unwrap();
        assert!((y[(0, 0)].re - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn zero_potential_gives_identity() {
        let p = Potential::constant(2, &BTreeMap::from([(-1, CMat::zeros(6, 6))])).unwrap();
        let ff = dpw_construct(&p, &Grid::square(1.0, 3), &IntegrationOptions::default());
        for pt in &ff.points {
            assert_eq!(pt.status, PointStatus::Ok);
            assert!(pt.f.as_ref().unwrap().distance(&TwistedLoop::identity(2)) < 1e-14);
        }
    }

    #[test]
    fn constant_potential_matches_exponential() {
        let mut rng_b = CMat::zeros(4, 2);
        rng_b[(0, 0)] = c(0.3, 0.1);
        rng_b[(1, 1)] = c(-0.2, 0.4);
        let eta = crate::linalg::p_from_b1(&rng_b);
        let p = Potential::constant(2, &BTreeMap::from([(-1, eta.clone())])).unwrap();
        let opts = IntegrationOptions {
            tol: 1e-12,
            degree: 14,
            ..Default::default()
        };
        let pi = PathIntegrator::new(&p, &opts, 1.0);
        let z = c(0.7, -0.4);
        let cz = pi.at(z).unwrap();
        for lam in [c(1.0, 0.0), c(0.0, 1.0), C64::from_polar(1.0, 0.8)] {
            let exact = matrix_exp(&(&eta * (z / lam))).unwrap();
            let e = sup(&(cz.evaluate(lam).unwrap() - exact));
            assert!(e < 1e-10, "{e}");
        }
    }

    #[test]
    fn s6_frame_is_polynomial_with_identity_constant() {
        let p = parse_potential(S6).unwrap();
        let pi = PathIntegrator::new(&p, &IntegrationOptions::default(), 1.0);
        let cz = pi.at(c(0.6, 0.8)).unwrap();
        assert_eq!(cz.coeff(0).unwrap(), &CMat::identity(8, 8));
        for lam in [c(1.0, 0.0), c(0.0, 1.0), C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)] {
            let direct = integrate_at_lambda(&p, c(0.6, 0.8), lam, &IntegrationOptions::default()).unwrap();
            assert!(sup(&(cz.evaluate(lam).unwrap() - direct)) < 1e-9);
        }
    }

    #[test]
    fn path_independence() {
        let p = parse_potential(S6).unwrap();
        let pi = PathIntegrator::new(&p, &IntegrationOptions::default(), 1.0);
        let z = c(-0.7, 0.9);
        let a = pi.staircase(z, false).unwrap();
        let b = pi.staircase(z, true).unwrap();
        assert!(a.distance(&b) < 1e-8);
    }

    #[test]
    fn pole_is_skipped() {
        let text = "potential { n = 1; kind = normalized; basepoint = (0,0); }
coeff[-1] { B1 = [[1/(z-0.5)], [-1/(z-0.5)], [0], [0]]; }";
        let p = parse_potential(text).unwrap();
        let g = Grid::new((0.0, 1.0, 3), (0.0, 0.5, 2)).unwrap();
        let ff = dpw_construct(&p, &g, &IntegrationOptions::default());
        assert_eq!(ff.get(1, 0).status, PointStatus::PoleSkipped);
        // beyond the pole on the real axis: reached by the vertical-first staircase
        assert_eq!(ff.get(2, 0).status, PointStatus::Ok);
        assert_eq!(ff.get(2, 1).status, PointStatus::Ok);
    }

    #[test]
    fn s6_grid_frames_real() {
        let p = parse_potential(S6).unwrap();
        let ff = dpw_construct(&p, &Grid::square(1.0, 5), &IntegrationOptions::default());
        assert_eq!(ff.count(PointStatus::Ok), 25);
        for pt in &ff.points {
            assert!(pt.f.as_ref().unwrap().reality_defect() < 1e-6);
        }
        let centre = ff.get(2, 2);
        assert!(centre.f.as_ref().unwrap().distance(&TwistedLoop::identity(4)) < 1e-12);
    }

    #[test]
    fn frame_check_s6() {
        let p = parse_potential(S6).unwrap();
        let rep = extended_frame_check(&p, &[c(0.3, 0.2)], 1e-3, &IntegrationOptions::default()).unwrap();
        assert!(rep.support_residual < 1e-4, "{rep:?}");
        assert!(rep.strong_conformality < 1e-4, "{rep:?}");
        assert!(rep.flatness_residual < 1e-4, "{rep:?}");
    }
}
