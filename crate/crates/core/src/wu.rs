//! Normalized potential from Maurer-Cartan data: fit the real-analytic
//! coefficients on a disc, keep their holomorphic parts and conjugate,
//! eta_{-1} = F0 delta1 F0^{-1} with F0^{-1} dF0 = delta0, F0(0) = I.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameLattice, IntegrationOptions};
use crate::homogeneous::{homogeneous_blocks, homogeneous_mc_form};
use crate::linalg::{b1_of, matrix_exp, split_blocks, sup, CMat, C64};
use crate::potentials::{Poly, Potential, RationalExpr};

/// Angular modes kept by the fit, |k| <= this.
pub const DEFAULT_MODES: usize = 10;
/// Chebyshev terms per mode in s = r^2.
pub const DEFAULT_TERMS: usize = 12;

/// Truncated double power series sum c_{pq} z^p zbar^q with matrix coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BivariateTaylor {
    pub rows: usize,
    pub cols: usize,
    pub coeffs: BTreeMap<(u32, u32), CMat>,
}

impl BivariateTaylor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BivariateTaylor {
            rows,
            cols,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_terms(rows: usize, cols: usize, terms: impl IntoIterator<Item = ((u32, u32), CMat)>) -> Result<Self> {
        let mut t = Self::zeros(rows, cols);
        for (pq, m) in terms {
            t.add_term(pq, m)?;
        }
        Ok(t)
    }

    pub fn add_term(&mut self, pq: (u32, u32), m: CMat) -> Result<()> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::SizeMismatch {
                expected: self.rows,
                found: m.nrows(),
            });
        }
        match self.coeffs.get_mut(&pq) {
            Some(c) => *c += m,
            None => {
                self.coeffs.insert(pq, m);
            }
        }
        Ok(())
    }

    pub fn max_degree(&self) -> u32 {
        self.coeffs.keys().map(|(p, q)| p + q).max().unwrap_or(0)
    }

    pub fn eval(&self, z: C64) -> CMat {
        let mut out = CMat::zeros(self.rows, self.cols);
        for (&(p, q), m) in &self.coeffs {
            out += m * (z.powu(p) * z.conj().powu(q));
        }
        out
    }

    /// The zbar-degree-zero coefficients as a series in z.
    pub fn holomorphic_part(&self) -> Vec<CMat> {
        let top = self.coeffs.keys().filter(|(_, q)| *q == 0).map(|(p, _)| *p).max();
        let Some(top) = top else {
            return Vec::new();
        };
        (0..=top)
            .map(|p| self.coeffs.get(&(p, 0)).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols)))
            .collect()
    }
}

/// Polar nodes z0 + r e^{i theta} with s = r^2 at Chebyshev points of
/// [0, R^2] and equally spaced angles. Radial index is the slow one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscNodes {
    pub centre: C64,
    pub radius: f64,
    pub radial: usize,
    pub angular: usize,
}

impl DiscNodes {
    pub fn new(centre: C64, radius: f64, radial: usize, angular: usize) -> Result<Self> {
        if !(radius > 0.0) || radial < 2 || angular < 4 {
            return Err(Error::domain("disc needs radius > 0, at least 2 radii and 4 angles"));
        }
        Ok(DiscNodes {
            centre,
            radius,
            radial,
            angular,
        })
    }

    pub fn standard(centre: C64, radius: f64) -> Self {
        DiscNodes {
            centre,
            radius,
            radial: 20,
            angular: 48,
        }
    }

    pub fn len(&self) -> usize {
        self.radial * self.angular
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Chebyshev variable x in [-1, 1] of radial node j.
    pub fn x(&self, j: usize) -> f64 {
        -((2 * j + 1) as f64 * PI / (2 * self.radial) as f64).cos()
    }

    pub fn r(&self, j: usize) -> f64 {
        (self.radius * self.radius * (self.x(j) + 1.0) / 2.0).sqrt()
    }

    pub fn theta(&self, a: usize) -> f64 {
        2.0 * PI * a as f64 / self.angular as f64
    }

    pub fn point(&self, idx: usize) -> C64 {
        let (j, a) = (idx / self.angular, idx % self.angular);
        self.centre + C64::from_polar(self.r(j), self.theta(a))
    }

    pub fn points(&self) -> Vec<C64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Sampled (1,0) Maurer-Cartan data: alpha_k is the lambda^0 coefficient of
/// F^{-1} F_z and alpha_p its lambda^{-1} coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McData {
    pub n: usize,
    pub nodes: DiscNodes,
    pub alpha_k: Vec<CMat>,
    pub alpha_p: Vec<CMat>,
}

impl McData {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(json_error)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: McData = serde_json::from_str(s).map_err(json_error)?;
        let m = d.n + 4;
        if d.alpha_k.len() != d.nodes.len() || d.alpha_p.len() != d.nodes.len() {
            return Err(Error::SizeMismatch {
                expected: d.nodes.len(),
                found: d.alpha_k.len().min(d.alpha_p.len()),
            });
        }
        if d.alpha_k.iter().chain(&d.alpha_p).any(|x| x.shape() != (m, m)) {
            return Err(Error::Validation("matrix size does not match n".into()));
        }
        Ok(d)
    }

    /// Sample from a closure returning (alpha_k, alpha_p) at a point.
    pub fn from_fn(n: usize, nodes: DiscNodes, f: impl Fn(C64) -> Result<(CMat, CMat)> + Sync) -> Result<Self> {
        let vals = nodes.points().into_par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        let (alpha_k, alpha_p) = vals.into_iter().unzip();
        Ok(McData {
            n,
            nodes,
            alpha_k,
            alpha_p,
        })
    }
}

/// MC data of the DPW frame of `p`, by central differences of step h at
/// each node (each node gets its own lattice, all paths start at the basepoint).
/// Unless set, the Iwasawa degree is the integration degree: the frames of
/// interest are close to polynomial in lambda and the wider default costs
/// several times more per node without changing the result.
pub fn sample_mc_data(p: &Potential, nodes: DiscNodes, h: f64, opts: &IntegrationOptions) -> Result<McData> {
    let mut opts = opts.clone();
    opts.factor.degree = opts.factor.degree.or(Some(opts.degree));
    McData::from_fn(p.n(), nodes, |z| {
        let mut lat = FrameLattice::new(p, z, h, &opts)?;
        let (a1, _) = lat.mc_form(0, 0, 2)?;
        Ok((a1.coeff_or_zero(0), a1.coeff_or_zero(-1)))
    })
}

/// MC data of the closed-form frame of a constant potential, from central
/// differences at lambda = 1 split into blocks.
pub fn homogeneous_mc_data(p: &Potential, nodes: DiscNodes, h: f64) -> Result<McData> {
    McData::from_fn(p.n(), nodes, |z| {
        let a = homogeneous_mc_form(p, z, C64::new(1.0, 0.0), h)?;
        Ok(split_blocks(&a))
    })
}

/// The normalized potential of the closed-form frame of a constant potential:
/// B1 of exp(z A) B exp(-z A), evaluated exactly.
pub fn homogeneous_normalized_b1(p: &Potential, z: C64) -> Result<CMat> {
    let (b, a) = homogeneous_blocks(p)?;
    let w = z - p.basepoint();
    Ok(b1_of(&(matrix_exp(&(&a * w))? * b * matrix_exp(&(&a * -w))?)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscFit {
    /// Series in w = z - centre.
    pub taylor: BivariateTaylor,
    /// Worst relative misfit at the nodes, including the discarded angular modes.
    pub residual: f64,
}

fn chebyshev_to_power(c: &[C64]) -> Vec<C64> {
    // T_{m+1} = 2x T_m - T_{m-1}, tracked as power coefficients in x
    let m = c.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    let mut t_prev = vec![0.0; m];
    let mut t_cur = vec![0.0; m];
    t_prev[0] = 1.0;
    if m > 1 {
        t_cur[1] = 1.0;
    }
    for (k, ck) in c.iter().enumerate() {
        let t = match k {
            0 => &t_prev,
            _ => &t_cur,
        };
        for (o, &tv) in out.iter_mut().zip(t.iter()) {
            *o += ck * tv;
        }
        if k >= 1 {
            let mut next = vec![0.0; m];
            for i in 0..m - 1 {
                next[i + 1] += 2.0 * t_cur[i];
            }
            for i in 0..m {
                next[i] -= t_prev[i];
            }
            t_prev = std::mem::replace(&mut t_cur, next);
        }
    }
    out
}

/// Power coefficients of sum a_q x^q rewritten in s with x = 2 s / R^2 - 1.
fn shift_to_s(a: &[C64], r2: f64) -> Vec<C64> {
    let m = a.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    // x^q = sum_i binom(q, i) (2/R^2)^i s^i (-1)^{q-i}
    for (q, aq) in a.iter().enumerate() {
        let mut binom = 1.0;
        for i in 0..=q {
            let sign = if (q - i) % 2 == 0 { 1.0 } else { -1.0 };
            out[i] += aq * (binom * sign * (2.0 / r2).powi(i as i32));
            binom = binom * (q - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// Least-squares fit of sampled matrices on a disc by the per-mode model
/// f_k(r) = r^{|k|} sum_m c_m T_m(2 r^2 / R^2 - 1), |k| <= modes.
pub fn fit_disc(samples: &[CMat], nodes: &DiscNodes, modes: usize, terms: usize) -> Result<DiscFit> {
    if samples.len() != nodes.len() || samples.is_empty() {
        return Err(Error::SizeMismatch {
            expected: nodes.len(),
            found: samples.len(),
        });
    }
    if 2 * modes + 1 > nodes.angular || terms > nodes.radial {
        return Err(Error::domain("too few nodes for the requested modes and terms"));
    }
    let (rows, cols) = samples[0].shape();
    let ne = rows * cols;
    let (nr, na) = (nodes.radial, nodes.angular);
    let scale = samples.iter().map(sup).fold(0.0, f64::max).max(1e-300);
    // angular DFT per radius and entry: spec[j][k][e]
    let fft = FftPlanner::<f64>::new().plan_fft_forward(na);
    let mut spec = vec![vec![vec![C64::new(0.0, 0.0); ne]; na]; nr];
    let mut buf = vec![C64::new(0.0, 0.0); na];
    for (j, sj) in spec.iter_mut().enumerate() {
        for e in 0..ne {
            let (r, c) = (e % rows, e / rows);
            for (a, b) in buf.iter_mut().enumerate() {
                *b = samples[j * na + a][(r, c)];
            }
            fft.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                sj[k][e] = b / na as f64;
            }
        }
    }
    let mut residual: f64 = 0.0;
    for sj in &spec {
        for k in modes + 1..na - modes {
            for v in &sj[k] {
                residual = residual.max(v.norm() / scale);
            }
        }
    }
    let mut taylor = BivariateTaylor::zeros(rows, cols);
    let r2 = nodes.radius * nodes.radius;
    for k in -(modes as i64)..=(modes as i64) {
        let kk = k.unsigned_abs() as usize;
        let slot = k.rem_euclid(na as i64) as usize;
        let mut a = DMatrix::<f64>::zeros(nr, terms);
        for j in 0..nr {
            let (x, rk) = (nodes.x(j), nodes.r(j).powi(kk as i32));
            let (mut t0, mut t1) = (1.0, x);
            for m in 0..terms {
                a[(j, m)] = rk * if m == 0 { 1.0 } else { t1 };
                if m >= 1 {
                    let t2 = 2.0 * x * t1 - t0;
                    t0 = t1;
                    t1 = t2;
                }
            }
        }
        let pinv = a
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::numeric(format!("radial fit: {e}")))?;
        let ac = a.map(|v| C64::new(v, 0.0));
        let pc = pinv.map(|v| C64::new(v, 0.0));
        let data = DMatrix::<C64>::from_fn(nr, ne, |j, e| spec[j][slot][e]);
        let coef = &pc * &data;
        let misfit = &ac * &coef - &data;
        residual = residual.max(misfit.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale);
        for e in 0..ne {
            let cheb: Vec<C64> = (0..terms).map(|m| coef[(m, e)]).collect();
            let pow_s = shift_to_s(&chebyshev_to_power(&cheb), r2);
            for (q, cq) in pow_s.iter().enumerate() {
                // r^{|k|} e^{ik theta} s^q = z^p zbar^q'
                let (p, qq) = if k >= 0 { (kk + q, q) } else { (q, kk + q) };
                let mut m = CMat::zeros(rows, cols);
                m[(e % rows, e / rows)] = *cq;
                taylor.add_term((p as u32, qq as u32), m)?;
            }
        }
    }
    Ok(DiscFit { taylor, residual })
}

/// F0 with F0' = F0 delta0, F0(0) = I, as a z-series to `degree`.
pub fn f0_series(delta0: &[CMat], degree: usize) -> Vec<CMat> {
    let m = delta0.first().map_or(0, |d| d.nrows());
    let zero = CMat::zeros(m, m);
    let d = |i: usize| delta0.get(i).unwrap_or(&zero);
    let mut f = vec![CMat::identity(m, m)];
    for a in 1..=degree {
        let mut s = CMat::zeros(m, m);
        for b in 0..a {
            s += &f[b] * d(a - 1 - b);
        }
        f.push(s / C64::new(a as f64, 0.0));
    }
    f
}

fn inverse_series(delta0: &[CMat], degree: usize) -> Vec<CMat> {
    // G = F0^{-1}: G' = -delta0 G
    let m = delta0.first().map_or(0, |d| d.nrows());
    let zero = CMat::zeros(m, m);
    let d = |i: usize| delta0.get(i).unwrap_or(&zero);
    let mut g = vec![CMat::identity(m, m)];
    for a in 1..=degree {
        let mut s = CMat::zeros(m, m);
        for b in 0..a {
            s -= d(a - 1 - b) * &g[b];
        }
        g.push(s / C64::new(a as f64, 0.0));
    }
    g
}

fn series_mul(a: &[CMat], b: &[CMat], degree: usize) -> Vec<CMat> {
    let m = a[0].nrows();
    (0..=degree)
        .map(|k| {
            let mut s = CMat::zeros(m, m);
            for i in 0..=k {
                if let (Some(x), Some(y)) = (a.get(i), b.get(k - i)) {
                    s += x * y;
                }
            }
            s
        })
        .collect()
}

fn check_blocks(t: &BivariateTaylor, want_k: bool, what: &str) -> Result<()> {
    let scale = t.coeffs.values().map(sup).fold(0.0, f64::max);
    for m in t.coeffs.values() {
        let (k, p) = split_blocks(m);
        let leak = if want_k { sup(&p) } else { sup(&k) };
        if leak > 1e-8 * scale.max(1.0) {
            return Err(Error::Validation(format!("{what} violates its block structure ({leak:.2e})")));
        }
    }
    Ok(())
}

/// Normalized potential lambda^{-1} F0 delta1 F0^{-1} dz, truncated at z^degree,
/// with basepoint `centre` (the series variable is z - centre).
pub fn wu_normalized_potential(
    alpha_k: &BivariateTaylor,
    alpha_p: &BivariateTaylor,
    degree: usize,
    centre: C64,
) -> Result<Potential> {
    if alpha_k.rows != alpha_k.cols || alpha_k.rows < 5 || (alpha_p.rows, alpha_p.cols) != (alpha_k.rows, alpha_k.cols) {
        return Err(Error::SizeMismatch {
            expected: alpha_k.rows,
            found: alpha_p.rows,
        });
    }
    check_blocks(alpha_k, true, "alpha_k")?;
    check_blocks(alpha_p, false, "alpha_p")?;
    let m = alpha_k.rows;
    let mut d0 = alpha_k.holomorphic_part();
    let mut d1 = alpha_p.holomorphic_part();
    d0.resize(degree + 1, CMat::zeros(m, m));
    d1.resize(degree + 1, CMat::zeros(m, m));
    let f0 = f0_series(&d0, degree);
    let g0 = inverse_series(&d0, degree);
    let eta = series_mul(&series_mul(&f0, &d1, degree), &g0, degree);
    let n = m - 4;
    let blocks: Vec<CMat> = eta.iter().map(b1_of).collect();
    let shift = Poly::new(vec![-centre, C64::new(1.0, 0.0)]);
    let mut b1 = vec![vec![RationalExpr::zero(); n]; 4];
    for (i, row) in b1.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            // Horner in (z - centre)
            let mut acc = Poly::zero();
            for b in blocks.iter().rev() {
                acc = &(&acc * &shift) + &Poly::constant(b[(i, j)]);
            }
            *e = RationalExpr::poly(acc);
        }
    }
    Potential::normalized_from_b1(&b1, centre)
}

/// Fit both components of sampled MC data and apply the formula.
pub fn wu_from_samples(data: &McData, modes: usize, terms: usize, degree: usize) -> Result<(Potential, f64)> {
    let fk = fit_disc(&data.alpha_k, &data.nodes, modes, terms)?;
    let fp = fit_disc(&data.alpha_p, &data.nodes, modes, terms)?;
    let p = wu_normalized_potential(&fk.taylor, &fp.taylor, degree, data.nodes.centre)?;
    Ok((p, fk.residual.max(fp.residual)))
}

/// max over the points of |B1_a(z) - B1_b(z)|.
pub fn b1_distance(a: &Potential, b: &Potential, points: &[C64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &z in points {
        worst = worst.max(sup(&(a.b1(z)? - b.b1(z)?)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogeneous::{cylinder_potential, ejiri_potential};
    use crate::linalg::{c, offdiag_sup};
    use crate::potentials::{parse_potential, validate_normalized};

    const S6: &str = "potential { n = 4; kind = normalized; basepoint = (0, 0); }
coeff[-1] { B1 = [[iz, -z, -i/2, 1/2], [-iz, z, -i/2, 1/2], [-1, -i, -z/2, -iz/2], [i, -1, -iz/2, z/2]]; }";

    fn scalar(v: C64) -> CMat {
        CMat::from_element(1, 1, v)
    }

    #[test]
    fn holomorphic_part_examples() {
        let t = BivariateTaylor::from_terms(1, 1, [((1, 1), scalar(c(1.0, 0.0)))]).unwrap();
        assert!(t.holomorphic_part().is_empty());
        let t = BivariateTaylor::from_terms(1, 1, [((2, 0), scalar(c(1.0, 0.0))), ((1, 2), scalar(c(3.0, 0.0)))]).unwrap();
        let h = t.holomorphic_part();
        assert_eq!(h.len(), 3);
        assert_eq!(h[2][(0, 0)], c(1.0, 0.0));
        assert_eq!(h[0][(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn fit_recovers_polynomial() {
        let nodes = DiscNodes::standard(c(0.0, 0.0), 0.5);
        let f = |z: C64| {
            let zb = z.conj();
            scalar(c(1.0, 2.0) + z * z * 0.5 - z * zb * zb * 3.0 + zb.powu(4) + (z * 2.0).exp())
        };
        let samples: Vec<CMat> = nodes.points().into_iter().map(f).collect();
        let fit = fit_disc(&samples, &nodes, DEFAULT_MODES, DEFAULT_TERMS).unwrap();
        assert!(fit.residual < 1e-8, "{}", fit.residual);
        let h = fit.taylor.holomorphic_part();
        // 1 + 2i + e^{2z} + z^2/2
        let mut fact = 1.0;
        for (p, hp) in h.iter().enumerate().take(8) {
            if p > 0 {
                fact *= p as f64;
            }
            let mut want = c(2f64.powi(p as i32) / fact, 0.0);
            if p == 0 {
                want += c(1.0, 2.0);
            }
            if p == 2 {
                want += c(0.5, 0.0);
            }
            assert!((hp[(0, 0)] - want).norm() < 1e-7, "{p}: {}", hp[(0, 0)]);
        }
        let z = c(0.2, -0.3);
        assert!(sup(&(fit.taylor.eval(z) - f(z))) < 1e-7);
    }

    #[test]
    fn zero_alpha_k_keeps_delta1() {
        let p = cylinder_potential(0.6, 0.8).unwrap();
        let (b, _) = homogeneous_blocks(&p).unwrap();
        let ak = BivariateTaylor::zeros(6, 6);
        let ap = BivariateTaylor::from_terms(6, 6, [((0, 0), b.clone())]).unwrap();
        let out = wu_normalized_potential(&ak, &ap, 6, c(0.0, 0.0)).unwrap();
        for z in [c(0.0, 0.0), c(0.3, 0.4)] {
            assert!(sup(&(out.b1(z).unwrap() - b1_of(&b))) < 1e-15);
        }
    }

    #[test]
    fn constant_cylinder_data() {
        let p = cylinder_potential(0.6, 0.8).unwrap();
        let (b, a) = homogeneous_blocks(&p).unwrap();
        let ak = BivariateTaylor::from_terms(6, 6, [((0, 0), a.clone())]).unwrap();
        let ap = BivariateTaylor::from_terms(6, 6, [((0, 0), b.clone())]).unwrap();
        let out = wu_normalized_potential(&ak, &ap, 20, c(0.0, 0.0)).unwrap();
        assert!(sup(&(out.b1(c(0.0, 0.0)).unwrap() - b1_of(&b))) < 1e-15);
        let z = c(0.3, -0.2);
        let want = matrix_exp(&(&a * z)).unwrap() * &b * matrix_exp(&(&a * -z)).unwrap();
        assert!(sup(&(out.b1(z).unwrap() - b1_of(&want))) < 1e-12);
        assert!(validate_normalized(&out).null_residual < 1e-10);
        let f0 = f0_series(&[a], 20);
        assert!(f0.iter().all(|m| offdiag_sup(m) == 0.0));
    }

    #[test]
    fn rejects_wrong_blocks() {
        let p = cylinder_potential(0.6, 0.8).unwrap();
        let (b, a) = homogeneous_blocks(&p).unwrap();
        let ak = BivariateTaylor::from_terms(6, 6, [((0, 0), b)]).unwrap();
        let ap = BivariateTaylor::from_terms(6, 6, [((0, 0), a)]).unwrap();
        assert!(wu_normalized_potential(&ak, &ap, 4, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn s6_roundtrip() {
        let p = parse_potential(S6).unwrap();
        let nodes = DiscNodes::standard(c(0.0, 0.0), 0.5);
        let data = sample_mc_data(&p, nodes, 1e-3, &IntegrationOptions::default()).unwrap();
        let (out, residual) = wu_from_samples(&data, DEFAULT_MODES, DEFAULT_TERMS, DEFAULT_MODES).unwrap();
        assert!(residual < 1e-8, "fit residual {residual}");
        let pts: Vec<C64> = (0..12).map(|k| C64::from_polar(0.4 * (k % 3) as f64 / 2.0, k as f64)).collect();
        let d = b1_distance(&out, &p, &pts).unwrap();
        assert!(d < 1e-6, "{d}");
        assert!(validate_normalized(&out).parity_residual == 0.0);
    }

    #[test]
    fn homogeneous_roundtrip() {
        for p in [cylinder_potential(0.6, 0.8).unwrap(), ejiri_potential(1.0).unwrap()] {
            let nodes = DiscNodes::standard(c(0.0, 0.0), 0.5);
            let data = homogeneous_mc_data(&p, nodes, 1e-2).unwrap();
            let (out, residual) = wu_from_samples(&data, DEFAULT_MODES, DEFAULT_TERMS, DEFAULT_MODES).unwrap();
            assert!(residual < 1e-8, "{residual}");
            for k in 0..12 {
                let z = C64::from_polar(0.2 * (k % 3) as f64, k as f64);
                let d = sup(&(out.b1(z).unwrap() - homogeneous_normalized_b1(&p, z).unwrap()));
                assert!(d < 1e-6, "{d}");
            }
        }
    }
}
