//! Closed-form surfaces used as oracles: the S^6 two-sphere family, the
//! homogeneous cylinders in S^4 and Ejiri's tori in S^5.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec, C64};

fn unit_lambda(lambda: C64) -> Result<()> {
    if (lambda.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("lambda must lie on the unit circle, |lambda| = {}", lambda.norm())));
    }
    Ok(())
}

/// The associated family y_lambda of Willmore two-spheres in S^6 carried by
/// the degree-one polynomial potential `examples/s6.pot`.
pub fn example_s6(z: C64, lambda: C64) -> RVec {
    let r2 = z.norm_sqr();
    let (r4, r6, r8) = (r2 * r2, r2 * r2 * r2, r2 * r2 * r2 * r2);
    let den = 1.0 + r2 + 1.25 * r4 + 4.0 * r6 / 9.0 + r8 / 36.0;
    let li = lambda.conj() / lambda.norm_sqr();
    let zb = z.conj();
    let i = C64::new(0.0, 1.0);
    let w2 = li * z * z;
    let w1 = li * z;
    // each entry is real; the imaginary part cancels by construction
    let e = [
        C64::new(1.0 - r2 - 0.75 * r4 + 4.0 * r6 / 9.0 - r8 / 36.0, 0.0),
        -i * (z - zb) * (1.0 + r6 / 9.0),
        (z + zb) * (1.0 + r6 / 9.0),
        -i * (w2 - w2.conj()) * (1.0 - r4 / 12.0),
        (w2 + w2.conj()) * (1.0 - r4 / 12.0),
        -i * (r2 / 2.0) * (w1 - w1.conj()) * (1.0 + 4.0 * r2 / 3.0),
        (r2 / 2.0) * (w1 + w1.conj()) * (1.0 + 4.0 * r2 / 3.0),
    ];
    RVec::from_iterator(7, e.iter().map(|v| v.re / den))
}

/// Rotation with y_lambda = D_lambda y_1 for [`example_s6`].
pub fn rotation_d(lambda: C64) -> Result<RMat> {
    unit_lambda(lambda)?;
    let (c, s) = (lambda.re, lambda.im);
    let mut d = RMat::identity(7, 7);
    for k in [3, 5] {
        d[(k, k)] = c;
        d[(k, k + 1)] = -s;
        d[(k + 1, k)] = s;
        d[(k + 1, k + 1)] = c;
    }
    Ok(d)
}

fn check_cylinder(a: f64, b: f64) -> Result<()> {
    if (a * a + b * b - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("cylinder parameters need a^2 + b^2 = 1, got {}", a * a + b * b)));
    }
    Ok(())
}

/// Light-cone lift Y(u, v) of the homogeneous cylinder in S^4.
pub fn cylinder_lift(u: f64, v: f64, a: f64, b: f64) -> RVec {
    let (cu, su) = (u.cos(), u.sin());
    let (cb, sb) = ((b * v).cos(), (b * v).sin());
    RVec::from_vec(vec![(a * v).cosh(), (a * v).sinh(), cu * cb, cu * sb, su * cb, su * sb])
}

/// The cylinder as a point of S^4 (the lift divided by its time component).
pub fn cylinder_immersion(u: f64, v: f64, a: f64, b: f64) -> Result<RVec> {
    check_cylinder(a, b)?;
    let y = cylinder_lift(u, v, a, b);
    Ok(y.rows(1, 5) / y[0])
}

/// Adapted frame ((Y+N)/sqrt2, (-Y+N)/sqrt2, Y_u, Y_v, psi_1, psi_2) of the
/// cylinder; its Maurer-Cartan form is the constant cylinder potential.
pub fn cylinder_frame(u: f64, v: f64, a: f64, b: f64) -> Result<RMat> {
    check_cylinder(a, b)?;
    let (ch, sh) = ((a * v).cosh(), (a * v).sinh());
    let (cu, su) = (u.cos(), u.sin());
    let (cb, sb) = ((b * v).cos(), (b * v).sin());
    let y = cylinder_lift(u, v, a, b);
    let n = RVec::from_vec(vec![ch, sh, -cu * cb, -cu * sb, -su * cb, -su * sb]) / 2.0;
    let yu = RVec::from_vec(vec![0.0, 0.0, -su * cb, -su * sb, cu * cb, cu * sb]);
    let q = RVec::from_vec(vec![0.0, 0.0, -cu * sb, cu * cb, -su * sb, su * cb]);
    let hyp = RVec::from_vec(vec![sh, ch, 0.0, 0.0, 0.0, 0.0]);
    let yv = &hyp * a + &q * b;
    let w = RVec::from_vec(vec![0.0, 0.0, -su * sb, su * cb, cu * sb, -cu * cb]);
    let psi1 = &q * a - &hyp * b;
    let psi2 = -w;
    let cols = [(&y + &n) / SQRT_2, (&n - &y) / SQRT_2, yu, yv, psi1, psi2];
    Ok(RMat::from_columns(&cols))
}

/// Ejiri's torus family in S^5, scaled to the unit sphere.
pub fn ejiri_immersion(u: f64, v: f64, b: f64) -> Result<RVec> {
    if !(b > 0.0) {
        return Err(Error::domain("ejiri parameter b must be positive"));
    }
    let t = v / 3f64.sqrt();
    let tb = t / b;
    let (cu, su) = (u.cos(), u.sin());
    let y = RVec::from_vec(vec![
        cu * t.cos(),
        cu * t.sin(),
        su * t.cos(),
        su * t.sin(),
        SQRT_2 * b * tb.cos(),
        SQRT_2 * b * tb.sin(),
    ]);
    Ok(y / (1.0 + 2.0 * b * b).sqrt())
}

/// Projective action of a (d+1)x(d+1) matrix on points of S^{d-1} through
/// their light-cone lifts (1, p).
pub fn projective_apply(t: &RMat, p: &RVec) -> Result<RVec> {
    let d = p.len();
    let mut x = RVec::zeros(d + 1);
    x[0] = 1.0;
    x.rows_mut(1, d).copy_from(p);
    let w = t * x;
    if w[0].abs() < 1e-12 {
        return Err(Error::DegenerateLift(w[0]));
    }
    Ok(w.rows(1, d) / w[0])
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub transform: RMat,
    /// The three smallest singular values of the fitting system; the last
    /// one measures how well a single transform explains the data.
    pub singular_values: [f64; 3],
}

/// Linear map T with T(1, p_i) parallel to (1, q_i) for all i, by least
/// squares on the 2x2 minors. Used to compare surfaces that agree up to a
/// conformal transformation of the sphere.
pub fn lorentz_alignment(p: &[RVec], q: &[RVec]) -> Result<Alignment> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::domain("alignment needs equally many points on both sides"));
    }
    let d = p[0].len() + 1;
    let lift = |v: &RVec| {
        let mut x = RVec::zeros(d);
        x[0] = 1.0;
        x.rows_mut(1, d - 1).copy_from(v);
        x
    };
    let rows_per = d * (d - 1) / 2;
    let mut sys = RMat::zeros(p.len() * rows_per, d * d);
    let mut r = 0;
    for (pi, qi) in p.iter().zip(q) {
        let (x, z) = (lift(pi), lift(qi));
        for a in 0..d {
            for b in a + 1..d {
                // (T x)_a z_b - (T x)_b z_a = 0
                for k in 0..d {
                    sys[(r, a * d + k)] += x[k] * z[b];
                    sys[(r, b * d + k)] -= x[k] * z[a];
                }
                r += 1;
            }
        }
    }
    let svd = sys.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::numeric("svd failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let last = *order.last().unwrap();
    let k = sv.len();
    let singular_values = [sv[order[k.saturating_sub(3)]], sv[order[k.saturating_sub(2)]], sv[last]];
    let t = RMat::from_row_slice(d, d, vt.row(last).transpose().as_slice());
    Ok(Alignment {
        transform: t,
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s6_values() {
        let y = example_s6(c(0.0, 0.0), c(1.0, 0.0));
        assert_eq!(y.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let y = example_s6(c(1.0, 0.0), c(1.0, 0.0));
        assert!((y[0] + 6.0 / 67.0).abs() < 1e-15);
        assert!(y[1].abs() < 1e-15);
        assert!((y[2] - 40.0 / 67.0).abs() < 1e-15);
        // (z^2 + zbar^2)(1 - 1/12) = 11/6 over 67/18
        assert!((y[4] - 33.0 / 67.0).abs() < 1e-15);
    }

    #[test]
    fn s6_on_sphere_and_rotates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let lam = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            let y = example_s6(z, lam);
            assert!((y.norm() - 1.0).abs() < 1e-12);
            let d = rotation_d(lam).unwrap();
            assert!((y - &d * example_s6(z, c(1.0, 0.0))).amax() < 1e-12);
            assert!((d.transpose() * &d - RMat::identity(7, 7)).amax() < 1e-14);
        }
        assert_eq!(rotation_d(c(1.0, 0.0)).unwrap(), RMat::identity(7, 7));
        assert!(rotation_d(c(2.0, 0.0)).is_err());
    }

    #[test]
    fn cylinder_and_ejiri() {
        let p = cylinder_immersion(0.0, 0.0, 0.6, 0.8).unwrap();
        assert!((p - RVec::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        let e = ejiri_immersion(0.0, 0.0, 1.0).unwrap();
        let want = RVec::from_vec(vec![1.0, 0.0, 0.0, 0.0, SQRT_2, 0.0]) / 3f64.sqrt();
        assert!((e - want).amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (u, v) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            assert!((cylinder_immersion(u, v, 0.6, 0.8).unwrap().norm() - 1.0).abs() < 1e-12);
            assert!((ejiri_immersion(u, v, 0.7).unwrap().norm() - 1.0).abs() < 1e-12);
        }
        assert!(cylinder_immersion(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(ejiri_immersion(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn cylinder_frame_is_lorentz() {
        let f = cylinder_frame(0.3, 0.7, 0.6, 0.8).unwrap();
        let j = RMat::from_diagonal(&RVec::from_vec(vec![-1.0, 1.0, 1.0, 1.0, 1.0, 1.0]));
        assert!((f.transpose() * &j * &f - &j).amax() < 1e-12);
        assert!((f.determinant().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_recovers_boost() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (ch, sh) = (0.4f64.cosh(), 0.4f64.sinh());
        let mut t = RMat::identity(4, 4);
        t[(0, 0)] = ch;
        t[(0, 1)] = sh;
        t[(1, 0)] = sh;
        t[(1, 1)] = ch;
        let ps: Vec<RVec> = (0..12)
            .map(|_| {
                let v = RVec::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                v.normalize()
            })
            .collect();
        let qs: Vec<RVec> = ps.iter().map(|p| projective_apply(&t, p).unwrap()).collect();
        let al = lorentz_alignment(&ps, &qs).unwrap();
        assert!(al.singular_values[2] < 1e-12);
        for (p, q) in ps.iter().zip(&qs) {
            assert!((projective_apply(&al.transform, p).unwrap() - q).amax() < 1e-10);
        }
    }
}
