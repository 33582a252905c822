//! Polynomials and rational functions of one complex variable.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Coefficients in ascending order; trailing zeros are trimmed.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<C64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.last() == Some(&ZERO) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Poly::new(vec![c])
    }

    pub fn z() -> Self {
        Poly::new(vec![ZERO, ONE])
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with -1 for the zero polynomial.
    pub fn degree(&self) -> isize {
        self.coeffs.len() as isize - 1
    }

    pub fn as_constant(&self) -> Option<C64> {
        match self.coeffs.len() {
            0 => Some(ZERO),
            1 => Some(self.coeffs[0]),
            _ => None,
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: C64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn conj_coeffs(&self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Roots by Durand-Kerner iteration.
    pub fn roots(&self) -> Vec<C64> {
        let d = self.degree();
        if d < 1 {
            return Vec::new();
        }
        let d = d as usize;
        let lead = self.coeffs[d];
        let monic: Vec<C64> = self.coeffs.iter().map(|&c| c / lead).collect();
        let eval = |z: C64| monic.iter().rev().fold(ZERO, |acc, &c| acc * z + c);
        let radius = 1.0 + monic[..d].iter().fold(0.0f64, |a, c| a.max(c.norm()));
        let seed = C64::new(0.4, 0.9);
        let mut roots: Vec<C64> = (0..d).map(|k| seed.powi(k as i32) * radius).collect();
        for _ in 0..500 {
            let mut delta: f64 = 0.0;
            for i in 0..d {
                let mut den = ONE;
                for j in 0..d {
                    if i != j {
                        den *= roots[i] - roots[j];
                    }
                }
                if den.norm() == 0.0 {
                    den = C64::new(1e-14, 0.0);
                }
                let step = eval(roots[i]) / den;
                roots[i] -= step;
                delta = delta.max(step.norm());
            }
            if delta < 1e-15 * radius {
                break;
            }
        }
        roots
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(ZERO) + o.coeffs.get(k).copied().unwrap_or(ZERO)
                })
                .collect(),
        )
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| -c).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &(-o)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![ZERO; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

/// numerator / denominator, with a constant denominator folded into the
/// numerator so that polynomials are stored as p / 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalExpr {
    num: Poly,
    den: Poly,
}

impl RationalExpr {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::domain("division by the zero polynomial"));
        }
        Ok(Self::normalized(num, den))
    }

    fn normalized(num: Poly, den: Poly) -> Self {
        if num.is_zero() {
            return Self::zero();
        }
        if let Some(c) = den.as_constant() {
            return RationalExpr {
                num: num.scale(ONE / c),
                den: Poly::constant(ONE),
            };
        }
        // monic denominator keeps the representation canonical up to common factors
        let lead = *den.coeffs().last().unwrap();
        RationalExpr {
            num: num.scale(ONE / lead),
            den: den.scale(ONE / lead),
        }
    }

    pub fn zero() -> Self {
        RationalExpr {
            num: Poly::zero(),
            den: Poly::constant(ONE),
        }
    }

    pub fn constant(c: C64) -> Self {
        RationalExpr {
            num: Poly::constant(c),
            den: Poly::constant(ONE),
        }
    }

    pub fn real(c: f64) -> Self {
        Self::constant(C64::new(c, 0.0))
    }

    pub fn z() -> Self {
        Self::poly(Poly::z())
    }

    pub fn poly(p: Poly) -> Self {
        RationalExpr {
            num: p,
            den: Poly::constant(ONE),
        }
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.degree() == 0
    }

    pub fn as_constant(&self) -> Option<C64> {
        if self.is_polynomial() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        let d = self.den.eval(z);
        let n = self.num.eval(z);
        if d.norm() <= 1e-14 * self.den.max_abs_coeff().max(1.0) {
            return Err(Error::Pole { z });
        }
        Ok(n / d)
    }

    pub fn derivative(&self) -> RationalExpr {
        // (n' d - n d') / d^2
        let top = &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative());
        let bottom = &self.den * &self.den;
        Self::normalized(top, bottom)
    }

    pub fn scale(&self, s: C64) -> RationalExpr {
        Self::normalized(self.num.scale(s), self.den.clone())
    }

    pub fn powi(&self, e: i32) -> Result<RationalExpr> {
        if e < 0 {
            if self.is_zero() {
                return Err(Error::domain("division by the zero polynomial"));
            }
            let inv = RationalExpr::new(self.den.clone(), self.num.clone())?;
            return inv.powi(-e);
        }
        let mut out = RationalExpr::real(1.0);
        for _ in 0..e {
            out = &out * self;
        }
        Ok(out)
    }

    pub fn div(&self, o: &RationalExpr) -> Result<RationalExpr> {
        if o.is_zero() {
            return Err(Error::domain("division by the zero polynomial"));
        }
        RationalExpr::new(&self.num * &o.den, &self.den * &o.num)
    }

    pub fn poles(&self) -> Vec<C64> {
        self.den.roots()
    }
}

impl Add for &RationalExpr {
    type Output = RationalExpr;
    fn add(self, o: &RationalExpr) -> RationalExpr {
        if self.den == o.den {
            return RationalExpr::normalized(&self.num + &o.num, self.den.clone());
        }
        RationalExpr::normalized(
            &(&self.num * &o.den) + &(&o.num * &self.den),
            &self.den * &o.den,
        )
    }
}

impl Sub for &RationalExpr {
    type Output = RationalExpr;
    fn sub(self, o: &RationalExpr) -> RationalExpr {
        self + &(-o)
    }
}

impl Neg for &RationalExpr {
    type Output = RationalExpr;
    fn neg(self) -> RationalExpr {
        RationalExpr {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

impl Mul for &RationalExpr {
    type Output = RationalExpr;
    fn mul(self, o: &RationalExpr) -> RationalExpr {
        RationalExpr::normalized(&self.num * &o.num, &self.den * &o.den)
    }
}

fn write_complex(f: &mut fmt::Formatter<'_>, c: C64) -> fmt::Result {
    match (c.re == 0.0, c.im == 0.0) {
        (_, true) => write!(f, "{}", fmt_real(c.re)),
        (true, false) => write!(f, "{}*i", fmt_real(c.im)),
        _ => write!(f, "({} + {}*i)", fmt_real(c.re), fmt_real(c.im)),
    }
}

fn fmt_real(x: f64) -> String {
    // shortest round-trip digits; negative values get parentheses to keep the grammar simple
    if x < 0.0 {
        format!("(-{})", -x)
    } else {
        format!("{x}")
    }
}

fn write_poly(f: &mut fmt::Formatter<'_>, p: &Poly) -> fmt::Result {
    if p.is_zero() {
        return write!(f, "0");
    }
    let mut first = true;
    for (k, &c) in p.coeffs().iter().enumerate() {
        if c == ZERO {
            continue;
        }
        if !first {
            write!(f, " + ")?;
        }
        first = false;
        write_complex(f, c)?;
        match k {
            0 => {}
            1 => write!(f, "*z")?,
            _ => write!(f, "*z^{k}")?,
        }
    }
    Ok(())
}

/// Text in the potential-file expression grammar; parses back exactly.
impl fmt::Display for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_polynomial() {
            write_poly(f, &self.num)
        } else {
            write!(f, "(")?;
            write_poly(f, &self.num)?;
            write!(f, ")/(")?;
            write_poly(f, &self.den)?;
            write!(f, ")")
        }
    }
}
