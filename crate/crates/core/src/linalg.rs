//! Dense complex matrices, the Minkowski form on R^{n+4}_1, membership tests
//! for so(1,n+3) and SO(1,n+3), the Cartan splitting and the matrix exponential.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<C64>;
pub type RVec = DVector<f64>;

pub const DEFAULT_TOL: f64 = 1e-10;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The form diag(-1, 1, ..., 1) of size n + 4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormMatrix {
    n: usize,
}

impl FormMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::domain("codimension n must be at least 1"));
        }
        Ok(FormMatrix { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim_total(&self) -> usize {
        self.n + 4
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![1.0; self.dim_total()];
        d[0] = -1.0;
        d
    }

    pub fn to_rmat(&self) -> RMat {
        RMat::from_diagonal(&RVec::from_vec(self.diagonal()))
    }

    pub fn to_cmat(&self) -> CMat {
        to_complex(&self.to_rmat())
    }

    /// Bilinear (not Hermitian) pairing x^t I y.
    pub fn pair(&self, x: &[C64], y: &[C64]) -> C64 {
        minkowski(x, y)
    }

    fn check(&self, m: &CMat) -> Result<()> {
        let d = self.dim_total();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::SizeMismatch {
                expected: d,
                found: m.nrows().max(m.ncols()),
            });
        }
        Ok(())
    }
}

pub fn minkowski_form(n: usize) -> Result<FormMatrix> {
    FormMatrix::new(n)
}

/// Bilinear Minkowski pairing with signature (-, +, ..., +).
pub fn minkowski(x: &[C64], y: &[C64]) -> C64 {
    let mut s = -x[0] * y[0];
    for k in 1..x.len() {
        s += x[k] * y[k];
    }
    s
}

pub fn minkowski_real(x: &[f64], y: &[f64]) -> f64 {
    let mut s = -x[0] * y[0];
    for k in 1..x.len() {
        s += x[k] * y[k];
    }
    s
}

/// Hermitian pairing <x, conj(y)>.
pub fn minkowski_herm(x: &[C64], y: &[C64]) -> C64 {
    let mut s = -x[0] * y[0].conj();
    for k in 1..x.len() {
        s += x[k] * y[k].conj();
    }
    s
}

/// diag(-1, 1, 1, 1)
pub fn j1() -> CMat {
    let mut m = CMat::identity(4, 4);
    m[(0, 0)] = c(-1.0, 0.0);
    m
}

/// X^t I + I X scaled by the form, as a sup norm.
pub fn algebra_residual(x: &CMat) -> f64 {
    let m = x.nrows();
    let mut r: f64 = 0.0;
    for i in 0..m {
        let si = if i == 0 { -1.0 } else { 1.0 };
        for j in 0..m {
            let sj = if j == 0 { -1.0 } else { 1.0 };
            // (X^t I)_{ij} = X_{ji} s_j ; (I X)_{ij} = s_i X_{ij}
            let v = x[(j, i)] * sj + x[(i, j)] * si;
            r = r.max(v.norm());
        }
    }
    r
}

pub fn is_in_algebra(x: &CMat, form: &FormMatrix, tol: f64) -> Result<bool> {
    form.check(x)?;
    Ok(algebra_residual(x) <= tol)
}

/// ||M^t I M - I||
pub fn group_residual(m: &CMat) -> f64 {
    let d = m.nrows();
    let mut r: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut v = C64::new(0.0, 0.0);
            for k in 0..d {
                let sk = if k == 0 { -1.0 } else { 1.0 };
                v += m[(k, i)] * m[(k, j)] * sk;
            }
            let target = if i == j {
                if i == 0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                0.0
            };
            r = r.max((v - target).norm());
        }
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMembership {
    ComplexGroup,
    RealPlus,
    RealOther,
    None,
}

pub fn is_in_group(m: &CMat, form: &FormMatrix, tol: f64) -> Result<GroupMembership> {
    form.check(m)?;
    if group_residual(m) > tol {
        return Ok(GroupMembership::None);
    }
    let det = m.determinant();
    if (det - 1.0).norm() > tol.max(1e-12) * 10.0 {
        return Ok(GroupMembership::None);
    }
    if imag_sup(m) > tol {
        return Ok(GroupMembership::ComplexGroup);
    }
    if m[(0, 0)].re >= 1.0 - tol {
        Ok(GroupMembership::RealPlus)
    } else {
        Ok(GroupMembership::RealOther)
    }
}

#[derive(Clone, Debug)]
pub struct AlgebraElement {
    pub matrix: CMat,
    pub tolerance: f64,
}

impl AlgebraElement {
    pub fn new(matrix: CMat, tolerance: f64) -> Result<Self> {
        let r = algebra_residual(&matrix);
        if r > tolerance {
            return Err(Error::domain(format!(
                "matrix is not in so(1,n+3): residual {r:.3e}"
            )));
        }
        Ok(AlgebraElement { matrix, tolerance })
    }
}

#[derive(Clone, Debug)]
pub struct CartanSplit {
    pub k_part: CMat,
    pub p_part: CMat,
}

/// Split X into its block-diagonal (4x4 + nxn) and block off-diagonal parts.
pub fn cartan_split(x: &AlgebraElement) -> Result<CartanSplit> {
    if x.matrix.nrows() < 5 {
        return Err(Error::domain("matrix must be at least 5x5"));
    }
    let (k_part, p_part) = split_blocks(&x.matrix);
    Ok(CartanSplit { k_part, p_part })
}

pub fn split_blocks(x: &CMat) -> (CMat, CMat) {
    let m = x.nrows();
    let mut k = CMat::zeros(m, m);
    let mut p = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if (i < 4) == (j < 4) {
                k[(i, j)] = x[(i, j)];
            } else {
                p[(i, j)] = x[(i, j)];
            }
        }
    }
    (k, p)
}

/// Largest entry of the off-diagonal (4 x n, n x 4) blocks.
pub fn offdiag_sup(x: &CMat) -> f64 {
    split_blocks(x).1.iter().fold(0.0, |a, v| a.max(v.norm()))
}

/// Largest entry of the diagonal (4 x 4, n x n) blocks.
pub fn diag_block_sup(x: &CMat) -> f64 {
    split_blocks(x).0.iter().fold(0.0, |a, v| a.max(v.norm()))
}

pub fn sup(x: &CMat) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.norm()))
}

pub fn rsup(x: &RMat) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn imag_sup(x: &CMat) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.im.abs()))
}

pub fn to_complex(x: &RMat) -> CMat {
    x.map(|v| C64::new(v, 0.0))
}

pub fn real_part(x: &CMat) -> RMat {
    x.map(|v| v.re)
}

pub fn conj(x: &CMat) -> CMat {
    x.map(|v| v.conj())
}

pub fn inverse(x: &CMat) -> Result<CMat> {
    x.clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric("singular matrix"))
}

pub fn one_norm(x: &CMat) -> f64 {
    (0..x.ncols())
        .map(|j| x.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring around a [13/13] Pade core.
/// Exactly nilpotent inputs with X^3 = 0 take the terminating series.
pub fn matrix_exp(x: &CMat) -> Result<CMat> {
    let m = x.nrows();
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::numeric("non-finite matrix entry"));
    }
    let id = CMat::identity(m, m);
    let x2 = x * x;
    let x3 = &x2 * x;
    if x3.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return Ok(&id + x + x2 * C64::new(0.5, 0.0));
    }
    let norm = one_norm(x);
    if norm > 1e6 {
        return Err(Error::numeric(format!(
            "matrix exponential overflow risk (norm {norm:.3e})"
        )));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = C64::new(2f64.powi(-s), 0.0);
    let a = x * scale;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = &a * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let lu = q.lu();
    let mut r = lu
        .solve(&p)
        .ok_or_else(|| Error::numeric("Pade denominator is singular"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::numeric("matrix exponential overflow"));
    }
    Ok(r)
}

/// The twist D = diag(-I_4, I_n).
pub fn twist_matrix(n: usize) -> CMat {
    let mut d = CMat::identity(n + 4, n + 4);
    for k in 0..4 {
        d[(k, k)] = C64::new(-1.0, 0.0);
    }
    d
}

/// Second-cell representative diag(-1,1,1,1,-1,1,...,1).
pub fn delta0(n: usize) -> CMat {
    let mut d = CMat::identity(n + 4, n + 4);
    d[(0, 0)] = C64::new(-1.0, 0.0);
    d[(4, 4)] = C64::new(-1.0, 0.0);
    d
}

/// Assemble the p-block matrix [[0, B], [-B^t J1, 0]] from a 4 x n block.
pub fn p_from_b1(b1: &CMat) -> CMat {
    let n = b1.ncols();
    let mut x = CMat::zeros(n + 4, n + 4);
    for i in 0..4 {
        let si = if i == 0 { -1.0 } else { 1.0 };
        for j in 0..n {
            x[(i, 4 + j)] = b1[(i, j)];
            x[(4 + j, i)] = -b1[(i, j)] * si;
        }
    }
    x
}

pub fn b1_of(x: &CMat) -> CMat {
    let n = x.nrows() - 4;
    x.view((0, 4), (4, n)).into_owned()
}

/// ||B^t J1 B||
pub fn null_residual(b1: &CMat) -> f64 {
    let prod = b1.transpose() * j1() * b1;
    sup(&prod)
}

/// Random element of so(1, n+3, C) with sup norm `scale`, for seeded test ensembles.
pub fn random_algebra(n: usize, scale: f64, rng: &mut rand_chacha::ChaCha8Rng) -> CMat {
    use rand::Rng;
    let m = n + 4;
    let mut a = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let form = FormMatrix::new(n).unwrap().to_cmat();
    // X = A - I A^t I lies in the algebra
    let x = &a - &form * a.transpose() * &form;
    let nrm = sup(&x);
    x * C64::new(scale / nrm, 0.0)
}
