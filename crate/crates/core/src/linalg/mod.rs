//! Small dense complex matrix primitives.
//!
//! Everything here works on [`CMatrix`] (a dynamically sized nalgebra matrix of
//! `Complex<f64>`). The block dimension `m` of the CMV machinery is small, so
//! these routines favour robustness over speed. The one exception is
//! [`unitary_eig`], which handles full truncations and delegates to faer.

mod banded;

pub use banded::{BandedLu, BandedMatrix};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CmvError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Shorthand for a complex number.
#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub unitary: f64,
    pub alg: f64,
    pub eig: f64,
    pub psd: f64,
    pub mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            unitary: 1e-10,
            alg: 1e-12,
            eig: 1e-9,
            psd: 1e-10,
            mass: 1e-6,
        }
    }
}

pub fn identity(m: usize) -> CMatrix {
    CMatrix::identity(m, m)
}

pub fn zeros(m: usize) -> CMatrix {
    CMatrix::zeros(m, m)
}

/// `(A + A*)/2`.
pub fn re_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// `(A - A*)/(2i)`.
pub fn im_part(a: &CMatrix) -> CMatrix {
    (a - a.adjoint()) * c(0.0, -0.5)
}

pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    operator_norm(&(a - a.adjoint()))
}

/// Deviation `‖U*U − I‖` from unitarity.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    operator_norm(&(u.adjoint() * u - identity(u.nrows())))
}

/// Largest singular value.
pub fn operator_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].norm();
    }
    a.singular_values().max()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = re_part(a);
    let n = h.nrows();
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

/// Smallest eigenvalue of the Hermitian part of `a`.
pub fn min_hermitian_eigenvalue(a: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(a);
    vals.first().copied().unwrap_or(0.0)
}

/// Principal (positive semidefinite) square root of a Hermitian PSD matrix.
pub fn hermitian_sqrt(a: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    let dev = hermitian_deviation(a);
    if dev > tol.herm * a.norm().max(1.0) {
        return Err(CmvError::NotHermitian { deviation: dev });
    }
    let (vals, vecs) = hermitian_eigen(a);
    if let Some(&lo) = vals.first() {
        if lo < -tol.psd {
            return Err(CmvError::NotPsd { min_eigenvalue: lo });
        }
    }
    Ok(hermitian_function(&vals, &vecs, |x| x.max(0.0).sqrt()))
}

/// `V f(Λ) V*` for a Hermitian eigen-decomposition.
pub fn hermitian_function(vals: &[f64], vecs: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = f(v);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    let out = scaled * vecs.adjoint();
    re_part(&out)
}

/// Inverse, or `None` when LU reports singularity or the result is not finite.
pub fn try_inverse(a: &CMatrix) -> Option<CMatrix> {
    let inv = a.clone().try_inverse()?;
    is_finite(&inv).then_some(inv)
}

/// Solves `X A = B` for `X`, i.e. returns `B A^{-1}`.
pub fn right_divide(b: &CMatrix, a: &CMatrix) -> Option<CMatrix> {
    let at = a.adjoint();
    let lu = at.lu();
    let x = lu.solve(&b.adjoint())?;
    let out = x.adjoint();
    is_finite(&out).then_some(out)
}

/// Solves `A X = B` for `X`.
pub fn left_divide(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let x = a.clone().lu().solve(b)?;
    is_finite(&x).then_some(x)
}

/// Principal square root of an upper triangular matrix whose diagonal
/// avoids the closed negative real axis.
fn triangular_sqrt(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut r = CMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Principal logarithm of a matrix whose eigenvalues have positive real part.
///
/// Complex Schur form, repeated triangular square roots until the factor is
/// within 1/4 of the identity, then a Mercator series. When the Schur
/// iteration stalls (it can on near-scalar input) the square roots are taken
/// on the full matrix by Denman–Beavers iteration instead.
pub fn principal_log(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    if n == 1 {
        let z = a[(0, 0)];
        if !(z.re > 0.0) {
            return Err(CmvError::SpectrumNotInRightHalfPlane { min_real: z.re });
        }
        return Ok(CMatrix::from_element(1, 1, z.ln()));
    }
    match a.clone().try_schur(f64::EPSILON, 200) {
        Some(schur) => {
            let (q, mut t) = schur.unpack();
            for i in 0..n {
                for j in 0..i {
                    t[(i, j)] = C64::new(0.0, 0.0);
                }
            }
            let min_real = (0..n).map(|i| t[(i, i)].re).fold(f64::INFINITY, f64::min);
            if !(min_real > 0.0) {
                return Err(CmvError::SpectrumNotInRightHalfPlane { min_real });
            }
            let log = log_by_square_roots(t, min_real, triangular_sqrt)?;
            Ok(&q * log * q.adjoint())
        }
        None => {
            let fa = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| a[(i, j)]);
            let ev = fa.eigenvalues().map_err(|e| CmvError::EigenFailure(format!("{e:?}")))?;
            let min_real = ev.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if !(min_real > 0.0) {
                return Err(CmvError::SpectrumNotInRightHalfPlane { min_real });
            }
            log_by_square_roots(a.clone(), min_real, |x| denman_beavers_sqrt(x).unwrap_or_else(|| x.clone()))
        }
    }
}

fn log_by_square_roots(mut t: CMatrix, min_real: f64, sqrt: impl Fn(&CMatrix) -> CMatrix) -> Result<CMatrix> {
    let n = t.nrows();
    let id = identity(n);
    let mut s = 0u32;
    while operator_norm(&(&t - &id)) >= 0.25 {
        if s > 60 {
            return Err(CmvError::SpectrumNotInRightHalfPlane { min_real });
        }
        t = sqrt(&t);
        s += 1;
    }
    let x = &t - &id;
    let mut log = CMatrix::zeros(n, n);
    let mut power = x.clone();
    for p in 1..200 {
        let term = &power * c(if p % 2 == 1 { 1.0 } else { -1.0 } / p as f64, 0.0);
        let size = term.norm();
        log += term;
        if size < 1e-18 * log.norm().max(1e-300) || size == 0.0 {
            break;
        }
        power = &power * &x;
    }
    log *= c(2f64.powi(s as i32), 0.0);
    Ok(log)
}

/// Principal square root by the Denman–Beavers iteration.
fn denman_beavers_sqrt(a: &CMatrix) -> Option<CMatrix> {
    let mut y = a.clone();
    let mut z = identity(a.nrows());
    let half = c(0.5, 0.0);
    for _ in 0..100 {
        let yi = try_inverse(&y)?;
        let zi = try_inverse(&z)?;
        let y_next = (&y + zi) * half;
        z = (&z + yi) * half;
        let change = operator_norm(&(&y_next - &y));
        y = y_next;
        if change <= 1e-15 * operator_norm(&y) {
            return Some(y);
        }
    }
    None
}

/// Matrix exponential (nalgebra's Padé scaling and squaring).
pub fn expm(a: &CMatrix) -> CMatrix {
    a.clone().exp()
}

/// Eigenvalues and orthonormal eigenvectors of a unitary matrix.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Eigenvalues on the unit circle, sorted by angle in `[0, 2π)`.
    pub values: Vec<C64>,
    /// Columns are the matching orthonormal eigenvectors.
    pub vectors: CMatrix,
}

impl EigenPairs {
    pub fn angles(&self) -> Vec<f64> {
        self.values.iter().map(|z| angle_0_2pi(*z)).collect()
    }

    /// `‖Σ λ_j v_j v_j* − U‖`.
    pub fn reconstruction_error(&self, u: &CMatrix) -> f64 {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= l;
            }
        }
        operator_norm(&(scaled * self.vectors.adjoint() - u))
    }
}

/// Argument mapped into `[0, 2π)`.
pub fn angle_0_2pi(z: C64) -> f64 {
    let a = z.arg();
    let tau = std::f64::consts::TAU;
    let w = if a < 0.0 { a + tau } else { a };
    if w >= tau {
        0.0
    } else {
        w
    }
}

/// Eigen-decomposition of a unitary matrix.
///
/// A general complex eigensolve is followed by sorting by angle and a QR
/// re-orthonormalization of the whole basis. Inside an exactly degenerate
/// cluster the solver's vectors are merely independent, and the QR turns them
/// into an orthonormal basis of the same invariant subspace. Between
/// well-separated eigenvalues it only removes rounding-level overlaps.
/// Eigenvalues are then recomputed as Rayleigh quotients and projected onto
/// the circle.
pub fn unitary_eig(u: &CMatrix, tol: &Tolerances) -> Result<EigenPairs> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(CmvError::DimensionMismatch { expected: n, got: u.ncols() });
    }
    if n == 0 {
        return Ok(EigenPairs { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let dev = unitarity_deviation(u);
    if dev > tol.unitary {
        return Err(CmvError::NotUnitary { deviation: dev });
    }
    let fu = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| u[(i, j)]);
    let eig = fu
        .eigen()
        .map_err(|e| CmvError::EigenFailure(format!("{e:?}")))?;
    let s = eig.S();
    let v = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    let ang: Vec<f64> = (0..n).map(|i| angle_0_2pi(s[i])).collect();
    order.sort_by(|&a, &b| ang[a].total_cmp(&ang[b]));
    let sorted = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| v[(i, order[j])]);
    let q = sorted.qr().compute_thin_Q();
    let vectors = CMatrix::from_fn(n, n, |i, j| q[(i, j)]);
    let uv = u * &vectors;
    let mut values = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for j in 0..n {
        let col = vectors.column(j);
        let rq = col.dotc(&uv.column(j));
        let norm = rq.norm();
        if !(norm > 0.5) {
            return Err(CmvError::EigenFailure(format!("degenerate Rayleigh quotient at {j}")));
        }
        let lam = rq / norm;
        let resid = (uv.column(j) - col * lam).norm();
        worst = worst.max(resid);
        values.push(lam);
    }
    if !(worst <= tol.eig) {
        return Err(CmvError::EigenFailure(format!("eigen residual {worst:e}")));
    }
    // Re-sort: Rayleigh quotients may swap nearly equal neighbours.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| angle_0_2pi(values[a]).total_cmp(&angle_0_2pi(values[b])));
    let values_sorted = idx.iter().map(|&i| values[i]).collect();
    let vectors_sorted = CMatrix::from_fn(n, n, |i, j| vectors[(i, idx[j])]);
    Ok(EigenPairs { values: values_sorted, vectors: vectors_sorted })
}
