//! Row-stored band matrices and an LU factorization with partial pivoting.

use super::{CMatrix, C64};
use crate::error::{CmvError, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix { n, kl, ku, data: vec![C64::new(0.0, 0.0); n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    /// `y = A x` for a single vector.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.data[self.idx(i, j)] * x[j]).sum())
            .collect()
    }

    /// `y = A* x` for a single vector.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            for j in self.row_range(i) {
                y[j] += self.data[self.idx(i, j)].conj() * x[i];
            }
        }
        y
    }

    /// Applies the matrix (or its adjoint) to every column of `x`.
    pub fn mul_mat(&self, x: &CMatrix, adjoint: bool) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, x.ncols());
        for col in 0..x.ncols() {
            let v: Vec<C64> = x.column(col).iter().copied().collect();
            let y = if adjoint { self.adjoint_mul_vec(&v) } else { self.mul_vec(&v) };
            for (i, yi) in y.into_iter().enumerate() {
                out[(i, col)] = yi;
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn from_dense(a: &CMatrix, kl: usize, ku: usize) -> Self {
        let mut b = BandedMatrix::zeros(a.nrows(), kl, ku);
        for i in 0..a.nrows() {
            for j in b.row_range(i) {
                b.set(i, j, a[(i, j)]);
            }
        }
        b
    }

    /// Band product `self * other`; bandwidths add.
    pub fn mul(&self, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandedMatrix::zeros(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            for k in self.row_range(i) {
                let a = self.data[self.idx(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in other.row_range(k) {
                    out.add(i, j, a * other.data[other.idx(k, j)]);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> BandedMatrix {
        let mut out = BandedMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.set(j, i, self.data[self.idx(i, j)].conj());
            }
        }
        out
    }

    /// `self + s * other` with the wider of the two bands.
    pub fn axpy(&self, s: C64, other: &BandedMatrix) -> BandedMatrix {
        let kl = self.kl.max(other.kl);
        let ku = self.ku.max(other.ku);
        let mut out = BandedMatrix::zeros(self.n, kl, ku);
        for i in 0..self.n {
            for j in self.row_range(i) {
                out.add(i, j, self.data[self.idx(i, j)]);
            }
            for j in other.row_range(i) {
                out.add(i, j, s * other.data[other.idx(i, j)]);
            }
        }
        out
    }

    /// Number of nonzero diagonals actually populated, as `(lower, upper)`.
    pub fn occupied_bandwidths(&self) -> (usize, usize) {
        let (mut lo, mut up) = (0, 0);
        for i in 0..self.n {
            for j in self.row_range(i) {
                if self.data[self.idx(i, j)] != C64::new(0.0, 0.0) {
                    if j < i {
                        lo = lo.max(i - j);
                    } else {
                        up = up.max(j - i);
                    }
                }
            }
        }
        (lo, up)
    }
}

/// LU factorization `P A = L U` of a band matrix (LAPACK `gbtrf` layout idea:
/// the upper factor widens to `kl + ku` super-diagonals through pivoting).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Upper bandwidth of the factor, `kl + ku`.
    kw: usize,
    /// Row storage with columns `i - kl ..= i + kw`.
    data: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.kw + 1) + (j + self.kl - i)
    }

    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let kw = a.kl + a.ku;
        let width = kl + kw + 1;
        let mut lu = BandedLu { n, kl, kw, data: vec![C64::new(0.0, 0.0); n * width], piv: vec![0; n] };
        for i in 0..n {
            for j in a.row_range(i) {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }
        let scale = a.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = lu.data[lu.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 1e-14 * scale) {
                return Err(CmvError::SolveFailure(format!("zero pivot at row {k}")));
            }
            lu.piv[k] = p;
            let jmax = (k + kw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.data.swap(a1, a2);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=jmax {
                    let kj = lu.data[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.data[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == C64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.kw).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }

    pub fn solve_mat(&self, b: &CMatrix) -> CMatrix {
        let mut out = b.clone();
        for col in 0..b.ncols() {
            let mut v: Vec<C64> = b.column(col).iter().copied().collect();
            self.solve_in_place(&mut v);
            for (i, x) in v.into_iter().enumerate() {
                out[(i, col)] = x;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator_norm;

    fn test_matrix(n: usize, kl: usize, ku: usize) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in a.row_range(i) {
                let x = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5;
                let y = ((i * 5 + j * 13) % 7) as f64 / 7.0 - 0.5;
                // weak diagonal so pivoting is exercised
                let d = if i == j { 0.01 } else { 1.0 };
                a.set(i, j, C64::new(d * x, y));
            }
        }
        a
    }

    #[test]
    fn solve_matches_dense() {
        let a = test_matrix(30, 3, 2);
        let lu = BandedLu::factor(&a).unwrap();
        let b = CMatrix::from_fn(30, 2, |i, j| C64::new(i as f64, j as f64 - 1.0));
        let x = lu.solve_mat(&b);
        let dense = a.to_dense().lu().solve(&b).unwrap();
        assert!(operator_norm(&(x - dense)) < 1e-10);
    }

    #[test]
    fn products_match_dense() {
        let a = test_matrix(12, 2, 1);
        let b = test_matrix(12, 1, 3);
        let d = a.mul(&b).to_dense() - a.to_dense() * b.to_dense();
        assert!(operator_norm(&d) < 1e-13);
        let d = a.adjoint().to_dense() - a.to_dense().adjoint();
        assert!(operator_norm(&d) < 1e-15);
        let x = CMatrix::from_fn(12, 1, |i, _| C64::new(1.0, i as f64));
        let d = a.mul_mat(&x, true) - a.to_dense().adjoint() * &x;
        assert!(operator_norm(&d) < 1e-13);
    }

    #[test]
    fn singular_is_reported() {
        let a = BandedMatrix::zeros(4, 1, 1);
        assert!(BandedLu::factor(&a).is_err());
    }
}
