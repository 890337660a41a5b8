//! Finite truncations of the block CMV operator `U = VW`.
//!
//! A truncation covers sites `k_l..=k_r` with `k_l` odd and `k_r` even. The
//! two `W` blocks that would couple the segment to the outside are replaced by
//! the sequence's boundary unitary `B`, which gives `ρ = ρ̃ = 0` there: site
//! `k_l` carries `W(k_l, k_l) = B*` and site `k_r` carries `W(k_r, k_r) = −B`.

use std::io::Write;

use crate::error::{CmvError, Result};
use crate::linalg::{c, identity, BandedLu, BandedMatrix, CMatrix, C64};
use crate::verblunsky::{SiteBlocks, VerblunskySequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    U,
    UAdj,
    V,
    W,
}

#[derive(Debug, Clone)]
pub struct CmvTruncation {
    seq: VerblunskySequence,
    k_l: i64,
    k_r: i64,
    v: BandedMatrix,
    w: BandedMatrix,
    u: BandedMatrix,
}

fn place_theta(mat: &mut BandedMatrix, m: usize, p: usize, s: &SiteBlocks) {
    for a in 0..m {
        for b in 0..m {
            mat.set(p * m + a, p * m + b, -s.alpha[(a, b)]);
            mat.set(p * m + a, (p + 1) * m + b, s.rho_tilde[(a, b)]);
            mat.set((p + 1) * m + a, p * m + b, s.rho[(a, b)]);
            mat.set((p + 1) * m + a, (p + 1) * m + b, s.alpha_adj[(a, b)]);
        }
    }
}

/// Largest odd integer `≤ k`.
pub fn snap_left(k: i64) -> i64 {
    if k.rem_euclid(2) == 1 {
        k
    } else {
        k - 1
    }
}

/// Smallest even integer `≥ k`.
pub fn snap_right(k: i64) -> i64 {
    if k.rem_euclid(2) == 0 {
        k
    } else {
        k + 1
    }
}

impl CmvTruncation {
    /// Builds the truncation on `k_l..=k_r`, snapping outward to odd/even ends.
    pub fn build(seq: &VerblunskySequence, k_l: i64, k_r: i64) -> Result<Self> {
        let (k_l, k_r) = (snap_left(k_l), snap_right(k_r));
        if k_r - k_l < 4 {
            return Err(CmvError::InvalidRange(format!("[{k_l}, {k_r}] is shorter than 5 sites")));
        }
        let m = seq.m();
        let n_sites = (k_r - k_l + 1) as usize;
        let n = n_sites * m;
        let bw = 2 * m - 1;
        let mut v = BandedMatrix::zeros(n, bw, bw);
        let mut w = BandedMatrix::zeros(n, bw, bw);
        // V: Θ_k for even k on sites (k − 1, k)
        let mut k = k_l + 1;
        while k <= k_r {
            let s = seq.site(k)?;
            place_theta(&mut v, m, (k - 1 - k_l) as usize, &s);
            k += 2;
        }
        // W: Θ_k for odd k on sites (k − 1, k), interior only
        let mut k = k_l + 2;
        while k < k_r {
            let s = seq.site(k)?;
            place_theta(&mut w, m, (k - 1 - k_l) as usize, &s);
            k += 2;
        }
        let b = seq.boundary_unitary();
        let last = n_sites - 1;
        for a in 0..m {
            for bb in 0..m {
                w.set(a, bb, b[(bb, a)].conj());
                w.set(last * m + a, last * m + bb, -b[(a, bb)]);
            }
        }
        let u = v.mul(&w);
        Ok(CmvTruncation { seq: seq.clone(), k_l, k_r, v, w, u })
    }

    /// Truncation with roughly `n_sites` sites centred on `k0`.
    pub fn centered(seq: &VerblunskySequence, k0: i64, n_sites: usize) -> Result<Self> {
        let half = (n_sites / 2) as i64;
        Self::build(seq, k0 - half + 1, k0 + half)
    }

    pub fn seq(&self) -> &VerblunskySequence {
        &self.seq
    }

    pub fn m(&self) -> usize {
        self.seq.m()
    }

    pub fn site_range(&self) -> (i64, i64) {
        (self.k_l, self.k_r)
    }

    pub fn n_sites(&self) -> usize {
        (self.k_r - self.k_l + 1) as usize
    }

    /// Scalar dimension `m · n_sites`.
    pub fn dim(&self) -> usize {
        self.n_sites() * self.m()
    }

    /// Local site index of `k`.
    pub fn local(&self, k: i64) -> Option<usize> {
        (k >= self.k_l && k <= self.k_r).then(|| (k - self.k_l) as usize)
    }

    /// Distance from `k` to the nearer cut site.
    pub fn clearance(&self, k: i64) -> i64 {
        (k - self.k_l).min(self.k_r - k)
    }

    pub fn banded(&self, op: Op) -> BandedMatrix {
        match op {
            Op::U => self.u.clone(),
            Op::UAdj => self.u.adjoint(),
            Op::V => self.v.clone(),
            Op::W => self.w.clone(),
        }
    }

    pub fn dense(&self, op: Op) -> CMatrix {
        match op {
            Op::U => self.u.to_dense(),
            Op::UAdj => self.u.to_dense().adjoint(),
            Op::V => self.v.to_dense(),
            Op::W => self.w.to_dense(),
        }
    }

    /// Block `(k, k')` of the chosen operator.
    pub fn block(&self, op: Op, k: i64, kp: i64) -> Result<CMatrix> {
        let (i, j) = match (self.local(k), self.local(kp)) {
            (Some(i), Some(j)) => (i, j),
            _ => return Err(CmvError::InvalidRange(format!("sites ({k}, {kp}) outside truncation"))),
        };
        let m = self.m();
        let get = |a: usize, b: usize| match op {
            Op::U => self.u.get(i * m + a, j * m + b),
            Op::UAdj => self.u.get(j * m + b, i * m + a).conj(),
            Op::V => self.v.get(i * m + a, j * m + b),
            Op::W => self.w.get(i * m + a, j * m + b),
        };
        Ok(CMatrix::from_fn(m, m, get))
    }

    /// Banded product with every column of `x`.
    pub fn apply(&self, op: Op, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim() {
            return Err(CmvError::DimensionMismatch { expected: self.dim(), got: x.nrows() });
        }
        Ok(match op {
            Op::U => self.u.mul_mat(x, false),
            Op::UAdj => self.u.mul_mat(x, true),
            Op::V => self.v.mul_mat(x, false),
            Op::W => self.w.mul_mat(x, false),
        })
    }

    /// `n × m` embedding of the coordinate block at site `k`.
    pub fn delta(&self, k: i64) -> Result<CMatrix> {
        let i = self
            .local(k)
            .ok_or_else(|| CmvError::InvalidRange(format!("site {k} outside truncation")))?;
        let m = self.m();
        let mut d = CMatrix::zeros(self.dim(), m);
        for a in 0..m {
            d[(i * m + a, a)] = c(1.0, 0.0);
        }
        Ok(d)
    }

    /// Rows of site `k` from a block vector.
    pub fn extract(&self, x: &CMatrix, k: i64) -> Result<CMatrix> {
        let i = self
            .local(k)
            .ok_or_else(|| CmvError::InvalidRange(format!("site {k} outside truncation")))?;
        let m = self.m();
        Ok(x.rows(i * m, m).into_owned())
    }

    /// Factorization of `U − z` for repeated solves.
    pub fn resolvent(&self, z: C64) -> Result<Resolvent<'_>> {
        if (1.0 - z.norm()).abs() < 1e-6 {
            return Err(CmvError::NearUnitCircle { modulus: z.norm() });
        }
        // U − z = V (W − z V*)
        let t = self.w.axpy(-z, &self.v.adjoint());
        let lu = BandedLu::factor(&t)?;
        Ok(Resolvent { t: self, lu })
    }

    /// `y` with `(U − z) y = rhs`.
    pub fn resolvent_solve(&self, z: C64, rhs: &CMatrix) -> Result<CMatrix> {
        self.resolvent(z)?.solve(rhs)
    }

    /// `Δ_{k0} (U*)^p Δ_{k0}`; requires clearance greater than `2p` sites.
    pub fn diagonal_moment(&self, k0: i64, p: usize) -> Result<CMatrix> {
        Ok(self.diagonal_moments(k0, p)?.pop().unwrap_or_else(|| identity(self.m())))
    }

    /// `Δ_{k0} (U*)^j Δ_{k0}` for `j = 1..=p`.
    pub fn diagonal_moments(&self, k0: i64, p: usize) -> Result<Vec<CMatrix>> {
        if self.local(k0).is_none() || self.clearance(k0) <= 2 * p as i64 {
            return Err(CmvError::TooCloseToBoundary { k0, p });
        }
        let mut x = self.delta(k0)?;
        let mut out = Vec::with_capacity(p);
        for _ in 0..p {
            x = self.u.mul_mat(&x, true);
            out.push(self.extract(&x, k0)?);
        }
        Ok(out)
    }

    /// `I + 2z (U − z)^{-1}(k0, k0)`.
    pub fn m11(&self, z: C64, k0: i64) -> Result<CMatrix> {
        let d = self.delta(k0)?;
        let y = self.resolvent_solve(z, &d)?;
        Ok(identity(self.m()) + self.extract(&y, k0)? * (z * 2.0))
    }

    /// Coordinate-list text export of `U`: one `row col re im` line per nonzero.
    pub fn export_coo<Wr: Write>(&self, out: &mut Wr) -> Result<()> {
        for i in 0..self.dim() {
            for j in self.u.row_range(i) {
                let v = self.u.get(i, j);
                if v != c(0.0, 0.0) {
                    writeln!(out, "{i} {j} {:.16e} {:.16e}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}

/// LU factorization of `W − zV*`.
pub struct Resolvent<'a> {
    t: &'a CmvTruncation,
    lu: BandedLu,
}

impl Resolvent<'_> {
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        let n = self.t.dim();
        if rhs.nrows() != n {
            return Err(CmvError::DimensionMismatch { expected: n, got: rhs.nrows() });
        }
        let b = self.t.v.mul_mat(rhs, true);
        let y = self.lu.solve_mat(&b);
        if !crate::linalg::is_finite(&y) {
            return Err(CmvError::SolveFailure("non-finite solution".into()));
        }
        Ok(y)
    }
}

/// Parses the coordinate-list export back into a dense matrix.
pub fn parse_coo(text: &str, n: usize) -> Result<CMatrix> {
    let mut a = CMatrix::zeros(n, n);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(CmvError::InvalidInput(format!("bad line: {line}")));
        }
        let bad = |e: String| CmvError::InvalidInput(e);
        let i: usize = f[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let j: usize = f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let re: f64 = f[2].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
        let im: f64 = f[3].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
        a[(i, j)] = c(re, im);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{operator_norm, unitarity_deviation};
    use crate::verblunsky::{borg_sequence, random_contraction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_seq(seed: u64, m: usize, lo: i64, hi: i64) -> VerblunskySequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (lo..=hi).map(|_| random_contraction(&mut rng, m, 0.9)).collect();
        VerblunskySequence::from_window(m, lo, w).unwrap()
    }

    #[test]
    fn snapping_and_unitarity() {
        let t = CmvTruncation::build(&random_seq(1, 2, -10, 10), -8, 9).unwrap();
        assert_eq!(t.site_range(), (-9, 10));
        assert!(unitarity_deviation(&t.dense(Op::U)) < 1e-12);
        assert!(operator_norm(&(t.dense(Op::U) - t.dense(Op::V) * t.dense(Op::W))) < 1e-13);
        assert!(CmvTruncation::build(&VerblunskySequence::free(1), 1, 2).is_err());
    }

    #[test]
    fn free_and_borg_diagonals() {
        let t = CmvTruncation::build(&VerblunskySequence::free(2), -5, 6).unwrap();
        for k in -4..6 {
            assert_eq!(operator_norm(&t.block(Op::U, k, k).unwrap()), 0.0);
        }
        let b = borg_sequence(PI / 2.0, 1.5 * PI, &identity(1)).unwrap();
        let t = CmvTruncation::build(&b, -7, 8).unwrap();
        for k in [-4, 0, 2] {
            assert!((t.block(Op::U, k, k).unwrap()[(0, 0)] - c(-0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn free_u_moves_coordinates() {
        let t = CmvTruncation::build(&VerblunskySequence::free(1), -7, 8).unwrap();
        let x = t.delta(2).unwrap();
        let y = t.apply(Op::U, &x).unwrap();
        let nz: Vec<usize> = (0..t.dim()).filter(|&i| y[(i, 0)].norm() > 0.0).collect();
        assert_eq!(nz.len(), 1);
        let w = t.apply(Op::W, &t.delta(0).unwrap()).unwrap();
        assert!((0..t.dim()).filter(|&i| w[(i, 0)].norm() > 0.0).count() <= 2);
    }

    #[test]
    fn resolvent_examples() {
        let s = random_seq(4, 2, -6, 6);
        let t = CmvTruncation::build(&s, -9, 10).unwrap();
        let rhs = CMatrix::from_fn(t.dim(), 1, |i, _| c((i % 5) as f64, 1.0));
        let y0 = t.resolvent_solve(c(0.0, 0.0), &rhs).unwrap();
        assert!(operator_norm(&(y0 - t.apply(Op::UAdj, &rhs).unwrap())) < 1e-12);
        let z = c(2.0, 0.0);
        let y = t.resolvent_solve(z, &rhs).unwrap();
        assert!(y.norm() <= rhs.norm() / (z.norm() - 1.0) + 1e-9);
        let resid = t.apply(Op::U, &y).unwrap() - &y * z - &rhs;
        assert!(resid.norm() < 1e-10 * rhs.norm());
        assert!(matches!(t.resolvent_solve(c(1.0, 0.0), &rhs), Err(CmvError::NearUnitCircle { .. })));
    }

    #[test]
    fn moments_need_clearance() {
        let t = CmvTruncation::build(&VerblunskySequence::free(1), -7, 8).unwrap();
        assert!(t.diagonal_moment(0, 2).is_ok());
        assert!(matches!(t.diagonal_moment(0, 4), Err(CmvError::TooCloseToBoundary { .. })));
    }

    #[test]
    fn coo_round_trip() {
        let t = CmvTruncation::build(&random_seq(5, 2, -4, 4), -5, 6).unwrap();
        let mut buf = Vec::new();
        t.export_coo(&mut buf).unwrap();
        let back = parse_coo(std::str::from_utf8(&buf).unwrap(), t.dim()).unwrap();
        assert!(operator_norm(&(back - t.dense(Op::U))) < 1e-15);
    }
}
