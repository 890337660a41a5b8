//! Half-lattice Weyl–Titchmarsh machinery.
//!
//! `Φ_+(z, k)` is obtained by running the Riccati recursion downward from a
//! seed far to the right, `Φ_-(z, k)^{-1}` by running the companion recursion
//! upward from a seed far to the left. On the spectrum both maps contract by
//! about `|z|^2` per site and much faster in gaps, so the seed is forgotten
//! geometrically.

use std::borrow::Cow;
use std::io::Write;

use serde::Serialize;

use crate::cmv::{CmvTruncation, Op};
use crate::error::{CmvError, Result};
use crate::herglotz::{cayley_value, CaratheodoryEval, Orientation, Provenance};
use crate::linalg::{c, identity, left_divide, operator_norm, right_divide, CMatrix, C64};
use crate::verblunsky::{Extension, SiteBlocks, SiteTable, VerblunskySequence};

/// Values of `P_+, Q_+, R_+, S_+` on a range of sites.
#[derive(Debug, Clone)]
pub struct LaurentSolutionQuad {
    pub z: C64,
    pub k0: i64,
    pub lo: i64,
    pub p: Vec<CMatrix>,
    pub q: Vec<CMatrix>,
    pub r: Vec<CMatrix>,
    pub s: Vec<CMatrix>,
}

impl LaurentSolutionQuad {
    pub fn hi(&self) -> i64 {
        self.lo + self.p.len() as i64 - 1
    }

    fn idx(&self, k: i64) -> usize {
        assert!(k >= self.lo && k <= self.hi(), "site {k} outside quadruple range");
        (k - self.lo) as usize
    }

    pub fn p(&self, k: i64) -> &CMatrix {
        &self.p[self.idx(k)]
    }

    pub fn q(&self, k: i64) -> &CMatrix {
        &self.q[self.idx(k)]
    }

    pub fn r(&self, k: i64) -> &CMatrix {
        &self.r[self.idx(k)]
    }

    pub fn s(&self, k: i64) -> &CMatrix {
        &self.s[self.idx(k)]
    }

    /// Largest residual of `W P = z R`, `V R = P` (and the same for `Q, S`)
    /// over sites strictly inside the range, using the banded operators of a
    /// covering truncation.
    pub fn residual(&self, t: &CmvTruncation) -> Result<f64> {
        let (k_l, k_r) = t.site_range();
        if self.lo < k_l || self.hi() > k_r {
            return Err(CmvError::InvalidRange("truncation must cover the quadruple".into()));
        }
        let m = t.m();
        let embed = |vals: &[CMatrix]| {
            let mut x = CMatrix::zeros(t.dim(), m);
            for (i, v) in vals.iter().enumerate() {
                let site = t.local(self.lo + i as i64).unwrap();
                x.rows_mut(site * m, m).copy_from(v);
            }
            x
        };
        let mut worst = 0.0f64;
        for (a, b) in [(&self.p, &self.r), (&self.q, &self.s)] {
            let (ea, eb) = (embed(a), embed(b));
            let wa = t.apply(Op::W, &ea)?;
            let vb = t.apply(Op::V, &eb)?;
            for k in self.lo + 1..self.hi() {
                let r1 = t.extract(&wa, k)? - b[self.idx(k)].clone() * self.z;
                let r2 = t.extract(&vb, k)? - &a[self.idx(k)];
                worst = worst.max(operator_norm(&r1)).max(operator_norm(&r2));
            }
        }
        Ok(worst)
    }
}

/// Initial data at `k0`: `(P, R), (Q, S)`.
fn initial(z: C64, k0: i64, m: usize) -> [CMatrix; 4] {
    let id = identity(m);
    if k0.rem_euclid(2) == 0 {
        [id.clone(), id.clone(), -id.clone(), id]
    } else {
        [&id * z, id.clone(), &id * z, -id]
    }
}

/// One transfer step from `k` to `k + 1` for a pair `(P, R)`.
fn step_forward(k: i64, s1: &SiteBlocks, z: C64, p: &CMatrix, r: &CMatrix) -> (CMatrix, CMatrix) {
    if k.rem_euclid(2) == 0 {
        // W block Θ_{k+1} on (k, k+1): W P = z R
        let p1 = &s1.rho_tilde_inv * (r * z + &s1.alpha * p);
        let r1 = (&s1.rho * p + &s1.alpha_adj * &p1) / z;
        (p1, r1)
    } else {
        // V block Θ_{k+1} on (k, k+1): V R = P
        let r1 = &s1.rho_tilde_inv * (p + &s1.alpha * r);
        let p1 = &s1.rho * r + &s1.alpha_adj * &r1;
        (p1, r1)
    }
}

/// One transfer step from `k` to `k − 1`, using the block `Θ_k`.
fn step_backward(k: i64, s: &SiteBlocks, z: C64, p: &CMatrix, r: &CMatrix) -> (CMatrix, CMatrix) {
    if k.rem_euclid(2) == 0 {
        let r0 = &s.rho_inv * (p - &s.alpha_adj * r);
        let p0 = -(&s.alpha * &r0) + &s.rho_tilde * r;
        (p0, r0)
    } else {
        let p0 = &s.rho_inv * (r * z - &s.alpha_adj * p);
        let r0 = (-(&s.alpha * &p0) + &s.rho_tilde * p) / z;
        (p0, r0)
    }
}

/// `P_+, Q_+, R_+, S_+` on `lo..=hi` from the initial data at `k0`.
pub fn generate_quad(seq: &VerblunskySequence, z: C64, k0: i64, lo: i64, hi: i64) -> Result<LaurentSolutionQuad> {
    if z == c(0.0, 0.0) {
        return Err(CmvError::InvalidInput("z must be nonzero".into()));
    }
    if !(lo <= k0 && k0 <= hi) {
        return Err(CmvError::InvalidRange(format!("[{lo}, {hi}] does not contain {k0}")));
    }
    let m = seq.m();
    let len = (hi - lo + 1) as usize;
    let mut out = LaurentSolutionQuad {
        z,
        k0,
        lo,
        p: vec![CMatrix::zeros(m, m); len],
        q: vec![CMatrix::zeros(m, m); len],
        r: vec![CMatrix::zeros(m, m); len],
        s: vec![CMatrix::zeros(m, m); len],
    };
    let [p0, r0, q0, s0] = initial(z, k0, m);
    let i0 = (k0 - lo) as usize;
    out.p[i0] = p0;
    out.r[i0] = r0;
    out.q[i0] = q0;
    out.s[i0] = s0;
    for k in k0..hi {
        let site = seq.site(k + 1).map_err(|_| CmvError::TransferSingular { k: k + 1 })?;
        let i = (k - lo) as usize;
        let (p, r) = step_forward(k, &site, z, &out.p[i], &out.r[i]);
        let (q, s) = step_forward(k, &site, z, &out.q[i], &out.s[i]);
        out.p[i + 1] = p;
        out.r[i + 1] = r;
        out.q[i + 1] = q;
        out.s[i + 1] = s;
    }
    for k in (lo + 1..=k0).rev() {
        let site = seq.site(k).map_err(|_| CmvError::TransferSingular { k })?;
        let i = (k - lo) as usize;
        let (p, r) = step_backward(k, &site, z, &out.p[i], &out.r[i]);
        let (q, s) = step_backward(k, &site, z, &out.q[i], &out.s[i]);
        out.p[i - 1] = p;
        out.r[i - 1] = r;
        out.q[i - 1] = q;
        out.s[i - 1] = s;
    }
    Ok(out)
}

/// `Φ_+(z, k − 1)` from `Φ_+(z, k)`: the solution of the Riccati equation
/// `Φ(k) ρ̃⁻¹ α Φ(k−1) + z Φ(k) ρ̃⁻¹ − ρ⁻¹ Φ(k−1) = z ρ⁻¹ α*`.
pub fn riccati_step_down(phi_k: &CMatrix, alpha: &CMatrix, z: C64) -> Result<CMatrix> {
    step_down(phi_k, &SiteBlocks::new(alpha, 0)?, z)
}

fn step_down(phi_k: &CMatrix, s: &SiteBlocks, z: C64) -> Result<CMatrix> {
    let m = phi_k.nrows();
    let a = &s.rho * phi_k * &s.rho_tilde_inv;
    let lhs = identity(m) - &a * &s.alpha;
    let rhs = (&a - &s.alpha_adj) * z;
    left_divide(&lhs, &rhs).ok_or(CmvError::PivotSingular)
}

/// `Φ_-(z, k)^{-1}` from `Φ_-(z, k − 1)^{-1}`.
pub fn riccati_step_up_minus(psi_km1: &CMatrix, alpha: &CMatrix, z: C64) -> Result<CMatrix> {
    step_up(psi_km1, &SiteBlocks::new(alpha, 0)?, z)
}

fn step_up(psi_km1: &CMatrix, s: &SiteBlocks, z: C64) -> Result<CMatrix> {
    let m = psi_km1.nrows();
    let num = &s.rho_tilde_inv * (&s.alpha + psi_km1 * z);
    let den = &s.rho_inv * (&s.alpha_adj * psi_km1 * z + identity(m));
    right_divide(&num, &den).ok_or(CmvError::PivotSingular)
}

/// Residual of the `Φ_+` Riccati equation at site `k`.
pub fn riccati_residual_plus(phi_k: &CMatrix, phi_km1: &CMatrix, alpha: &CMatrix, z: C64) -> Result<f64> {
    let s = SiteBlocks::new(alpha, 0)?;
    let lhs = phi_k * &s.rho_tilde_inv * &s.alpha * phi_km1 + phi_k * &s.rho_tilde_inv * z - &s.rho_inv * phi_km1;
    Ok(operator_norm(&(lhs - &s.rho_inv * &s.alpha_adj * z)))
}

/// Residual of the `Φ_-^{-1}` Riccati equation at site `k`.
pub fn riccati_residual_minus(psi_k: &CMatrix, psi_km1: &CMatrix, alpha: &CMatrix, z: C64) -> Result<f64> {
    let s = SiteBlocks::new(alpha, 0)?;
    let lhs = psi_k * &s.rho_inv * &s.alpha_adj * psi_km1 * z + psi_k * &s.rho_inv
        - &s.rho_tilde_inv * psi_km1 * z;
    Ok(operator_norm(&(lhs - &s.rho_tilde_inv * &s.alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurOptions {
    /// Fixed depth; chosen from `|z|` and `tol` when absent.
    pub depth: Option<usize>,
    /// Agreement required between chains started from different seeds.
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for SchurOptions {
    fn default() -> Self {
        SchurOptions { depth: None, tol: 1e-10, max_depth: 1 << 17 }
    }
}

impl SchurOptions {
    /// Depth from the on-spectrum contraction rate, about `|z|^2` per site.
    fn rate_depth(&self, z: C64) -> usize {
        let r = z.norm();
        if r < 1e-3 {
            return 8;
        }
        let d = ((0.01 * self.tol).ln() / (2.0 * r.ln())).ceil() as usize;
        d.clamp(8, self.max_depth)
    }

    /// Shallow first try (enough in gaps and near the origin), then the
    /// rate-based depth, then doubling.
    fn initial_depth(&self, z: C64) -> usize {
        match self.depth {
            Some(d) => d.max(1),
            None => self.rate_depth(z).min(64),
        }
    }

    fn next_depth(&self, depth: usize, z: C64) -> usize {
        let d = if self.depth.is_none() { (2 * depth).max(self.rate_depth(z)) } else { 2 * depth };
        d.min(self.max_depth)
    }
}

/// A converged Schur value with its certification data.
#[derive(Debug, Clone)]
pub struct SchurValue {
    pub value: CMatrix,
    pub depth: usize,
    /// Change when the far seed is replaced by a different contraction.
    pub seed_change: f64,
}

/// Site data over a range, computed once and reused for many `z`.
pub struct SchurSolver {
    seq: VerblunskySequence,
    table: Option<SiteTable>,
}

/// Fixed strict contraction used as the alternative seed.
fn alt_seed(m: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            C64::from_polar(0.6, 0.7 + i as f64)
        } else {
            c(0.05, -0.03)
        }
    })
}

impl SchurSolver {
    pub fn new(seq: &VerblunskySequence) -> Self {
        SchurSolver { seq: seq.clone(), table: None }
    }

    /// Precomputes site blocks on `lo..=hi`.
    pub fn with_sites(seq: &VerblunskySequence, lo: i64, hi: i64) -> Result<Self> {
        Ok(SchurSolver { seq: seq.clone(), table: Some(SiteTable::new(seq, lo, hi)?) })
    }

    pub fn seq(&self) -> &VerblunskySequence {
        &self.seq
    }

    fn site(&self, k: i64) -> Result<Cow<'_, SiteBlocks>> {
        match &self.table {
            Some(t) if t.covers(k, k) => Ok(Cow::Borrowed(t.get(k))),
            _ => Ok(Cow::Owned(self.seq.site(k)?)),
        }
    }

    /// Right edge beyond which `Φ_+ = 0` exactly, if the sequence is
    /// eventually zero on the right.
    fn exact_right(&self) -> Option<i64> {
        match self.seq.extension() {
            Extension::Zero => Some(self.seq.k_max()),
            _ => None,
        }
    }

    fn exact_left(&self) -> Option<i64> {
        match self.seq.extension() {
            Extension::Zero => Some(self.seq.k_min() - 1),
            _ => None,
        }
    }

    /// Runs the downward recursion from `seed` at `start` to `k0`.
    pub fn plus_chain(&self, z: C64, k0: i64, start: i64, seed: CMatrix) -> Result<CMatrix> {
        let mut phi = seed;
        for k in (k0 + 1..=start).rev() {
            phi = step_down(&phi, self.site(k)?.as_ref(), z)?;
        }
        Ok(phi)
    }

    /// Runs the upward recursion from `seed` at `start` to `k0`.
    pub fn minus_chain(&self, z: C64, k0: i64, start: i64, seed: CMatrix) -> Result<CMatrix> {
        let mut psi = seed;
        for k in start + 1..=k0 {
            psi = step_up(&psi, self.site(k)?.as_ref(), z)?;
        }
        Ok(psi)
    }

    /// `Φ_+(z, k0)`.
    pub fn phi_plus(&self, z: C64, k0: i64, opts: &SchurOptions) -> Result<SchurValue> {
        let m = self.seq.m();
        if let Some(edge) = self.exact_right() {
            let start = edge.max(k0);
            let value = self.plus_chain(z, k0, start, CMatrix::zeros(m, m))?;
            return Ok(SchurValue { value, depth: (start - k0) as usize, seed_change: 0.0 });
        }
        let mut depth = opts.initial_depth(z);
        loop {
            let start = k0 + depth as i64;
            let a = self.plus_chain(z, k0, start, CMatrix::zeros(m, m))?;
            let b = self.plus_chain(z, k0, start, alt_seed(m))?;
            let change = operator_norm(&(&a - &b));
            if change <= opts.tol {
                return Ok(SchurValue { value: a, depth, seed_change: change });
            }
            if depth >= opts.max_depth {
                return Err(CmvError::NoConvergence { depth, change });
            }
            depth = opts.next_depth(depth, z);
        }
    }

    /// `Φ_-(z, k0)^{-1}`.
    pub fn phi_minus_inv(&self, z: C64, k0: i64, opts: &SchurOptions) -> Result<SchurValue> {
        let m = self.seq.m();
        if let Some(edge) = self.exact_left() {
            let start = edge.min(k0);
            let value = self.minus_chain(z, k0, start, CMatrix::zeros(m, m))?;
            return Ok(SchurValue { value, depth: (k0 - start) as usize, seed_change: 0.0 });
        }
        let mut depth = opts.initial_depth(z);
        loop {
            let start = k0 - depth as i64;
            let a = self.minus_chain(z, k0, start, CMatrix::zeros(m, m))?;
            let b = self.minus_chain(z, k0, start, alt_seed(m))?;
            let change = operator_norm(&(&a - &b));
            if change <= opts.tol {
                return Ok(SchurValue { value: a, depth, seed_change: change });
            }
            if depth >= opts.max_depth {
                return Err(CmvError::NoConvergence { depth, change });
            }
            depth = opts.next_depth(depth, z);
        }
    }

    pub fn pair(&self, z: C64, k: i64, opts: &SchurOptions) -> Result<SchurPair> {
        let plus = self.phi_plus(z, k, opts)?;
        let minus = self.phi_minus_inv(z, k, opts)?;
        Ok(SchurPair {
            z,
            k,
            phi_plus: plus.value,
            phi_minus_inv: minus.value,
            depth: plus.depth.max(minus.depth),
            seed_change: plus.seed_change.max(minus.seed_change),
        })
    }
}

/// `Φ_+(z, k)` and `Φ_-(z, k)^{-1}`.
#[derive(Debug, Clone)]
pub struct SchurPair {
    pub z: C64,
    pub k: i64,
    pub phi_plus: CMatrix,
    pub phi_minus_inv: CMatrix,
    pub depth: usize,
    pub seed_change: f64,
}

pub fn schur_plus(seq: &VerblunskySequence, z: C64, k0: i64, opts: &SchurOptions) -> Result<SchurValue> {
    SchurSolver::new(seq).phi_plus(z, k0, opts)
}

pub fn schur_minus(seq: &VerblunskySequence, z: C64, k0: i64, opts: &SchurOptions) -> Result<SchurValue> {
    SchurSolver::new(seq).phi_minus_inv(z, k0, opts)
}

pub fn schur_pair(seq: &VerblunskySequence, z: C64, k: i64, opts: &SchurOptions) -> Result<SchurPair> {
    SchurSolver::new(seq).pair(z, k, opts)
}

/// `(M_+, M_-)` from a Schur pair.
pub fn m_functions_from_pair(pair: &SchurPair) -> Result<(CMatrix, CMatrix)> {
    let mp = cayley_value(&pair.phi_plus, false).map_err(|_| CmvError::CayleySingular)?;
    let mm = cayley_value(&pair.phi_minus_inv, true).map_err(|_| CmvError::CayleySingular)?;
    Ok((mp, mm))
}

pub fn m_functions(seq: &VerblunskySequence, z: C64, k0: i64) -> Result<(CMatrix, CMatrix)> {
    m_functions_from_pair(&schur_pair(seq, z, k0, &SchurOptions::default())?)
}

/// `Φ_{1,1}(z, k)` from a Schur pair (parity of `k` selects the order).
pub fn phi11_from_pair(pair: &SchurPair) -> CMatrix {
    if pair.k.rem_euclid(2) == 1 {
        &pair.phi_minus_inv * &pair.phi_plus
    } else {
        &pair.phi_plus * &pair.phi_minus_inv
    }
}

/// `M_{1,1}(z, k)` from a Schur pair.
pub fn m11_from_pair(pair: &SchurPair) -> Result<CMatrix> {
    cayley_value(&phi11_from_pair(pair), false).map_err(|_| CmvError::CayleySingular)
}

/// Evaluator `z ↦ M_{1,1}(z, k0)` backed by Schur pairs.
pub fn m11_evaluator(seq: &VerblunskySequence, k0: i64, opts: SchurOptions) -> CaratheodoryEval {
    let solver = std::sync::Arc::new(SchurSolver::new(seq));
    CaratheodoryEval::new(seq.m(), Provenance::SchurPair { k0 }, Orientation::Caratheodory, move |z| {
        m11_from_pair(&solver.pair(z, k0, &opts)?)
    })
}

/// One row of a Riccati chain dump.
#[derive(Debug, Clone, Serialize)]
pub struct ChainEntry {
    pub k: i64,
    pub residual: f64,
    pub norm: f64,
}

/// `Φ_+` along `k0..=k0 + depth` from seed 0 at the right end, with the
/// Riccati residual at every step.
pub fn riccati_chain_plus(seq: &VerblunskySequence, z: C64, k0: i64, depth: usize) -> Result<Vec<ChainEntry>> {
    let m = seq.m();
    let start = k0 + depth as i64;
    let mut phi = CMatrix::zeros(m, m);
    let mut out = vec![ChainEntry { k: start, residual: 0.0, norm: 0.0 }];
    for k in (k0 + 1..=start).rev() {
        let a = seq.alpha(k);
        let next = riccati_step_down(&phi, &a, z)?;
        let res = riccati_residual_plus(&phi, &next, &a, z)?;
        out.push(ChainEntry { k: k - 1, residual: res, norm: operator_norm(&next) });
        phi = next;
    }
    Ok(out)
}

/// `Φ_-^{-1}` along `k0 − depth..=k0`.
pub fn riccati_chain_minus(seq: &VerblunskySequence, z: C64, k0: i64, depth: usize) -> Result<Vec<ChainEntry>> {
    let m = seq.m();
    let start = k0 - depth as i64;
    let mut psi = CMatrix::zeros(m, m);
    let mut out = vec![ChainEntry { k: start, residual: 0.0, norm: 0.0 }];
    for k in start + 1..=k0 {
        let a = seq.alpha(k);
        let next = riccati_step_up_minus(&psi, &a, z)?;
        let res = riccati_residual_minus(&next, &psi, &a, z)?;
        out.push(ChainEntry { k, residual: res, norm: operator_norm(&next) });
        psi = next;
    }
    Ok(out)
}

pub fn write_chain_csv<W: Write>(out: W, chain: &[ChainEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in chain {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Both sides of the resolvent formula for one `(k, k')` entry.
#[derive(Debug, Clone)]
pub struct ResolventCheck {
    pub lhs: CMatrix,
    pub rhs: CMatrix,
    pub deviation: f64,
    /// True for the `k < k'` or `k = k'` odd branch.
    pub upper_branch: bool,
}

/// Evaluates the Weyl-solution formula for `(U − z)^{-1}(k, k')` and compares
/// it with a dense solve on a truncation padded by `pad` free sites.
pub fn resolvent_formula_check(
    seq: &VerblunskySequence,
    z: C64,
    k: i64,
    kp: i64,
    k0: i64,
    pad: i64,
) -> Result<ResolventCheck> {
    if !matches!(seq.extension(), Extension::Zero) {
        return Err(CmvError::InvalidInput("resolvent check needs an eventually free sequence".into()));
    }
    if !(z.norm() > 0.0 && z.norm() < 1.0) {
        return Err(CmvError::InvalidInput("need 0 < |z| < 1".into()));
    }
    let lo = k.min(kp).min(k0).min(seq.k_min());
    let hi = k.max(kp).max(k0).max(seq.k_max());
    let t = CmvTruncation::build(seq, lo - pad, hi + pad)?;
    let m = seq.m();
    let u = t.dense(Op::U) - CMatrix::identity(t.dim(), t.dim()) * z;
    let inv = u.try_inverse().ok_or_else(|| CmvError::SolveFailure("dense resolvent".into()))?;
    let (i, j) = (t.local(k).unwrap(), t.local(kp).unwrap());
    let lhs = inv.view((i * m, j * m), (m, m)).into_owned();

    let (mp, mm) = m_functions(seq, z, k0)?;
    let w = &mp - &mm;
    let winv = crate::linalg::try_inverse(&w).ok_or(CmvError::WronskianSingular)?;
    let zr = 1.0 / z.conj();
    let (mp_r, mm_r) = (-mp.adjoint(), -mm.adjoint());
    let qlo = k.min(kp).min(k0);
    let qhi = k.max(kp).max(k0);
    let qz = generate_quad(seq, z, k0, qlo, qhi)?;
    let qw = generate_quad(seq, zr, k0, qlo, qhi)?;
    let weyl = |quad: &LaurentSolutionQuad, site: i64, mfun: &CMatrix| quad.q(site) + quad.p(site) * mfun;
    let upper_branch = k < kp || (k == kp && k.rem_euclid(2) == 1);
    let rhs = if upper_branch {
        weyl(&qz, k, &mm) * &winv * weyl(&qw, kp, &mp_r).adjoint()
    } else {
        weyl(&qz, k, &mp) * &winv * weyl(&qw, kp, &mm_r).adjoint()
    } / (z * 2.0);
    let deviation = operator_norm(&(&lhs - &rhs));
    Ok(ResolventCheck { lhs, rhs, deviation, upper_branch })
}
