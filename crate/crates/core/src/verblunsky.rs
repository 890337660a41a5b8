//! Doubly-infinite sequences of matrix Verblunsky coefficients.
//!
//! A sequence is a finite window of explicit coefficients together with a rule
//! that supplies `α_k` everywhere else, so any finite range can be queried.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CmvError, Result};
use crate::linalg::{
    c, hermitian_eigen, hermitian_function, identity, operator_norm, unitarity_deviation, CMatrix,
    Tolerances, C64,
};

/// Coefficients with norm at or above `1 - CONTRACTION_MARGIN` are rejected.
pub const CONTRACTION_MARGIN: f64 = 1e-12;

/// Rule giving `α_k` outside the explicit window.
#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    Zero,
    /// `α_k = g^k a γ` with `g = −e^{i(θ0+θ1)/2}`, `a = cos((θ1−θ0)/4)`.
    Borg { theta0: f64, theta1: f64, gamma: CMatrix },
    /// `α_k = α_{k_min + (k − k_min) mod p}`; the window holds whole periods.
    Periodic { period: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerblunskySequence {
    m: usize,
    k_min: i64,
    window: Vec<CMatrix>,
    extension: Extension,
    /// Unitary placed at cut sites when a finite truncation is built.
    boundary: CMatrix,
}

/// `g` and `a` of the Borg generator.
pub fn borg_parameters(theta0: f64, theta1: f64) -> (C64, f64) {
    let g = -C64::from_polar(1.0, 0.5 * (theta0 + theta1));
    let mut a = ((theta1 - theta0) / 4.0).cos();
    if a.abs() < 1e-15 {
        a = 0.0;
    }
    (g, a)
}

fn borg_alpha(theta0: f64, theta1: f64, gamma: &CMatrix, k: i64) -> CMatrix {
    let (_, a) = borg_parameters(theta0, theta1);
    let phase = 0.5 * (theta0 + theta1);
    let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let gk = C64::from_polar(sign, (k as f64 * phase).rem_euclid(TAU));
    gamma * (gk * a)
}

pub fn check_unitary(u: &CMatrix, tol: &Tolerances) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(CmvError::DimensionMismatch { expected: u.nrows(), got: u.ncols() });
    }
    let dev = unitarity_deviation(u);
    if dev > tol.unitary {
        return Err(CmvError::NotUnitary { deviation: dev });
    }
    Ok(())
}

impl VerblunskySequence {
    /// All coefficients zero.
    pub fn free(m: usize) -> Self {
        VerblunskySequence { m, k_min: 0, window: vec![], extension: Extension::Zero, boundary: identity(m) }
    }

    /// Explicit window starting at `k_min`, zero outside.
    pub fn from_window(m: usize, k_min: i64, window: Vec<CMatrix>) -> Result<Self> {
        Self::with_extension(m, k_min, window, Extension::Zero)
    }

    pub fn with_extension(m: usize, k_min: i64, window: Vec<CMatrix>, extension: Extension) -> Result<Self> {
        if m == 0 {
            return Err(CmvError::InvalidInput("block dimension must be positive".into()));
        }
        for (i, a) in window.iter().enumerate() {
            if a.nrows() != m || a.ncols() != m {
                return Err(CmvError::DimensionMismatch { expected: m, got: a.nrows() });
            }
            let n = operator_norm(a);
            if !(n < 1.0 - CONTRACTION_MARGIN) {
                return Err(CmvError::ContractivityViolated { k: k_min + i as i64, norm: n });
            }
        }
        let boundary = match &extension {
            Extension::Zero => identity(m),
            Extension::Borg { theta0, theta1, gamma } => {
                validate_arc(*theta0, *theta1)?;
                check_unitary(gamma, &Tolerances::default())?;
                if gamma.nrows() != m {
                    return Err(CmvError::DimensionMismatch { expected: m, got: gamma.nrows() });
                }
                gamma.clone()
            }
            Extension::Periodic { period } => {
                let p = *period;
                if p == 0 || window.is_empty() || window.len() % p != 0 {
                    return Err(CmvError::InvalidInput("periodic window must hold whole periods".into()));
                }
                for i in p..window.len() {
                    if operator_norm(&(&window[i] - &window[i - p])) > 0.0 {
                        return Err(CmvError::InvalidInput("window is not periodic".into()));
                    }
                }
                identity(m)
            }
        };
        Ok(VerblunskySequence { m, k_min, window, extension, boundary })
    }

    /// One period `alphas` starting at `k_min`, repeated forever.
    pub fn periodic(m: usize, k_min: i64, alphas: Vec<CMatrix>) -> Result<Self> {
        let p = alphas.len();
        Self::with_extension(m, k_min, alphas, Extension::Periodic { period: p })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    /// Last explicit index (`k_min − 1` for an empty window).
    pub fn k_max(&self) -> i64 {
        self.k_min + self.window.len() as i64 - 1
    }

    pub fn window(&self) -> &[CMatrix] {
        &self.window
    }

    pub fn extension(&self) -> &Extension {
        &self.extension
    }

    /// Unitary used at truncation cuts: `γ` for Borg sequences, `I` otherwise.
    pub fn boundary_unitary(&self) -> &CMatrix {
        &self.boundary
    }

    pub fn with_boundary_unitary(mut self, b: CMatrix) -> Result<Self> {
        check_unitary(&b, &Tolerances::default())?;
        self.boundary = b;
        Ok(self)
    }

    /// `α_k`.
    pub fn alpha(&self, k: i64) -> CMatrix {
        if k >= self.k_min && k <= self.k_max() {
            return self.window[(k - self.k_min) as usize].clone();
        }
        match &self.extension {
            Extension::Zero => CMatrix::zeros(self.m, self.m),
            Extension::Borg { theta0, theta1, gamma } => borg_alpha(*theta0, *theta1, gamma, k),
            Extension::Periodic { period } => {
                let idx = (k - self.k_min).rem_euclid(*period as i64) as usize;
                self.window[idx].clone()
            }
        }
    }

    /// The same sequence with `α_k` replaced by `α_k + delta`.
    pub fn perturbed(&self, k: i64, delta: &CMatrix) -> Result<Self> {
        let lo = self.k_min.min(k);
        let hi = self.k_max().max(k);
        let lo = if self.window.is_empty() { k } else { lo };
        let hi = if self.window.is_empty() { k } else { hi };
        let mut window: Vec<CMatrix> = (lo..=hi).map(|j| self.alpha(j)).collect();
        window[(k - lo) as usize] += delta;
        let extension = match &self.extension {
            Extension::Periodic { .. } => {
                return Err(CmvError::InvalidInput("perturbation of a periodic sequence".into()))
            }
            e => e.clone(),
        };
        let mut out = Self::with_extension(self.m, lo, window, extension)?;
        out.boundary = self.boundary.clone();
        Ok(out)
    }

    /// Per-site blocks `α, ρ, ρ̃` and inverses.
    pub fn site(&self, k: i64) -> Result<SiteBlocks> {
        SiteBlocks::new(&self.alpha(k), k)
    }

    pub fn rho(&self, k: i64) -> Result<CMatrix> {
        Ok(self.site(k)?.rho)
    }

    pub fn rho_tilde(&self, k: i64) -> Result<CMatrix> {
        Ok(self.site(k)?.rho_tilde)
    }

    pub fn theta_block(&self, k: i64) -> Result<ThetaBlock> {
        let s = self.site(k)?;
        Ok(ThetaBlock { k, block: theta_matrix(&s.alpha, &s.rho, &s.rho_tilde) })
    }

    /// Contraction margins `1 − ‖α_k‖` over `range`.
    pub fn validate(&self, range: std::ops::RangeInclusive<i64>) -> ValidationReport {
        let margins: Vec<(i64, f64)> = range.map(|k| (k, 1.0 - operator_norm(&self.alpha(k)))).collect();
        let failures: Vec<i64> =
            margins.iter().filter(|(_, mg)| !(*mg > CONTRACTION_MARGIN)).map(|(k, _)| *k).collect();
        ValidationReport { ok: failures.is_empty(), margins, failures }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SequenceDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SequenceDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// `[[−α, ρ̃], [ρ, α*]]`.
pub fn theta_matrix(alpha: &CMatrix, rho: &CMatrix, rho_tilde: &CMatrix) -> CMatrix {
    let m = alpha.nrows();
    let mut t = CMatrix::zeros(2 * m, 2 * m);
    t.view_mut((0, 0), (m, m)).copy_from(&(-alpha));
    t.view_mut((0, m), (m, m)).copy_from(rho_tilde);
    t.view_mut((m, 0), (m, m)).copy_from(rho);
    t.view_mut((m, m), (m, m)).copy_from(&alpha.adjoint());
    t
}

/// Precomputed per-site quantities.
#[derive(Debug, Clone)]
pub struct SiteBlocks {
    pub k: i64,
    pub alpha: CMatrix,
    pub alpha_adj: CMatrix,
    pub rho: CMatrix,
    pub rho_inv: CMatrix,
    pub rho_tilde: CMatrix,
    pub rho_tilde_inv: CMatrix,
}

impl SiteBlocks {
    pub fn new(alpha: &CMatrix, k: i64) -> Result<Self> {
        let norm = operator_norm(alpha);
        if !(norm < 1.0 - CONTRACTION_MARGIN) {
            return Err(CmvError::ContractivityViolated { k, norm });
        }
        let m = alpha.nrows();
        let id = identity(m);
        let (v1, e1) = hermitian_eigen(&(&id - alpha.adjoint() * alpha));
        let (v2, e2) = hermitian_eigen(&(&id - alpha * alpha.adjoint()));
        Ok(SiteBlocks {
            k,
            alpha: alpha.clone(),
            alpha_adj: alpha.adjoint(),
            rho: hermitian_function(&v1, &e1, |x| x.max(0.0).sqrt()),
            rho_inv: hermitian_function(&v1, &e1, |x| 1.0 / x.sqrt()),
            rho_tilde: hermitian_function(&v2, &e2, |x| x.max(0.0).sqrt()),
            rho_tilde_inv: hermitian_function(&v2, &e2, |x| 1.0 / x.sqrt()),
        })
    }
}

/// Site blocks for a contiguous index range, shared across many spectral
/// parameters.
#[derive(Debug, Clone)]
pub struct SiteTable {
    lo: i64,
    sites: Vec<SiteBlocks>,
}

impl SiteTable {
    pub fn new(seq: &VerblunskySequence, lo: i64, hi: i64) -> Result<Self> {
        let sites = (lo..=hi).map(|k| seq.site(k)).collect::<Result<Vec<_>>>()?;
        Ok(SiteTable { lo, sites })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.sites.len() as i64 - 1
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        lo >= self.lo && hi <= self.hi()
    }

    pub fn get(&self, k: i64) -> &SiteBlocks {
        &self.sites[(k - self.lo) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBlock {
    pub k: i64,
    pub block: CMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub margins: Vec<(i64, f64)>,
    pub failures: Vec<i64>,
}

pub fn validate_arc(theta0: f64, theta1: f64) -> Result<()> {
    let ok = theta0.is_finite()
        && theta1.is_finite()
        && (0.0..TAU).contains(&theta0)
        && theta0 < theta1
        && theta1 <= theta0 + TAU;
    if ok {
        Ok(())
    } else {
        Err(CmvError::InvalidArc { theta0, theta1 })
    }
}

/// Borg sequence `α_k = g^k a γ` for the arc `(θ0, θ1)`.
pub fn borg_sequence(theta0: f64, theta1: f64, gamma: &CMatrix) -> Result<VerblunskySequence> {
    validate_arc(theta0, theta1)?;
    check_unitary(gamma, &Tolerances::default())?;
    VerblunskySequence::with_extension(
        gamma.nrows(),
        0,
        vec![],
        Extension::Borg { theta0, theta1, gamma: gamma.clone() },
    )
}

/// `β_k = γ1 α_k γ2*`, with the cut unitary transformed the same way.
pub fn conjugate_sequence(seq: &VerblunskySequence, g1: &CMatrix, g2: &CMatrix) -> Result<VerblunskySequence> {
    let tol = Tolerances::default();
    check_unitary(g1, &tol)?;
    check_unitary(g2, &tol)?;
    let g2a = g2.adjoint();
    let map = |a: &CMatrix| g1 * a * &g2a;
    let window = seq.window.iter().map(map).collect();
    let extension = match &seq.extension {
        Extension::Borg { theta0, theta1, gamma } => {
            Extension::Borg { theta0: *theta0, theta1: *theta1, gamma: map(gamma) }
        }
        e => e.clone(),
    };
    Ok(VerblunskySequence { m: seq.m, k_min: seq.k_min, window, extension, boundary: map(&seq.boundary) })
}

/// Gaussian matrix with independent standard complex entries.
pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed unitary (QR of a Gaussian matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMatrix {
    let g = random_gaussian(rng, m);
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..m {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..m {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random contraction with operator norm drawn uniformly from `[0, max_norm)`.
pub fn random_contraction<R: Rng + ?Sized>(rng: &mut R, m: usize, max_norm: f64) -> CMatrix {
    let g = random_gaussian(rng, m);
    let n = operator_norm(&g).max(1e-300);
    let target: f64 = rng.random::<f64>() * max_norm;
    g * c(target / n, 0.0)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Random arc with `θ0 ∈ [0, 2π)` and length in `[0.2, 2π − 0.2]`.
pub fn random_arc<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let t0 = rng.random::<f64>() * TAU;
    let len = 0.2 + rng.random::<f64>() * (TAU - 0.4);
    (t0, t0 + len)
}

// ---- serialization ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ExtensionDoc {
    Zero,
    Borg { theta0: f64, theta1: f64, gamma: Vec<[f64; 2]> },
    Periodic { period: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SequenceDoc {
    m: usize,
    k_min: i64,
    k_max: i64,
    alphas: Vec<Vec<[f64; 2]>>,
    extension: ExtensionDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<[f64; 2]>>,
}

/// Row-major `[re, im]` pairs.
pub fn matrix_to_pairs(a: &CMatrix) -> Vec<[f64; 2]> {
    let mut v = Vec::with_capacity(a.len());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            v.push([a[(i, j)].re, a[(i, j)].im]);
        }
    }
    v
}

pub fn matrix_from_pairs(m: usize, v: &[[f64; 2]]) -> Result<CMatrix> {
    if v.len() != m * m {
        return Err(CmvError::DimensionMismatch { expected: m * m, got: v.len() });
    }
    Ok(CMatrix::from_fn(m, m, |i, j| c(v[i * m + j][0], v[i * m + j][1])))
}

impl From<&VerblunskySequence> for SequenceDoc {
    fn from(s: &VerblunskySequence) -> Self {
        let extension = match &s.extension {
            Extension::Zero => ExtensionDoc::Zero,
            Extension::Borg { theta0, theta1, gamma } => {
                ExtensionDoc::Borg { theta0: *theta0, theta1: *theta1, gamma: matrix_to_pairs(gamma) }
            }
            Extension::Periodic { period } => ExtensionDoc::Periodic { period: *period },
        };
        let default_boundary = match &s.extension {
            Extension::Borg { gamma, .. } => gamma.clone(),
            _ => identity(s.m),
        };
        SequenceDoc {
            m: s.m,
            k_min: s.k_min,
            k_max: s.k_max(),
            alphas: s.window.iter().map(matrix_to_pairs).collect(),
            extension,
            boundary: (s.boundary != default_boundary).then(|| matrix_to_pairs(&s.boundary)),
        }
    }
}

impl TryFrom<SequenceDoc> for VerblunskySequence {
    type Error = CmvError;

    fn try_from(d: SequenceDoc) -> Result<Self> {
        if d.k_max - d.k_min + 1 != d.alphas.len() as i64 {
            return Err(CmvError::InvalidInput("k_max − k_min + 1 must equal the number of alphas".into()));
        }
        let window = d.alphas.iter().map(|a| matrix_from_pairs(d.m, a)).collect::<Result<Vec<_>>>()?;
        let extension = match d.extension {
            ExtensionDoc::Zero => Extension::Zero,
            ExtensionDoc::Borg { theta0, theta1, gamma } => {
                Extension::Borg { theta0, theta1, gamma: matrix_from_pairs(d.m, &gamma)? }
            }
            ExtensionDoc::Periodic { period } => Extension::Periodic { period },
        };
        let seq = VerblunskySequence::with_extension(d.m, d.k_min, window, extension)?;
        match d.boundary {
            Some(b) => seq.with_boundary_unitary(matrix_from_pairs(d.m, &b)?),
            None => Ok(seq),
        }
    }
}

/// `θ_* = (θ0 + θ1)/2 + π`.
pub fn theta_star(theta0: f64, theta1: f64) -> f64 {
    0.5 * (theta0 + theta1) + PI
}
