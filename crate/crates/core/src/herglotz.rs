//! Caratheodory and Schur functions on the unit disk.
//!
//! Evaluators are cheap shared closures, so the same function can be backed by
//! a truncation resolvent, a closed form or a Poisson integral and passed
//! through Cayley transforms, Stieltjes inversion and the exponential Herglotz
//! decomposition without caring which.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CmvError, Result};
use crate::linalg::{
    c, hermitian_eigen, hermitian_function, identity, im_part, left_divide, operator_norm, principal_log,
    re_part, right_divide, try_inverse, CMatrix, Tolerances, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Caratheodory,
    AntiCaratheodory,
}

/// Where an evaluator's values come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    TruncationResolvent { k0: i64, k_l: i64, k_r: i64 },
    ClosedForm { id: String },
    PoissonOf { atoms: usize },
    SchurPair { k0: i64 },
    Derived { from: Box<Provenance>, op: String },
}

type EvalFn = dyn Fn(C64) -> Result<CMatrix> + Send + Sync;

/// Matrix function `z ↦ F(z)` on the disk.
#[derive(Clone)]
pub struct CaratheodoryEval {
    m: usize,
    f: Arc<EvalFn>,
    pub provenance: Provenance,
    pub orientation: Orientation,
}

impl std::fmt::Debug for CaratheodoryEval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaratheodoryEval")
            .field("m", &self.m)
            .field("provenance", &self.provenance)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl CaratheodoryEval {
    pub fn new(
        m: usize,
        provenance: Provenance,
        orientation: Orientation,
        f: impl Fn(C64) -> Result<CMatrix> + Send + Sync + 'static,
    ) -> Self {
        CaratheodoryEval { m, f: Arc::new(f), provenance, orientation }
    }

    pub fn closed_form(m: usize, id: &str, f: impl Fn(C64) -> Result<CMatrix> + Send + Sync + 'static) -> Self {
        Self::new(m, Provenance::ClosedForm { id: id.to_string() }, Orientation::Caratheodory, f)
    }

    /// `F ≡ I`.
    pub fn identity(m: usize) -> Self {
        Self::closed_form(m, "identity", move |_| Ok(identity(m)))
    }

    /// `M_{1,1}(z, k0) = I + 2z (U − z)^{-1}(k0, k0)` of a truncation.
    pub fn truncation_m11(t: Arc<crate::cmv::CmvTruncation>, k0: i64) -> Self {
        let (k_l, k_r) = t.site_range();
        let m = t.m();
        Self::new(
            m,
            Provenance::TruncationResolvent { k0, k_l, k_r },
            Orientation::Caratheodory,
            move |z| t.m11(z, k0),
        )
    }

    /// Poisson integral of a measure plus `iC`.
    pub fn poisson(measure: Arc<MatrixCircleMeasure>, cst: CMatrix) -> Self {
        let atoms = measure.len();
        Self::new(measure.m, Provenance::PoissonOf { atoms }, Orientation::Caratheodory, move |z| {
            Ok(poisson_integral(&measure, &cst, z))
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, z: C64) -> Result<CMatrix> {
        (self.f)(z)
    }

    /// `−F` with the orientation flipped.
    pub fn negated(&self) -> Self {
        let f = self.f.clone();
        let orientation = match self.orientation {
            Orientation::Caratheodory => Orientation::AntiCaratheodory,
            Orientation::AntiCaratheodory => Orientation::Caratheodory,
        };
        CaratheodoryEval {
            m: self.m,
            f: Arc::new(move |z| Ok(-f(z)?)),
            provenance: Provenance::Derived { from: Box::new(self.provenance.clone()), op: "negate".into() },
            orientation,
        }
    }
}

/// Schur function `Φ`, or its inverse `Φ^{-1}` when `inverse` is set (the
/// natural object for anti-Caratheodory inputs).
#[derive(Clone)]
pub struct SchurEval {
    m: usize,
    f: Arc<EvalFn>,
    pub inverse: bool,
}

impl SchurEval {
    pub fn new(m: usize, inverse: bool, f: impl Fn(C64) -> Result<CMatrix> + Send + Sync + 'static) -> Self {
        SchurEval { m, f: Arc::new(f), inverse }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, z: C64) -> Result<CMatrix> {
        (self.f)(z)
    }
}

/// `Φ = (F − I)(F + I)^{-1}`, or `Φ^{-1} = (F + I)(F − I)^{-1}` for
/// anti-Caratheodory `F`.
pub fn cayley_to_schur(f: &CaratheodoryEval) -> SchurEval {
    let g = f.f.clone();
    let m = f.m;
    let anti = f.orientation == Orientation::AntiCaratheodory;
    SchurEval::new(m, anti, move |z| {
        let v = g(z)?;
        let id = identity(m);
        let (num, den) = if anti { (&v + &id, &v - &id) } else { (&v - &id, &v + &id) };
        right_divide(&num, &den).ok_or(CmvError::SingularPivot)
    })
}

/// `F = (I + Φ)(I − Φ)^{-1}`, or `F = (Ψ + I)(Ψ − I)^{-1}` for `Ψ = Φ^{-1}`.
pub fn schur_to_cayley(phi: &SchurEval) -> CaratheodoryEval {
    let g = phi.f.clone();
    let m = phi.m;
    let inverse = phi.inverse;
    let orientation = if inverse { Orientation::AntiCaratheodory } else { Orientation::Caratheodory };
    CaratheodoryEval::new(
        m,
        Provenance::ClosedForm { id: "cayley".into() },
        orientation,
        move |z| cayley_value(&g(z)?, inverse),
    )
}

/// Pointwise Cayley transform of a Schur (or inverse-Schur) value.
pub fn cayley_value(phi: &CMatrix, inverse: bool) -> Result<CMatrix> {
    let id = identity(phi.nrows());
    let (num, den) = if inverse { (phi + &id, phi - &id) } else { (&id + phi, &id - phi) };
    right_divide(&num, &den).ok_or(CmvError::SingularPivot)
}

/// `−F(1/z̄)*` for `|z| > 1`.
pub fn reflect(f: &CaratheodoryEval, z: C64) -> Result<CMatrix> {
    let w = 1.0 / z.conj();
    Ok(-f.eval(w)?.adjoint())
}

/// Scalar evaluator `z ↦ x0* F(z) x0`.
pub fn localize_scalar(f: &CaratheodoryEval, x0: &[C64]) -> CaratheodoryEval {
    let g = f.f.clone();
    let x: Vec<C64> = x0.to_vec();
    CaratheodoryEval {
        m: 1,
        f: Arc::new(move |z| {
            let v = g(z)?;
            let mut s = c(0.0, 0.0);
            for i in 0..x.len() {
                for j in 0..x.len() {
                    s += x[i].conj() * v[(i, j)] * x[j];
                }
            }
            Ok(CMatrix::from_element(1, 1, s))
        }),
        provenance: Provenance::Derived { from: Box::new(f.provenance.clone()), op: "localize".into() },
        orientation: f.orientation,
    }
}

/// Uniform grid of `n` cells; cell `j` is `[offset + jh, offset + (j+1)h)` with
/// `h = 2π/n`, sampled at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaGrid {
    pub n: usize,
    pub offset: f64,
}

impl ThetaGrid {
    pub fn new(n: usize) -> Self {
        ThetaGrid { n, offset: 0.0 }
    }

    pub fn with_offset(n: usize, offset: f64) -> Self {
        ThetaGrid { n, offset }
    }

    pub fn h(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.offset + (j as f64 + 0.5) * self.h()
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.theta(j)).collect()
    }
}

/// Radii approaching the circle; the last one is used for boundary values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialSchedule {
    pub radii: Vec<f64>,
}

impl Default for RadialSchedule {
    fn default() -> Self {
        Self::ending_at(1.0 - 1e-3)
    }
}

impl RadialSchedule {
    /// `1 − 2^{-q}` below `r_final`, then `r_final`.
    pub fn ending_at(r_final: f64) -> Self {
        let mut radii: Vec<f64> = (1..=30).map(|q| 1.0 - 0.5f64.powi(q)).take_while(|&r| r < r_final).collect();
        radii.push(r_final);
        RadialSchedule { radii }
    }

    pub fn single(r: f64) -> Self {
        RadialSchedule { radii: vec![r] }
    }

    pub fn final_radius(&self) -> f64 {
        *self.radii.last().expect("empty schedule")
    }

    pub fn previous_radius(&self) -> Option<f64> {
        (self.radii.len() >= 2).then(|| self.radii[self.radii.len() - 2])
    }
}

/// Nonnegative matrix-valued measure on the circle, stored as atoms.
/// Grid measures put one atom per cell at its centre.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCircleMeasure {
    pub m: usize,
    pub thetas: Vec<f64>,
    pub weights: Vec<CMatrix>,
    pub grid: Option<ThetaGrid>,
}

impl MatrixCircleMeasure {
    pub fn atoms(m: usize, thetas: Vec<f64>, weights: Vec<CMatrix>) -> Self {
        MatrixCircleMeasure { m, thetas, weights, grid: None }
    }

    pub fn from_grid(grid: ThetaGrid, weights: Vec<CMatrix>) -> Self {
        let m = weights.first().map(|w| w.nrows()).unwrap_or(0);
        MatrixCircleMeasure { m, thetas: grid.thetas(), weights, grid: Some(grid) }
    }

    /// `dμ0 · I` sampled on a grid.
    pub fn lebesgue(grid: ThetaGrid, m: usize) -> Self {
        let w = identity(m) * c(1.0 / grid.n as f64, 0.0);
        Self::from_grid(grid, vec![w; grid.n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> CMatrix {
        self.weights.iter().fold(CMatrix::zeros(self.m, self.m), |a, w| a + w)
    }

    /// `∮ conj(ζ)^p dΩ`.
    pub fn moment(&self, p: i64) -> CMatrix {
        let mut s = CMatrix::zeros(self.m, self.m);
        for (t, w) in self.thetas.iter().zip(&self.weights) {
            s += w * C64::from_polar(1.0, -(p as f64) * t);
        }
        s
    }

    /// Mass of the measure on the set where `inside(θ)` holds.
    pub fn mass_where(&self, inside: impl Fn(f64) -> bool) -> CMatrix {
        let mut s = CMatrix::zeros(self.m, self.m);
        for (t, w) in self.thetas.iter().zip(&self.weights) {
            if inside(*t) {
                s += w;
            }
        }
        s
    }

    /// Smallest eigenvalue over all weights.
    pub fn min_weight_eigenvalue(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| hermitian_eigen(w).0.first().copied().unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `iC + ∮ dΩ(ζ) (ζ + z)/(ζ − z)`.
pub fn poisson_integral(measure: &MatrixCircleMeasure, cst: &CMatrix, z: C64) -> CMatrix {
    let mut s = cst * c(0.0, 1.0);
    for (t, w) in measure.thetas.iter().zip(&measure.weights) {
        let zeta = C64::from_polar(1.0, *t);
        s += w * ((zeta + z) / (zeta - z));
    }
    s
}

/// Output of [`stieltjes_invert`].
#[derive(Debug, Clone)]
pub struct StieltjesResult {
    pub measure: MatrixCircleMeasure,
    pub radius: f64,
    /// Total size of negative eigenvalues removed by the PSD projection.
    pub clipped_mass: f64,
    /// `‖total mass − Re F(0)‖`.
    pub mass_defect: f64,
}

/// Cell weights `(1/n) Re F(r ζ_j)` at the final radius, projected onto PSD.
pub fn stieltjes_invert(
    f: &CaratheodoryEval,
    grid: ThetaGrid,
    schedule: &RadialSchedule,
    tol: &Tolerances,
) -> Result<StieltjesResult> {
    if f.orientation != Orientation::Caratheodory {
        return Err(CmvError::InvalidInput("Stieltjes inversion needs a Caratheodory function".into()));
    }
    let r = schedule.final_radius();
    let scale = 1.0 / grid.n as f64;
    let raw: Vec<CMatrix> = (0..grid.n)
        .into_par_iter()
        .map(|j| f.eval(C64::from_polar(r, grid.theta(j))).map(|v| re_part(&v) * c(scale, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let mut clipped = 0.0;
    let weights: Vec<CMatrix> = raw
        .iter()
        .map(|w| {
            let (vals, vecs) = hermitian_eigen(w);
            clipped += vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>();
            hermitian_function(&vals, &vecs, |x| x.max(0.0))
        })
        .collect();
    let measure = MatrixCircleMeasure::from_grid(grid, weights);
    let defect = operator_norm(&(measure.total_mass() - re_part(&f.eval(c(0.0, 0.0))?)));
    if defect > tol.mass {
        return Err(CmvError::ScheduleTooCoarse { defect });
    }
    Ok(StieltjesResult { measure, radius: r, clipped_mass: clipped, mass_defect: defect })
}

/// Grid samples of a Hermitian phase function `Ξ`.
#[derive(Debug, Clone, Serialize)]
pub struct XiProfile {
    pub grid: ThetaGrid,
    pub r: f64,
    #[serde(skip)]
    pub values: Vec<CMatrix>,
    /// Grid points where the logarithm was undefined; their values are zero.
    pub skipped: Vec<usize>,
}

impl XiProfile {
    pub fn m(&self) -> usize {
        self.values.first().map(|v| v.nrows()).unwrap_or(0)
    }

    /// Largest amount by which `Ξ` leaves `[−π/2, π/2]`.
    pub fn bound_excess(&self) -> f64 {
        self.values
            .iter()
            .map(|v| {
                let (vals, _) = hermitian_eigen(v);
                vals.iter().map(|x| x.abs() - FRAC_PI_2).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∮ Ξ dμ0`.
    pub fn mean(&self) -> CMatrix {
        circle_quadrature(&self.values)
    }

    /// `∮ Ξ(ζ) conj(ζ)^j dμ0`, integrating `e^{−ijθ}` exactly over each cell
    /// (exact for profiles constant on cells).
    pub fn fourier_coefficient(&self, j: i64) -> CMatrix {
        let h = self.grid.h();
        let x = 0.5 * j as f64 * h;
        let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
        let mut s = CMatrix::zeros(self.m(), self.m());
        for (i, v) in self.values.iter().enumerate() {
            s += v * C64::from_polar(sinc, -(j as f64) * self.grid.theta(i));
        }
        s / c(self.grid.n as f64, 0.0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, &self.grid.thetas(), &self.values)
    }
}

/// Midpoint rule `(1/n) Σ f_j` on a uniform grid.
pub fn circle_quadrature(values: &[CMatrix]) -> CMatrix {
    let n = values.len();
    let m = values.first().map(|v| v.nrows()).unwrap_or(0);
    values.iter().fold(CMatrix::zeros(m, m), |a, v| a + v) / c(n.max(1) as f64, 0.0)
}

/// Result of [`exp_herglotz`].
#[derive(Debug, Clone)]
pub struct ExpHerglotz {
    /// `−Re ln F(0)`.
    pub d: CMatrix,
    pub xi: XiProfile,
}

/// `D = −Re ln F(0)` and `Ξ(θ) = Im ln F(r e^{iθ})` at the final radius.
pub fn exp_herglotz(f: &CaratheodoryEval, grid: ThetaGrid, schedule: &RadialSchedule) -> Result<ExpHerglotz> {
    let f0 = f.eval(c(0.0, 0.0))?;
    if try_inverse(&f0).is_none() {
        return Err(CmvError::NonInvertible);
    }
    let d = -re_part(&principal_log(&f0).map_err(|_| CmvError::LogDomainViolation { index: usize::MAX })?);
    let r = schedule.final_radius();
    let m = f.m();
    let samples: Vec<Result<Option<CMatrix>>> = (0..grid.n)
        .into_par_iter()
        .map(|j| {
            let v = f.eval(C64::from_polar(r, grid.theta(j)))?;
            Ok(principal_log(&v).ok().map(|l| im_part(&l)))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.n);
    let mut skipped = Vec::new();
    for (j, s) in samples.into_iter().enumerate() {
        match s? {
            Some(v) => values.push(v),
            None => {
                skipped.push(j);
                values.push(CMatrix::zeros(m, m));
            }
        }
    }
    Ok(ExpHerglotz { d, xi: XiProfile { grid, r, values, skipped } })
}

/// CSV with a `theta` column followed by row-major `re_i_j, im_i_j` columns.
pub fn write_matrix_csv<W: Write>(out: W, thetas: &[f64], values: &[CMatrix]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = values.first().map(|v| v.nrows()).unwrap_or(0);
    let mut header = vec!["theta".to_string()];
    for i in 0..m {
        for j in 0..m {
            header.push(format!("re_{i}_{j}"));
            header.push(format!("im_{i}_{j}"));
        }
    }
    w.write_record(&header)?;
    for (t, v) in thetas.iter().zip(values) {
        let mut row = vec![format!("{t:e}")];
        for i in 0..m {
            for j in 0..m {
                row.push(format!("{:e}", v[(i, j)].re));
                row.push(format!("{:e}", v[(i, j)].im));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back [`write_matrix_csv`] output.
pub fn read_matrix_csv(text: &str) -> Result<(Vec<f64>, Vec<CMatrix>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = r.headers()?.len();
    let m = (((cols - 1) / 2) as f64).sqrt().round() as usize;
    let mut thetas = vec![];
    let mut values = vec![];
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| CmvError::InvalidInput(e.to_string()))
        };
        thetas.push(num(0)?);
        let mut v = CMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let k = 1 + 2 * (i * m + j);
                v[(i, j)] = c(num(k)?, num(k + 1)?);
            }
        }
        values.push(v);
    }
    Ok((thetas, values))
}

/// `(F(z) − F(0))`-based Taylor coefficients `c_p` of `F(z) = F(0) + Σ c_p z^p`,
/// computed by a discrete Fourier sum on the circle of radius `rho`.
pub fn taylor_coefficients(f: &CaratheodoryEval, rho: f64, n: usize, pmax: usize) -> Result<Vec<CMatrix>> {
    let vals: Vec<CMatrix> = (0..n)
        .into_par_iter()
        .map(|j| f.eval(C64::from_polar(rho, TAU * j as f64 / n as f64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=pmax)
        .map(|p| {
            let mut s = CMatrix::zeros(f.m(), f.m());
            for (j, v) in vals.iter().enumerate() {
                s += v * C64::from_polar(1.0, -TAU * (p * j) as f64 / n as f64);
            }
            s / c(n as f64 * rho.powi(p as i32), 0.0)
        })
        .collect())
}

/// Solves `A X = B`; exposed for callers composing Schur values.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    left_divide(a, b).ok_or(CmvError::SingularPivot)
}
