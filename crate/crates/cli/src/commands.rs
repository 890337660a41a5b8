use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cmv_core::analysis::{
    borg_trace_rhs, borg_verify, borg_xi, coverage, default_sites, reflectionless_check, spectral_measure,
    trace_check, xi_of_operator_with_sites, BatteryOptions, BorgVerifyOptions, CoverageStats,
};
use cmv_core::herglotz::write_matrix_csv;
use cmv_core::verblunsky::Extension;
use cmv_core::weyl::resolvent_formula_check;
use cmv_core::{c as cx, ArcSpec, CmvError, CmvTruncation, RadialSchedule, ThetaGrid, Tolerances};
use cmv_core::linalg::{identity, operator_norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Resolved, RunConfig, SequenceSpec};

/// Why a command stopped before reaching a verdict.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(s) => write!(f, "config error: {s}"),
            Failure::Numerical(s) => write!(f, "numerical failure: {s}"),
        }
    }
}

fn lib<T>(r: cmv_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        CmvError::InvalidInput(_)
        | CmvError::InvalidArc { .. }
        | CmvError::InvalidRange(_)
        | CmvError::DimensionMismatch { .. }
        | CmvError::ContractivityViolated { .. }
        | CmvError::TooCloseToBoundary { .. } => Failure::Config(e.to_string()),
        e => Failure::Numerical(e.to_string()),
    })
}

fn io<T>(r: std::io::Result<T>, path: &Path) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Named pass flags, emitted as a JSON object in insertion order.
struct Checks<'a>(&'a [(String, bool)]);

impl Serialize for Checks<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    pass: bool,
    checks: Checks<'a>,
    #[serde(flatten)]
    report: &'a T,
    config: &'a RunConfig,
}

struct Sink<'a> {
    dir: &'a Path,
    command: &'a str,
    config: &'a RunConfig,
}

impl Sink<'_> {
    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.dir.join(name);
        Ok(BufWriter::new(io(File::create(&p), &p)?))
    }

    fn json<T: Serialize>(&self, name: &str, checks: &[(String, bool)], report: &T) -> Result<bool, Failure> {
        let pass = checks.iter().all(|(_, ok)| *ok);
        // the envelope owns the verdict keys
        let mut report = serde_json::to_value(report).map_err(|e| Failure::Numerical(e.to_string()))?;
        if let Some(obj) = report.as_object_mut() {
            obj.remove("checks");
            obj.remove("pass");
        }
        let report = &report;
        let env = Envelope { schema: 1, command: self.command, pass, checks: Checks(checks), report, config: self.config };
        let text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Numerical(e.to_string()))?;
        let mut f = self.create(name)?;
        let p = self.dir.join(name);
        io(writeln!(f, "{text}").and_then(|_| f.flush()), &p)?;
        Ok(pass)
    }

    fn rows<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r).map_err(|e| Failure::Config(e.to_string()))?;
        }
        w.flush().map_err(|e| Failure::Config(e.to_string()))
    }

    fn matrices(&self, name: &str, thetas: &[f64], values: &[cmv_core::CMatrix]) -> Result<(), Failure> {
        lib(write_matrix_csv(self.create(name)?, thetas, values))
    }

    fn angles(&self, angles: &[f64]) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Row {
            index: usize,
            theta: f64,
        }
        self.rows("eigenangles.csv", angles.iter().enumerate().map(|(index, &theta)| Row { index, theta }))
    }
}

pub fn run(command: &str, r: &Resolved) -> Result<bool, Failure> {
    let dir = r.config.out.as_path();
    io(std::fs::create_dir_all(dir), dir)?;
    let sink = Sink { dir, command, config: &r.config };
    match command {
        "spectrum" => spectrum(r, &sink),
        "trace" => trace(r, &sink),
        "xi" => xi(r, &sink),
        "reflectionless" => reflectionless(r, &sink),
        "borg-verify" => borg(r, &sink),
        "resolvent-check" => resolvent(r, &sink),
        other => Err(Failure::Config(format!("unknown command {other}"))),
    }
}

fn xi_sites(c: &RunConfig) -> usize {
    c.xi_sites.unwrap_or_else(|| default_sites(c.r_final))
}

fn spectrum(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    #[derive(Serialize)]
    struct Summary {
        arc: ArcSpec,
        site_range: (i64, i64),
        dim: usize,
        #[serde(flatten)]
        coverage: CoverageStats,
        mass_deviation: f64,
    }
    let c = &r.config;
    let t = lib(CmvTruncation::centered(&r.seq, c.k0, c.n_sites))?;
    let sd = lib(spectral_measure(&t, c.k0, &Tolerances::default()))?;
    let arc = r.arc.unwrap_or_else(ArcSpec::full_circle);
    let cov = coverage(&sd.angles, &arc, c.tolerances.collar, 0.2);
    let mass_deviation = operator_norm(&(sd.total_mass() - identity(c.m)));
    sink.angles(&sd.angles)?;
    sink.matrices("measure.csv", &sd.angles, &sd.weights)?;
    let checks = vec![
        ("in_arc_fraction".to_string(), cov.in_arc_fraction >= c.tolerances.in_arc_min),
        ("total_mass".to_string(), mass_deviation <= 1e-8),
    ];
    let summary = Summary { arc, site_range: t.site_range(), dim: t.dim(), coverage: cov, mass_deviation };
    sink.json("summary.json", &checks, &summary)
}

fn trace(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    #[derive(Serialize)]
    struct Report {
        n_sites: usize,
        grid_n: usize,
        trace: cmv_core::TraceReport,
        /// `‖L_j − closed-form value‖` when an arc is known.
        closed_form_deviations: Option<Vec<f64>>,
    }
    let c = &r.config;
    let n_sites = xi_sites(c);
    let grid = ThetaGrid::new(c.grid_n);
    let trace = lib(trace_check(&r.seq, c.k0, c.j, grid, &RadialSchedule::single(c.r_final), n_sites))?;
    let closed_form_deviations = r.arc.map(|arc| {
        (1..=c.j)
            .map(|j| operator_norm(&(&trace.lhs[j - 1] - borg_trace_rhs(&arc, j as i64, c.m))))
            .collect()
    });
    let checks = vec![("trace".to_string(), trace.max_deviation() <= c.tolerances.trace)];
    sink.json("trace_report.json", &checks, &Report { n_sites, grid_n: c.grid_n, trace, closed_form_deviations })
}

fn xi(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    #[derive(Serialize)]
    struct Report {
        n_sites: usize,
        grid_n: usize,
        r: f64,
        normalization: f64,
        bound_excess: f64,
        skipped: usize,
        /// Largest `‖Ξ − Ξ_arc‖` away from the arc endpoints.
        xi_max_deviation: Option<f64>,
    }
    let c = &r.config;
    let n_sites = xi_sites(c);
    let grid = ThetaGrid::new(c.grid_n);
    let xi = lib(xi_of_operator_with_sites(&r.seq, c.k0, grid, &RadialSchedule::single(c.r_final), n_sites))?;
    lib(xi.write_csv(sink.create("xi.csv")?))?;
    let normalization = operator_norm(&xi.mean());
    let mut checks = vec![("xi_normalization".to_string(), normalization < 1e-2)];
    let xi_max_deviation = match r.arc {
        Some(arc) => {
            let closed = borg_xi(&arc, grid, c.m);
            lib(closed.write_csv(sink.create("xi_closed.csv")?))?;
            let dev = xi
                .values
                .iter()
                .enumerate()
                .filter(|(j, _)| arc.distance_to_jumps(grid.theta(*j)) >= c.tolerances.collar)
                .map(|(j, v)| operator_norm(&(v - identity(c.m) * cx(arc.xi_value(grid.theta(j)), 0.0))))
                .fold(0.0, f64::max);
            checks.push(("xi_profile".to_string(), dev <= c.tolerances.xi));
            Some(dev)
        }
        None => None,
    };
    let report = Report {
        n_sites,
        grid_n: c.grid_n,
        r: xi.r,
        normalization,
        bound_excess: xi.bound_excess(),
        skipped: xi.skipped.len(),
        xi_max_deviation,
    };
    sink.json("xi_report.json", &checks, &report)
}

fn reflectionless(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    let c = &r.config;
    let arc = r.arc.unwrap_or_else(ArcSpec::full_circle);
    let opts = BatteryOptions { ks: c.battery_sites.clone(), collar: c.tolerances.collar, ..BatteryOptions::default() };
    let rep = lib(reflectionless_check(&r.seq, &arc, ThetaGrid::new(c.grid_n), c.r_final, c.tolerances.battery, &opts))?;
    sink.rows("battery.csv", &rep.rows)?;
    let checks = vec![
        ("v".to_string(), rep.pass_v),
        ("vii".to_string(), rep.pass_vii),
        ("ix".to_string(), rep.pass_ix),
    ];
    sink.json("reflectionless_report.json", &checks, &rep)
}

fn borg(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    let c = &r.config;
    let (SequenceSpec::Borg { theta0, theta1, .. }, Some(gamma)) = (&c.sequence, &r.gamma) else {
        return Err(Failure::Config("borg-verify needs a borg sequence".into()));
    };
    if !c.perturbations.is_empty() {
        return Err(Failure::Config("borg-verify does not take perturbations".into()));
    }
    let arc = lib(ArcSpec::new(*theta0, *theta1))?;
    let t = &c.tolerances;
    let opts = BorgVerifyOptions {
        n_sites: c.n_sites,
        grid: ThetaGrid::new(c.grid_n),
        r: c.r_final,
        xi_sites: c.xi_sites,
        k0: c.k0,
        trace_orders: c.j,
        collar: t.collar,
        identity_tol: t.identity,
        xi_tol: t.xi,
        trace_tol: t.trace,
        invariance_tol: t.invariance,
        in_arc_min: t.in_arc_min,
        gap_ratio_max: t.gap_ratio_max,
    };
    let rep = lib(borg_verify(&arc, gamma, &opts))?;
    sink.angles(&rep.angles)?;
    lib(rep.xi.write_csv(sink.create("xi.csv")?))?;
    sink.json("borg_report.json", &rep.checks, &rep)
}

fn resolvent(r: &Resolved, sink: &Sink) -> Result<bool, Failure> {
    #[derive(Serialize, Clone, Copy)]
    struct Row {
        z_re: f64,
        z_im: f64,
        k: i64,
        kp: i64,
        k0: i64,
        deviation: f64,
        upper_branch: bool,
    }
    #[derive(Serialize)]
    struct Report {
        k_range: (i64, i64),
        max_deviation: f64,
        upper_branch_count: usize,
        lower_branch_count: usize,
    }
    let c = &r.config;
    if !matches!(r.seq.extension(), Extension::Zero) {
        return Err(Failure::Config("resolvent-check needs a sequence that is zero outside a window".into()));
    }
    let (lo, hi) = match c.resolvent.k_range {
        Some([a, b]) => (a, b),
        None if r.seq.window().is_empty() => (-8, 8),
        None => (r.seq.k_min(), r.seq.k_max()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(1);
    let mut rows = Vec::new();
    for &[re, im] in &c.resolvent.z {
        for _ in 0..c.resolvent.pairs {
            let (k, kp) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            let k0 = if c.resolvent.fixed_k0 { c.k0 } else { (k + kp).div_euclid(2) };
            let chk = lib(resolvent_formula_check(&r.seq, cx(re, im), k, kp, k0, c.resolvent.pad))?;
            rows.push(Row { z_re: re, z_im: im, k, kp, k0, deviation: chk.deviation, upper_branch: chk.upper_branch });
        }
    }
    sink.rows("resolvent.csv", &rows)?;
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let upper = rows.iter().filter(|r| r.upper_branch).count();
    let report = Report {
        k_range: (lo, hi),
        max_deviation,
        upper_branch_count: upper,
        lower_branch_count: rows.len() - upper,
    };
    let checks = vec![("resolvent".to_string(), max_deviation < c.tolerances.resolvent)];
    sink.json("resolvent_report.json", &checks, &report)
}
