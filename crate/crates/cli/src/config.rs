use std::path::{Path, PathBuf};

use cmv_core::verblunsky::{check_unitary, matrix_from_pairs, matrix_to_pairs, random_contraction, random_unitary};
use cmv_core::linalg::identity;
use cmv_core::{borg_sequence, ArcSpec, CMatrix, Tolerances, VerblunskySequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Row-major `[re, im]` entries of an `m × m` block.
pub type Pairs = Vec<[f64; 2]>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m: usize,
    pub sequence: SequenceSpec,
    /// Added to the base coefficients, in order.
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    #[serde(default = "defaults::n_sites")]
    pub n_sites: usize,
    /// Sites used for boundary values of `M_{1,1}`; derived from `r_final` when absent.
    #[serde(default)]
    pub xi_sites: Option<usize>,
    #[serde(default)]
    pub k0: i64,
    #[serde(default = "defaults::grid_n")]
    pub grid_n: usize,
    #[serde(default = "defaults::r_final")]
    pub r_final: f64,
    #[serde(rename = "J", alias = "j", default = "defaults::j")]
    pub j: usize,
    /// Arc `[θ0, θ1]` for coverage and profile comparisons; a Borg sequence supplies its own.
    #[serde(default)]
    pub arc: Option<[f64; 2]>,
    #[serde(default)]
    pub tolerances: TolConfig,
    #[serde(default = "defaults::battery_sites")]
    pub battery_sites: Vec<i64>,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Free,
    Borg {
        theta0: f64,
        theta1: f64,
        #[serde(default)]
        gamma: GammaSpec,
    },
    Periodic {
        alphas: Vec<Pairs>,
        #[serde(default)]
        k_min: i64,
    },
    /// Explicit coefficients on `k_min..`, zero elsewhere.
    Window { alphas: Vec<Pairs>, k_min: i64 },
    /// Seeded random contractions on `k_min..k_min+len`, zero elsewhere.
    RandomWindow {
        k_min: i64,
        len: usize,
        #[serde(default = "defaults::max_norm")]
        max_norm: f64,
    },
    /// A sequence document as written by the library, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GammaSpec {
    Named(String),
    Matrix(Pairs),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Named("identity".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub k: i64,
    pub delta: Pairs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolConfig {
    pub trace: f64,
    pub xi: f64,
    pub battery: f64,
    pub resolvent: f64,
    pub identity: f64,
    pub invariance: f64,
    pub in_arc_min: f64,
    pub gap_ratio_max: f64,
    pub collar: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        TolConfig {
            trace: 5e-3,
            xi: 0.05,
            battery: 0.05,
            resolvent: 1e-8,
            identity: 1e-12,
            invariance: 1e-9,
            in_arc_min: 0.99,
            gap_ratio_max: 10.0,
            collar: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub pairs: usize,
    /// Spectral parameters as `[re, im]`.
    pub z: Vec<[f64; 2]>,
    pub pad: i64,
    /// Sites `(k, k')` are drawn from; the coefficient window when absent.
    pub k_range: Option<[i64; 2]>,
    /// Use the config `k0` as reference site for every pair instead of the pair midpoint.
    pub fixed_k0: bool,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        ResolventConfig { pairs: 20, z: vec![[0.5, 0.0], [0.3, 0.3]], pad: 60, k_range: None, fixed_k0: false }
    }
}

mod defaults {
    use std::path::PathBuf;

    pub fn n_sites() -> usize {
        512
    }
    pub fn grid_n() -> usize {
        4096
    }
    pub fn r_final() -> f64 {
        1.0 - 1e-3
    }
    pub fn j() -> usize {
        2
    }
    pub fn battery_sites() -> Vec<i64> {
        vec![0, 1]
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn max_norm() -> f64 {
        0.8
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_n: Option<usize>,
}

/// A validated config with its sequence built.
pub struct Resolved {
    /// The config as run: overrides applied, random `γ` written out.
    pub config: RunConfig,
    pub seq: VerblunskySequence,
    pub arc: Option<ArcSpec>,
    /// `γ` of a Borg sequence.
    pub gamma: Option<CMatrix>,
}

pub fn load(path: &Path, over: &Overrides) -> Result<Resolved, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    resolve(config, over, path.parent().unwrap_or(Path::new(".")))
}

fn pairs(m: usize, v: &[[f64; 2]], what: &str) -> Result<CMatrix, String> {
    matrix_from_pairs(m, v).map_err(|e| format!("{what}: {e}"))
}

pub fn resolve(mut config: RunConfig, over: &Overrides, base: &Path) -> Result<Resolved, String> {
    if let Some(o) = &over.out {
        config.out = o.clone();
    }
    if let Some(s) = over.seed {
        config.seed = s;
    }
    if let Some(g) = over.grid_n {
        config.grid_n = g;
    }
    validate(&config)?;

    let m = config.m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gamma = None;
    let mut seq = match &mut config.sequence {
        SequenceSpec::Free => VerblunskySequence::free(m),
        SequenceSpec::Borg { theta0, theta1, gamma: spec } => {
            let g = match spec {
                GammaSpec::Named(s) if s == "identity" => identity(m),
                GammaSpec::Named(s) if s == "random" => random_unitary(&mut rng, m),
                GammaSpec::Named(s) => return Err(format!("unknown gamma \"{s}\" (identity, random or a matrix)")),
                GammaSpec::Matrix(v) => pairs(m, v, "gamma")?,
            };
            check_unitary(&g, &Tolerances::default()).map_err(|e| format!("gamma: {e}"))?;
            if matches!(spec, GammaSpec::Named(s) if s == "random") {
                *spec = GammaSpec::Matrix(matrix_to_pairs(&g));
            }
            let seq = borg_sequence(*theta0, *theta1, &g).map_err(|e| e.to_string())?;
            gamma = Some(g);
            seq
        }
        SequenceSpec::Periodic { alphas, k_min } => {
            if alphas.is_empty() || alphas.len() % 2 != 0 {
                return Err("periodic sequence needs a nonempty even period".into());
            }
            let a = alphas.iter().map(|v| pairs(m, v, "alpha")).collect::<Result<Vec<_>, _>>()?;
            VerblunskySequence::periodic(m, *k_min, a).map_err(|e| e.to_string())?
        }
        SequenceSpec::Window { alphas, k_min } => {
            let a = alphas.iter().map(|v| pairs(m, v, "alpha")).collect::<Result<Vec<_>, _>>()?;
            VerblunskySequence::from_window(m, *k_min, a).map_err(|e| e.to_string())?
        }
        SequenceSpec::RandomWindow { k_min, len, max_norm } => {
            if !(*max_norm > 0.0 && *max_norm < 1.0) {
                return Err("max_norm must lie in (0, 1)".into());
            }
            let a = (0..*len).map(|_| random_contraction(&mut rng, m, *max_norm)).collect();
            VerblunskySequence::from_window(m, *k_min, a).map_err(|e| e.to_string())?
        }
        SequenceSpec::File { path } => {
            let p = base.join(&*path);
            let text = std::fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            let s = VerblunskySequence::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            if s.m() != m {
                return Err(format!("sequence file has m = {}, config has m = {m}", s.m()));
            }
            s
        }
    };
    for p in &config.perturbations {
        let d = pairs(m, &p.delta, "perturbation")?;
        seq = seq.perturbed(p.k, &d).map_err(|e| format!("perturbation at k = {}: {e}", p.k))?;
    }

    let arc = match (&config.arc, &config.sequence) {
        (Some([a, b]), _) => Some(ArcSpec::new(*a, *b).map_err(|e| e.to_string())?),
        (None, SequenceSpec::Borg { theta0, theta1, .. }) => {
            Some(ArcSpec::new(*theta0, *theta1).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    Ok(Resolved { config, seq, arc, gamma })
}

fn validate(c: &RunConfig) -> Result<(), String> {
    if c.m == 0 {
        return Err("m must be positive".into());
    }
    if !c.grid_n.is_power_of_two() || c.grid_n < 8 {
        return Err(format!("grid_n = {} must be a power of two ≥ 8", c.grid_n));
    }
    if !(c.r_final > 0.0 && c.r_final < 1.0) {
        return Err(format!("r_final = {} must lie in (0, 1)", c.r_final));
    }
    if c.n_sites < 4 || c.xi_sites.is_some_and(|n| n < 4) {
        return Err("site counts must be at least 4".into());
    }
    if c.j == 0 || c.j > 8 {
        return Err(format!("J = {} must lie in 1..=8", c.j));
    }
    if c.battery_sites.is_empty() {
        return Err("battery_sites must not be empty".into());
    }
    let t = &c.tolerances;
    let tols = [
        t.trace,
        t.xi,
        t.battery,
        t.resolvent,
        t.identity,
        t.invariance,
        t.in_arc_min,
        t.gap_ratio_max,
        t.collar,
    ];
    if tols.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err("all tolerances must be positive and finite".into());
    }
    if c.resolvent.z.iter().any(|[re, im]| {
        let r = re.hypot(*im);
        !(r > 0.0 && r < 1.0)
    }) {
        return Err("resolvent z values must satisfy 0 < |z| < 1".into());
    }
    if c.resolvent.k_range.is_some_and(|[a, b]| a > b) {
        return Err("resolvent k_range must be increasing".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> RunConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(r#"{"m": 2, "sequence": {"kind": "free"}}"#);
        assert_eq!((c.n_sites, c.grid_n, c.j, c.seed), (512, 4096, 2, 0));
        assert_eq!(c.out, PathBuf::from("out"));
        let r = resolve(c, &Overrides::default(), Path::new(".")).unwrap();
        assert!(r.arc.is_none());
    }

    #[test]
    fn random_gamma_is_recorded() {
        let c = parse(r#"{"m": 2, "sequence": {"kind": "borg", "theta0": 1.0, "theta1": 4.0, "gamma": "random"}}"#);
        let r = resolve(c, &Overrides { seed: Some(5), ..Default::default() }, Path::new(".")).unwrap();
        match &r.config.sequence {
            SequenceSpec::Borg { gamma: GammaSpec::Matrix(v), .. } => assert_eq!(v.len(), 4),
            s => panic!("{s:?}"),
        }
        assert_eq!(r.config.seed, 5);
        assert!(r.arc.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            r#"{"m": 2, "sequence": {"kind": "free"}, "grid_n": 1000}"#,
            r#"{"m": 2, "sequence": {"kind": "free"}, "r_final": 1.0}"#,
            r#"{"m": 2, "sequence": {"kind": "free"}, "tolerances": {"trace": 0.0}}"#,
            r#"{"m": 1, "sequence": {"kind": "borg", "theta0": 1.0, "theta1": 4.0, "gamma": "weird"}}"#,
            r#"{"m": 1, "sequence": {"kind": "window", "k_min": 0, "alphas": [[[1.0, 0.0]]]}}"#,
        ];
        for s in bad {
            assert!(resolve(parse(s), &Overrides::default(), Path::new(".")).is_err(), "{s}");
        }
        assert!(serde_json::from_str::<RunConfig>(r#"{"m": 1, "sequence": {"kind": "free"}, "typo": 1}"#).is_err());
    }
}
