use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

const HALF: [f64; 2] = [std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI];

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
}

fn cmv(dir: &Path, command: &str, config: Value, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{command}.json"));
    std::fs::write(&cfg, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = dir.join(format!("out-{command}"));
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = Command::new(env!("CARGO_BIN_EXE_cmv")).args(&args).output().unwrap();
    Run { code: o.status.code().unwrap(), out, stderr: String::from_utf8_lossy(&o.stderr).into_owned() }
}

fn cplx(re: f64, im: f64) -> cmv_core::CMatrix {
    cmv_core::CMatrix::from_element(1, 1, cmv_core::c(re, im))
}

fn report(run: &Run, name: &str) -> Value {
    let text = std::fs::read_to_string(run.out.join(name)).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], 1);
    v
}

fn borg_config(m: usize, gamma: &str) -> Value {
    json!({"m": m, "sequence": {"kind": "borg", "theta0": HALF[0], "theta1": HALF[1], "gamma": gamma}})
}

fn set(mut v: Value, key: &str, x: Value) -> Value {
    v.as_object_mut().unwrap().insert(key.into(), x);
    v
}

#[test]
fn free_spectrum_fills_circle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"m": 2, "sequence": {"kind": "free"}, "n_sites": 128});
    let run = cmv(dir.path(), "spectrum", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = report(&run, "summary.json");
    assert_eq!(s["in_arc_fraction"], 1.0);
    assert_eq!(s["pass"], true);
    assert_eq!(s["count"], 256);
    for f in ["eigenangles.csv", "measure.csv"] {
        assert!(run.out.join(f).exists(), "{f}");
    }
    let rows = std::fs::read_to_string(run.out.join("eigenangles.csv")).unwrap();
    assert_eq!(rows.lines().count(), 257);
}

#[test]
fn borg_spectrum_sits_on_arc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set(borg_config(2, "random"), "n_sites", json!(256));
    let run = cmv(dir.path(), "spectrum", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = report(&run, "summary.json");
    assert!(s["in_arc_fraction"].as_f64().unwrap() >= 0.99);
    // a random γ is written out in the echoed config
    assert!(s["config"]["sequence"]["gamma"].is_array());
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set(borg_config(2, "random"), "n_sites", json!(64));
    let a = cmv(dir.path(), "spectrum", cfg.clone(), &["--seed", "11"]);
    let first: Vec<Vec<u8>> = ["summary.json", "eigenangles.csv", "measure.csv"]
        .iter()
        .map(|f| std::fs::read(a.out.join(f)).unwrap())
        .collect();
    let b = cmv(dir.path(), "spectrum", cfg.clone(), &["--seed", "11"]);
    for (f, bytes) in ["summary.json", "eigenangles.csv", "measure.csv"].iter().zip(&first) {
        assert_eq!(&std::fs::read(b.out.join(f)).unwrap(), bytes, "{f}");
    }
    let c = cmv(dir.path(), "spectrum", cfg, &["--seed", "12"]);
    assert_ne!(std::fs::read(c.out.join("summary.json")).unwrap(), first[0]);
}

#[test]
fn free_trace_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"m": 2, "sequence": {"kind": "free"}, "J": 4, "grid_n": 256, "r_final": 0.95, "xi_sites": 512});
    let run = cmv(dir.path(), "trace", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let t = report(&run, "trace_report.json");
    let devs = t["trace"]["deviations"].as_array().unwrap();
    assert_eq!(devs.len(), 4);
    assert!(devs.iter().all(|d| d.as_f64().unwrap() < 1e-10));
}

#[test]
fn borg_xi_matches_step_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "m": 1, "sequence": borg_config(1, "identity")["sequence"],
        "grid_n": 1024, "r_final": 0.99, "tolerances": {"collar": 0.25, "xi": 0.1}
    });
    let run = cmv(dir.path(), "xi", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let x = report(&run, "xi_report.json");
    assert!(x["xi_max_deviation"].as_f64().unwrap() < 0.1);
    assert!(x["normalization"].as_f64().unwrap() < 1e-2);
    let rows = std::fs::read_to_string(run.out.join("xi_closed.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1025);
}

#[test]
fn battery_passes_on_borg_and_fails_when_perturbed() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!({
        "m": 1, "sequence": borg_config(1, "identity")["sequence"],
        "grid_n": 64, "battery_sites": [0, 3]
    });
    let good = cmv(dir.path(), "reflectionless", base.clone(), &[]);
    assert_eq!(good.code, 0, "{}", good.stderr);
    assert!(good.out.join("battery.csv").exists());

    let bad = set(base, "perturbations", json!([{"k": 0, "delta": [[0.0, 0.3]]}]));
    let dir2 = tempfile::tempdir().unwrap();
    let run = cmv(dir2.path(), "reflectionless", bad, &[]);
    assert_eq!(run.code, 1, "{}", run.stderr);
    let r = report(&run, "reflectionless_report.json");
    assert_eq!(r["pass"], false);
    assert!(r["ix_max"].as_f64().unwrap() > 0.05 || r["v_max"].as_f64().unwrap() > 0.05);
}

#[test]
fn small_borg_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "m": 1, "sequence": borg_config(1, "random")["sequence"],
        "n_sites": 256, "grid_n": 1024, "r_final": 0.99, "seed": 4,
        "tolerances": {"collar": 0.25, "xi": 0.1, "trace": 0.05}
    });
    let run = cmv(dir.path(), "borg-verify", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = report(&run, "borg_report.json");
    assert_eq!(r["pass"], true);
    assert!(r["checks"]["coefficient_identities"].as_bool().unwrap());
    assert!(r["gamma_invariance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn resolvent_check_agrees_with_dense_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "m": 2, "sequence": {"kind": "random_window", "k_min": -20, "len": 40}, "seed": 9
    });
    let run = cmv(dir.path(), "resolvent-check", cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = report(&run, "resolvent_report.json");
    assert!(r["max_deviation"].as_f64().unwrap() < 1e-8);
    assert!(r["upper_branch_count"].as_u64().unwrap() > 0);
    assert!(r["lower_branch_count"].as_u64().unwrap() > 0);
}

#[test]
fn overrides_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"m": 1, "sequence": {"kind": "free"}, "n_sites": 16, "grid_n": 4096});
    let run = cmv(dir.path(), "spectrum", cfg, &["--grid-n", "64", "--seed", "3"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let s = report(&run, "summary.json");
    assert_eq!(s["config"]["grid_n"], 64);
    assert_eq!(s["config"]["seed"], 3);
    assert_eq!(s["config"]["out"], run.out.to_str().unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let free = json!({"m": 1, "sequence": {"kind": "free"}});
    let cases = [
        ("spectrum", set(free.clone(), "grid_n", json!(1000))),
        ("spectrum", set(free.clone(), "bogus", json!(1))),
        ("spectrum", json!({"m": 1, "sequence": {"kind": "file", "path": "missing.json"}})),
        ("borg-verify", free.clone()),
        ("resolvent-check", borg_config(1, "identity")),
        ("reflectionless", set(free, "r_final", json!(0.99999))),
    ];
    for (cmd, cfg) in cases {
        let run = cmv(dir.path(), cmd, cfg.clone(), &[]);
        assert_eq!(run.code, 2, "{cmd} {cfg}: {}", run.stderr);
    }
    let o = Command::new(env!("CARGO_BIN_EXE_cmv")).args(["spectrum", "--config", "/nonexistent.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_cmv")).args(["launch"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sequence_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = json!({"m": 1, "sequence": {"kind": "window", "k_min": -2, "alphas": [[[0.3, 0.1]], [[-0.2, 0.0]], [[0.0, 0.5]]]}, "n_sites": 32});
    let a = cmv(dir.path(), "spectrum", seq, &[]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let doc = cmv_core::VerblunskySequence::from_window(
        1,
        -2,
        vec![cplx(0.3, 0.1), cplx(-0.2, 0.0), cplx(0.0, 0.5)],
    )
    .unwrap()
    .to_json()
    .unwrap();
    std::fs::write(dir.path().join("seq.json"), doc).unwrap();
    let dir2 = dir.path().join("b");
    std::fs::create_dir_all(&dir2).unwrap();
    std::fs::copy(dir.path().join("seq.json"), dir2.join("seq.json")).unwrap();
    let b = cmv(&dir2, "spectrum", json!({"m": 1, "sequence": {"kind": "file", "path": "seq.json"}, "n_sites": 32}), &[]);
    assert_eq!(b.code, 0, "{}", b.stderr);
    assert_eq!(
        std::fs::read(a.out.join("eigenangles.csv")).unwrap(),
        std::fs::read(b.out.join("eigenangles.csv")).unwrap()
    );
}
