use std::path::Path;
use std::process::Command;

const SMALL: &str = "schema_version = 1
experiments = [\"E1\", \"E5\"]
seed = 3

lattice.sizes = [4]

model.particles = 2
model.hopping = [{shift = [1], amp = -1.0}, {shift = [-1], amp = -1.0}]
model.onsite = [{kind = \"staggered\", value = 1.0}]

perturbation.profile = {kind = \"linear\", slope = 1.0, offset = 0.0}

observables.density = [[0]]

sweep.epsilon = [0.05, 0.1, 0.2]
sweep.n = [1, 2]

checks.random_operators = 3
checks.monomial_roundtrips = 3
checks.bound_instances = 10
";

fn neass(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_neass"))
        .args(args)
        .env_remove("NEASS_THREADS")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_reports_positions_and_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.cfg", SMALL);
    assert_eq!(neass(&["validate", &good]).0, 0);

    let bad = write(
        dir.path(),
        "bad.cfg",
        &SMALL.replace("model.particles", "model.particle"),
    );
    let (code, _, err) = neass(&["validate", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.cfg:7:1: unknown key 'model.particle'"), "{err}");

    let zero = write(
        dir.path(),
        "zero.cfg",
        &SMALL.replace("[0.05, 0.1, 0.2]", "[0.0, 0.1, 0.2]"),
    );
    let (code, _, err) = neass(&["validate", &zero]);
    assert_eq!(code, 2);
    assert!(err.contains("epsilon must be in (0,1]"), "{err}");
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let read = |sub: &str, name: &str| std::fs::read(dir.path().join(sub).join(name)).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, out, err) = neass(&["run", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("A7 PASS"), "{out}");
    assert_eq!(
        neass(&["run", &cfg, "--out", b.to_str().unwrap(), "--threads", "3"]).0,
        0
    );
    for f in ["small_E1.csv", "small_E5.csv"] {
        assert_eq!(read("a", f), read("b", f), "{f}");
    }

    let summary: serde_json::Value = serde_json::from_slice(&read("a", "small_summary.json")).unwrap();
    assert_eq!(
        summary["artifacts"],
        serde_json::json!(["small_E1.csv", "small_E5.csv"])
    );
    let hash = summary["config_hash"].as_str().unwrap();
    let csv = String::from_utf8(read("a", "small_E1.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with(hash)));

    // A different seed changes the configuration, hence the hash.
    let c = dir.path().join("c");
    assert_eq!(neass(&["run", &cfg, "--out", c.to_str().unwrap(), "--seed", "11"]).0, 0);
    let other: serde_json::Value = serde_json::from_slice(&read("c", "small_summary.json")).unwrap();
    assert_ne!(other["config_hash"], summary["config_hash"]);
}

#[test]
fn failed_criterion_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // Two sweep points are too few for a fit, so the scaling criteria cannot pass.
    let text = SMALL
        .replace("[\"E1\", \"E5\"]", "[\"E1\"]")
        .replace("[0.05, 0.1, 0.2]", "[0.05, 0.1]");
    let cfg = write(dir.path(), "short.cfg", &text);
    let (code, out, _) = neass(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("A2 FAIL"), "{out}");
    assert!(out.contains("A1 PASS"), "{out}");
}

#[test]
fn fit_subcommand_recovers_the_residual_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    assert_eq!(neass(&["run", &cfg, "--out", dir.path().to_str().unwrap()]).0, 0);
    let csv = dir.path().join("small_E1.csv");
    let (code, out, err) = neass(&[
        "fit",
        csv.to_str().unwrap(),
        "--x",
        "epsilon",
        "--y",
        "value",
        "--where",
        "observable=commutator_norm",
        "--where",
        "n=2",
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["points"], 3);
    assert!(v["slope"].as_f64().unwrap() > 2.7, "{out}");

    let (code, _, err) = neass(&["fit", csv.to_str().unwrap(), "--x", "nope", "--y", "value"]);
    assert_eq!(code, 1);
    assert!(err.contains("no column 'nope'"));
}
