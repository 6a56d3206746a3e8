//! Runs the reference configurations end to end and prints one verdict per
//! acceptance criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use neass_lab::config::{parse_config, ExperimentConfig, ExperimentId};
use neass_lab::experiments::Criterion;
use neass_lab::runner::{resolve_threads, run_config, RunOutcome};

const IDS: [&str; 12] = [
    "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12",
];

fn load(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(cfg: &ExperimentConfig, stem: &str, dir: &Path, threads: usize) -> (RunOutcome, f64) {
    let start = Instant::now();
    let out = run_config(cfg, stem, dir, threads).unwrap_or_else(|e| panic!("{stem}: {e}"));
    (out, start.elapsed().as_secs_f64())
}

/// Verdicts collected per criterion; a criterion passes when all its parts do.
#[derive(Default)]
struct Ledger(BTreeMap<&'static str, Vec<(bool, String)>>);

impl Ledger {
    fn add(&mut self, id: &'static str, passed: bool, detail: String) {
        self.0.entry(id).or_default().push((passed, detail));
    }

    fn absorb(&mut self, label: &str, outcome: &RunOutcome) {
        for o in &outcome.outputs {
            for Criterion { id, passed, detail } in &o.criteria {
                self.add(id, *passed, format!("[{label} {}] {detail}", o.id.name()));
            }
        }
    }
}

fn main() -> ExitCode {
    let threads = resolve_threads(None);
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut ledger = Ledger::default();

    let r1 = load("r1.cfg");
    let (out, secs) = run(&r1, "r1", dir.path(), threads);
    println!("R1 finished in {secs:.1} s on {threads} thread(s) (target 60 s)");
    ledger.absorb("R1", &out);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out.summary).expect("summary")).expect("summary json");
    let g = summary["model"]["gap"].as_f64().unwrap_or(f64::NAN);
    let gt = summary["model"]["gap_cutoff"].as_f64().unwrap_or(f64::NAN);
    let gap_ok = g > 0.2 && gt > 0.2 && (gt - g / 4.0).abs() <= 1e-12 * g;
    println!(
        "R1 gap {g:.4}, cutoff {gt:.4}: {}",
        if gap_ok { "ok" } else { "below 0.2" }
    );
    ledger.add("A1", gap_ok, format!("[R1] gap {g:.4}, cutoff {gt:.4} (both > 0.2)"));

    for name in ["r2", "r2_control"] {
        let cfg = load(&format!("{name}.cfg"));
        let (out, secs) = run(&cfg, name, dir.path(), threads);
        println!("{name} finished in {secs:.1} s (target 300 s)");
        ledger.absorb(name, &out);
    }

    // Determinism: the seeded experiments again, on different worker counts.
    let mut det = r1.clone();
    det.experiments = vec![ExperimentId::E1, ExperimentId::E5];
    let a = dir.path().join("det_a");
    let b = dir.path().join("det_b");
    let (first, _) = run(&det, "det", &a, 1);
    let (second, _) = run(&det, "det", &b, threads.max(2));
    let same = first.csv.len() == second.csv.len()
        && first
            .csv
            .iter()
            .zip(&second.csv)
            .all(|(x, y)| std::fs::read(x).ok() == std::fs::read(y).ok());
    ledger.add(
        "A12",
        same,
        format!(
            "reruns on 1 and {} workers give byte-identical CSV: {same}",
            threads.max(2)
        ),
    );

    let mut failed = 0;
    for id in IDS {
        let parts = ledger.0.get(id).cloned().unwrap_or_default();
        let passed = !parts.is_empty() && parts.iter().all(|p| p.0);
        if !passed {
            failed += 1;
        }
        let detail = if parts.is_empty() {
            "not evaluated".to_string()
        } else {
            parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join(" | ")
        };
        println!("{id} {} {detail}", if passed { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", IDS.len() - failed, IDS.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
