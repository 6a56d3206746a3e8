//! Runs every experiment of a configuration and writes its artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use neass_core::spectral::GapContext;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{run_experiment, Context, ExperimentOutput};
use crate::model::Physics;
use crate::output::{config_hash, write_csv, Summary};
use crate::{Error, Result};

/// Environment variable that overrides the worker count.
pub const THREADS_ENV: &str = "NEASS_THREADS";

#[derive(Debug)]
pub struct RunOutcome {
    pub outputs: Vec<ExperimentOutput>,
    pub csv: Vec<PathBuf>,
    pub summary: PathBuf,
    pub hash: String,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.outputs.iter().all(|o| o.criteria.iter().all(|c| c.passed))
    }
}

/// Worker count: the environment override, then the request, then all cores.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&k: &usize| k > 0)
        .or(requested.filter(|&k| k > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn model_facts(cfg: &ExperimentConfig, ph: &Physics) -> serde_json::Value {
    let mut facts = json!({
        "dim": ph.dim(),
        "particles": ph.particles(),
        "modes": ph.basis.modes(),
    });
    if let Ok(gap) = GapContext::new(&ph.h0, ph.particles(), &ph.gap) {
        facts["gap"] = json!(gap.weight.g);
        facts["gap_cutoff"] = json!(gap.weight.g_tilde);
    }
    if cfg.runs(ExperimentId::E4) {
        facts["twist_convention"] = json!(
            "uniform twist: every hop from y to x gains exp(i*alpha*(x-y)_j) along the twisted direction j (assumed convention)"
        );
    }
    facts
}

/// Run `cfg` on a pool of `threads` workers, writing `<stem>_<E>.csv` per
/// experiment and `<stem>_summary.json` into `out_dir`.
pub fn run_config(cfg: &ExperimentConfig, stem: &str, out_dir: &Path, threads: usize) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Other(format!("thread pool: {e}")))?;
    let physics = Physics::build(cfg).map_err(|source| Error::Core {
        context: "building the model".into(),
        source,
    })?;
    let ctx = Context {
        cfg,
        physics: &physics,
        timings: cfg.output.timings.unwrap_or(false),
    };
    let outputs = pool.install(|| {
        cfg.experiments
            .iter()
            .map(|&id| run_experiment(id, &ctx))
            .collect::<Result<Vec<_>>>()
    })?;

    std::fs::create_dir_all(out_dir)?;
    let hash = config_hash(cfg);
    let mut csv = vec![];
    for o in &outputs {
        let path = out_dir.join(format!("{stem}_{}.csv", o.id.name()));
        write_csv(BufWriter::new(File::create(&path)?), &hash, &o.rows)?;
        csv.push(path);
    }
    let artifacts: Vec<String> = csv
        .iter()
        .map(|p| {
            p.file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let summary = out_dir.join(format!("{stem}_summary.json"));
    Summary {
        hash: &hash,
        seed: cfg.seed(),
        threads,
        outputs: &outputs,
        artifacts: &artifacts,
        model: model_facts(cfg, &physics),
    }
    .write(&summary)?;
    Ok(RunOutcome {
        outputs,
        csv,
        summary,
        hash,
    })
}
