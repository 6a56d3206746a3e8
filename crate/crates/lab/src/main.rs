use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use neass_lab::config::{parse_config, ExperimentConfig};
use neass_lab::fit::fit_loglog;
use neass_lab::runner::{resolve_threads, run_config};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_CRITERIA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "neass",
    version,
    about = "Almost-stationary states of perturbed lattice fermions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment listed in a configuration.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `output.dir`, then the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; NEASS_THREADS takes precedence.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// Fit log(y) against log(x) for two columns of a CSV file.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Keep only rows whose column equals a value, as `column=value`; repeatable.
        #[arg(long = "where", value_name = "COLUMN=VALUE")]
        filters: Vec<String>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_FAILURE
    })?;
    parse_config(&text).map_err(|err| {
        for d in &err.0 {
            eprintln!("{}:{d}", path.display());
        }
        EXIT_INVALID
    })
}

fn run(config: &Path, out: Option<PathBuf>, threads: Option<usize>, seed: Option<u64>) -> Result<(), u8> {
    let mut cfg = load(config)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    let out = out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or("run".into());
    let threads = resolve_threads(threads);
    let outcome = run_config(&cfg, &stem, &out, threads).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_FAILURE
    })?;
    for o in &outcome.outputs {
        for c in &o.criteria {
            println!(
                "{} {} {}: {}",
                o.id.name(),
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
        }
    }
    println!("summary: {}", outcome.summary.display());
    if outcome.passed() {
        Ok(())
    } else {
        Err(EXIT_CRITERIA)
    }
}

fn fit(path: &Path, x: &str, y: &str, filters: &[String]) -> Result<(), u8> {
    let fail = |msg: String| {
        eprintln!("{msg}");
        EXIT_FAILURE
    };
    let mut rd = csv::Reader::from_path(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let header = rd.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("no column '{name}'")))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut conds = vec![];
    for f in filters {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| fail(format!("filter '{f}' is not COLUMN=VALUE")))?;
        conds.push((col(k)?, v.to_string()));
    }
    let mut points = vec![];
    for rec in rd.records() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        if !conds.iter().all(|(k, v)| rec.get(*k) == Some(v.as_str())) {
            continue;
        }
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        if let (Some(a), Some(b)) = (num(xi), num(yi)) {
            points.push((a, b));
        }
    }
    let r = fit_loglog(&points).map_err(|e| fail(format!("fit: {e}")))?;
    let report = json!({
        "points": points.len(),
        "slope": r.slope,
        "intercept": r.intercept,
        "r_squared": r.r_squared,
        "slope_stderr": r.slope_stderr,
        "slope_ci": [r.slope_ci.0, r.slope_ci.1],
        "residuals": r.residuals,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => run(&config, out, threads, seed),
        Command::Validate { config } => load(&config).map(|cfg| {
            println!("{}: ok ({} experiments)", config.display(), cfg.experiments.len());
        }),
        Command::Fit { csv, x, y, filters } => fit(&csv, &x, &y, &filters),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
