//! Experiment drivers. Each produces data rows, log-log fits and a verdict
//! per acceptance criterion it covers.

mod checks;
mod hall;
mod residual;
mod stationarity;
mod switching;

use std::cmp::Ordering;
use std::time::Instant;

use neass_core::linalg::{self, CMat};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::fit::{fit_loglog, FitResult};
use crate::model::Physics;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub experiment: ExperimentId,
    pub epsilon: Option<f64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub t: Option<f64>,
    pub observable: String,
    pub value: f64,
    pub residual_norm: Option<f64>,
    pub runtime_ms: Option<f64>,
}

impl Row {
    fn new(experiment: ExperimentId, observable: impl Into<String>, value: f64) -> Self {
        Row {
            experiment,
            epsilon: None,
            n: None,
            delta: None,
            t: None,
            observable: observable.into(),
            value,
            residual_norm: None,
            runtime_ms: None,
        }
    }

    fn eps(mut self, e: f64) -> Self {
        self.epsilon = Some(e);
        self
    }

    fn order(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn delta(mut self, d: f64) -> Self {
        self.delta = Some(d);
        self
    }

    fn time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    fn residual(mut self, r: f64) -> Self {
        self.residual_norm = Some(r);
        self
    }

    fn runtime(mut self, ms: Option<f64>) -> Self {
        self.runtime_ms = ms;
        self
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Canonical row order, independent of the order the workers finished in.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then_with(|| a.observable.cmp(&b.observable))
            .then_with(|| a.n.cmp(&b.n))
            .then_with(|| cmp_opt(a.delta, b.delta))
            .then_with(|| cmp_opt(a.epsilon, b.epsilon))
            .then_with(|| cmp_opt(a.t, b.t))
    });
}

#[derive(Clone, Debug)]
pub struct NamedFit {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub id: ExperimentId,
    pub rows: Vec<Row>,
    pub fits: Vec<NamedFit>,
    pub criteria: Vec<Criterion>,
}

/// Shared inputs of one experiment run.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub physics: &'a Physics,
    pub timings: bool,
}

impl Context<'_> {
    /// Run `f`, returning its wall time in milliseconds when timings are on.
    fn timed<T>(&self, f: impl FnOnce() -> T) -> (T, Option<f64>) {
        let start = Instant::now();
        let out = f();
        let ms = self.timings.then(|| start.elapsed().as_secs_f64() * 1e3);
        (out, ms)
    }
}

fn core_err(context: &str) -> impl Fn(neass_core::Error) -> Error + '_ {
    move |source| Error::Core {
        context: context.to_string(),
        source,
    }
}

/// Fit `rows` (selected by observable and order) as value against ε.
fn fit_rows(name: String, rows: &[Row], observable: &str, n: Option<usize>) -> std::result::Result<NamedFit, String> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.observable == observable && (n.is_none() || r.n == n))
        .filter_map(|r| r.epsilon.map(|e| (e, r.value)))
        .collect();
    match fit_loglog(&points) {
        Ok(fit) => Ok(NamedFit { name, points, fit }),
        Err(e) => Err(format!("{name}: {e}")),
    }
}

/// Verdict for "fit `k` has slope at least `mins[k]`" plus an optional R² floor.
fn slope_criterion(
    id: &'static str,
    fits: &[std::result::Result<NamedFit, String>],
    mins: &[f64],
    r2_floor: Option<f64>,
) -> Criterion {
    let mut passed = !fits.is_empty();
    let mut parts = vec![];
    for (f, &want) in fits.iter().zip(mins) {
        match f {
            Ok(nf) => {
                let ok = nf.fit.slope >= want && r2_floor.is_none_or(|r| nf.fit.r_squared >= r);
                passed &= ok;
                parts.push(format!(
                    "{} slope {:.3} (need {:.2}) R2 {:.4}",
                    nf.name, nf.fit.slope, want, nf.fit.r_squared
                ));
            }
            Err(e) => {
                passed = false;
                parts.push(e.clone());
            }
        }
    }
    if fits.is_empty() {
        parts.push("nothing to fit".into());
    }
    Criterion {
        id,
        passed,
        detail: parts.join("; "),
    }
}

/// Verdict for "the largest value among `rows` named `observable` is at most `limit`".
fn bound_check(rows: &[Row], observable: &str, limit: f64) -> (bool, String) {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.observable == observable)
        .map(|r| r.value)
        .collect();
    if vals.is_empty() {
        return (false, format!("{observable}: no data"));
    }
    let worst = vals.iter().cloned().fold(f64::MIN, f64::max);
    (
        worst <= limit,
        format!("{observable} max {worst:.3e} (limit {limit:.0e})"),
    )
}

fn floor_check(rows: &[Row], observable: &str, limit: f64) -> (bool, String) {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.observable == observable)
        .map(|r| r.value)
        .collect();
    if vals.is_empty() {
        return (false, format!("{observable}: no data"));
    }
    let worst = vals.iter().cloned().fold(f64::MAX, f64::min);
    (
        worst >= limit,
        format!("{observable} min {worst:.3e} (floor {limit:.0e})"),
    )
}

fn combine(id: &'static str, checks: Vec<(bool, String)>) -> Criterion {
    Criterion {
        id,
        passed: !checks.is_empty() && checks.iter().all(|c| c.0),
        detail: checks.into_iter().map(|c| c.1).collect::<Vec<_>>().join("; "),
    }
}

fn expect(rho: &CMat, b: &CMat) -> f64 {
    linalg::trace(&rho.dot(b)).re
}

pub fn run_experiment(id: ExperimentId, ctx: &Context) -> Result<ExperimentOutput> {
    let mut out = match id {
        ExperimentId::E1 => residual::run(ctx)?,
        ExperimentId::E2 => stationarity::run(ctx)?,
        ExperimentId::E3 => switching::run(ctx)?,
        ExperimentId::E4 => hall::run(ctx)?,
        ExperimentId::E5 => checks::run(ctx)?,
    };
    sort_rows(&mut out.rows);
    Ok(out)
}
