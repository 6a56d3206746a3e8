//! E2: the almost-stationary state under the full dynamics.

use rayon::prelude::*;

use neass_core::dynamics::{evolve_static, evolve_timedep};
use neass_core::linalg;
use neass_core::neass::build_static_neass;
use neass_core::spectral::GapContext;

use super::{
    bound_check, combine, core_err, expect, fit_rows, floor_check, slope_criterion, Context, ExperimentOutput, Row,
};
use crate::config::ExperimentId;
use crate::model::propagation;
use crate::Result;

const ID: ExperimentId = ExperimentId::E2;
pub const DEFAULT_TIME: f64 = 5.0;

pub fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let ph = ctx.physics;
    let cfg = ctx.cfg;
    let time = cfg.sweep.time.unwrap_or(DEFAULT_TIME);
    let gap = GapContext::new(&ph.h0, ph.particles(), &ph.gap).map_err(core_err("E2 gapped patch"))?;
    let points: Vec<(usize, f64)> = cfg
        .sweep
        .n
        .iter()
        .flat_map(|&n| cfg.sweep.epsilon.iter().map(move |&e| (n, e)))
        .collect();

    let rows: Vec<Vec<Row>> = points
        .par_iter()
        .map(|&(n, e)| -> Result<Vec<Row>> {
            let v = ph.potential(e).map_err(core_err("E2 potential"))?;
            let r = build_static_neass(&gap, &v, &ph.h1, e, n).map_err(core_err("E2 expansion"))?;
            let (rho, ms) = ctx.timed(|| evolve_static(&r.pi, &r.hamiltonian, time));
            let rho = rho.map_err(core_err("E2 evolution"))?;
            let tag = |row: Row| row.eps(e).order(n).time(time).residual(r.residual_norm).runtime(ms);
            let mut out = vec![];
            for (name, b) in &ph.observables {
                out.push(tag(Row::new(
                    ID,
                    format!("drift:{name}"),
                    (expect(&rho, b) - expect(&r.pi, b)).abs(),
                )));
            }
            let trace = (linalg::trace(&rho) - linalg::trace(&r.pi)).norm();
            let floor = linalg::min_eigenvalue(&linalg::hermitian_part(&rho)).map_err(core_err("E2 spectrum"))?;
            out.push(tag(Row::new(ID, "trace_drift", trace)));
            out.push(tag(Row::new(ID, "min_eigenvalue", floor)));
            out.push(tag(Row::new(ID, "hermiticity", linalg::hermiticity_defect(&rho))));
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Row> = rows.into_iter().flatten().collect();

    // The integrator on a constant Hamiltonian against the exact evolution.
    let (n, e) = points[0];
    let v = ph.potential(e).map_err(core_err("E2 potential"))?;
    let r = build_static_neass(&gap, &v, &ph.h1, e, n).map_err(core_err("E2 expansion"))?;
    let exact = evolve_static(&r.pi, &r.hamiltonian, time).map_err(core_err("E2 evolution"))?;
    let prop = propagation(cfg);
    let h = r.hamiltonian.clone();
    let (rep, ms) = ctx.timed(|| evolve_timedep(&r.pi, &|_| h.clone(), 0.0, time, 1.0, &prop));
    let rep = rep.map_err(core_err("E2 propagation"))?;
    let tag = |row: Row| row.eps(e).order(n).time(time).runtime(ms);
    rows.push(tag(Row::new(
        ID,
        "constant_h_reduction",
        linalg::op_norm(&(&rep.state - &exact)),
    )));
    rows.push(tag(Row::new(ID, "integrated:trace_drift", rep.trace_drift)));
    rows.push(tag(Row::new(ID, "integrated:min_eigenvalue", rep.min_eigenvalue)));
    if let Some(sc) = rep.self_convergence {
        rows.push(tag(Row::new(ID, "integrated:self_convergence", sc)));
    }

    let mut fits = vec![];
    let mut criteria = vec![];
    // Stationarity is asserted at second order; other orders are reported.
    for &n in &cfg.sweep.n {
        let found: Vec<_> = ph
            .observables
            .iter()
            .map(|(name, _)| {
                let obs = format!("drift:{name}");
                fit_rows(format!("{obs} n={n}"), &rows, &obs, Some(n))
            })
            .collect();
        if n == 2 {
            criteria.push(slope_criterion("A3", &found, &vec![2.7; found.len()], None));
        }
        fits.extend(found.into_iter().flatten());
    }

    let mut hygiene = vec![
        bound_check(&rows, "trace_drift", 1e-8),
        floor_check(&rows, "min_eigenvalue", -1e-8),
        bound_check(&rows, "integrated:trace_drift", 1e-8),
        floor_check(&rows, "integrated:min_eigenvalue", -1e-8),
        bound_check(&rows, "constant_h_reduction", 1e-9),
    ];
    if prop.self_check {
        hygiene.push(bound_check(&rows, "integrated:self_convergence", 1e-7));
    }
    criteria.push(combine("A11", hygiene));

    Ok(ExperimentOutput {
        id: ID,
        rows,
        fits,
        criteria,
    })
}
