//! E1: the static expansion. Exact residual identity, residual scaling in ε
//! and the first-order response.

use rayon::prelude::*;

use neass_core::linalg;
use neass_core::neass::{build_static_neass, expansion_coefficients, first_order_from_resolvent};
use neass_core::spectral::GapContext;

use super::{combine, core_err, expect, fit_rows, slope_criterion, Context, Criterion, ExperimentOutput, Row};
use crate::config::ExperimentId;
use crate::Result;

const ID: ExperimentId = ExperimentId::E1;

pub fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let ph = ctx.physics;
    let cfg = ctx.cfg;
    let gap = GapContext::new(&ph.h0, ph.particles(), &ph.gap).map_err(core_err("E1 gapped patch"))?;
    let sweep = &cfg.sweep.epsilon;
    let id_eps = cfg.checks.identity_epsilon.unwrap_or(0.1);

    let mut points: Vec<(usize, f64, bool)> = vec![];
    for &n in &cfg.sweep.n {
        for &e in sweep {
            points.push((n, e, true));
        }
        if !sweep.contains(&id_eps) {
            points.push((n, id_eps, false));
        }
    }
    let rows: Vec<Vec<Row>> = points
        .par_iter()
        .map(|&(n, e, in_sweep)| -> Result<Vec<Row>> {
            let v = ph.potential(e).map_err(core_err("E1 potential"))?;
            let (r, ms) = ctx.timed(|| build_static_neass(&gap, &v, &ph.h1, e, n));
            let r = r.map_err(core_err("E1 expansion"))?;
            let scale = linalg::op_norm(&r.hamiltonian);
            let ident = r.static_identity_error.unwrap_or(f64::NAN) / scale;
            let mut out = vec![Row::new(ID, "identity_error", ident)
                .eps(e)
                .order(n)
                .residual(r.residual_norm)
                .runtime(ms)];
            if in_sweep {
                out.push(
                    Row::new(ID, "commutator_norm", r.residual_norm)
                        .eps(e)
                        .order(n)
                        .residual(r.residual_norm)
                        .runtime(ms),
                );
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Row> = rows.into_iter().flatten().collect();

    // First-order response against the resolvent formula.
    let first: Vec<Vec<Row>> = sweep
        .par_iter()
        .map(|&e| -> Result<Vec<Row>> {
            let v = ph.potential(e).map_err(core_err("E1 potential"))?;
            let r = build_static_neass(&gap, &v, &ph.h1, e, 1).map_err(core_err("E1 first order"))?;
            let p = expansion_coefficients(&r, 1).map_err(core_err("E1 coefficients"))?;
            let resolvent = first_order_from_resolvent(&gap, &v, &ph.h1, e).map_err(core_err("E1 resolvent"))?;
            let mut out = vec![Row::new(ID, "p1_agreement", linalg::max_abs(&(&p[1] - &resolvent)))
                .eps(e)
                .order(1)];
            for (name, b) in &ph.observables {
                let err = (expect(&r.pi, b) - expect(gap.projector(), b) - e * expect(&p[1], b)).abs();
                out.push(Row::new(ID, format!("expansion_error:{name}"), err).eps(e).order(1));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(first.into_iter().flatten());

    let mut criteria: Vec<Criterion> = vec![];
    let mut fits = vec![];

    let id_rows: Vec<Row> = rows
        .iter()
        .filter(|r| r.observable == "identity_error")
        .cloned()
        .collect();
    let worst = id_rows.iter().map(|r| r.value).fold(f64::MIN, f64::max);
    let at_eps = id_rows
        .iter()
        .filter(|r| r.epsilon == Some(id_eps))
        .map(|r| r.value)
        .fold(f64::MIN, f64::max);
    criteria.push(Criterion {
        id: "A1",
        passed: worst <= 1e-8,
        detail: format!(
            "relative identity error {at_eps:.3e} at eps {id_eps}, {worst:.3e} over all points (limit 1e-8)"
        ),
    });

    let residual_fits: Vec<_> = cfg
        .sweep
        .n
        .iter()
        .map(|&n| fit_rows(format!("commutator_norm n={n}"), &rows, "commutator_norm", Some(n)))
        .collect();
    let mins: Vec<f64> = cfg.sweep.n.iter().map(|&n| n as f64 + 0.7).collect();
    criteria.push(slope_criterion("A2", &residual_fits, &mins, Some(0.98)));
    fits.extend(residual_fits.into_iter().flatten());

    let exp_fits: Vec<_> = ph
        .observables
        .iter()
        .map(|(name, _)| {
            let obs = format!("expansion_error:{name}");
            fit_rows(obs.clone(), &rows, &obs, Some(1))
        })
        .collect();
    let slopes = slope_criterion("A5", &exp_fits, &vec![1.7; exp_fits.len()], None);
    let agreement = super::bound_check(&rows, "p1_agreement", 1e-8);
    criteria.push(combine("A5", vec![(slopes.passed, slopes.detail), agreement]));
    fits.extend(exp_fits.into_iter().flatten());

    Ok(ExperimentOutput {
        id: ID,
        rows,
        fits,
        criteria,
    })
}
