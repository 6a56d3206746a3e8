//! E4: Hall conductivity from the expansion against the Kubo formula.

use rayon::prelude::*;

use neass_core::hall::{dp_dalpha, kubo_sigma, neass_sigma, DpMethod, DEFAULT_ALPHA_STEP};
use neass_core::linalg;

use super::{bound_check, combine, core_err, fit_rows, slope_criterion, Context, ExperimentOutput, Row};
use crate::config::ExperimentId;
use crate::Result;

const ID: ExperimentId = ExperimentId::E4;
pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_SHIFT: f64 = 0.5;

pub fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let ph = ctx.physics;
    let cfg = ctx.cfg;
    let hall = cfg.hall.clone().unwrap_or_default();
    let twist = hall.twist.unwrap_or(1) - 1;
    let order = hall.order.unwrap_or(DEFAULT_ORDER);
    let shift = hall.shift.unwrap_or(DEFAULT_SHIFT);
    let control = hall.control.unwrap_or(false);
    let step = cfg.tolerances.alpha_step.unwrap_or(DEFAULT_ALPHA_STEP);
    let fam = ph.twisted(twist).map_err(core_err("E4 twisted family"))?;

    let ((fd, rs), ms) = ctx.timed(|| {
        rayon::join(
            || dp_dalpha(&fam, &ph.basis, &ph.gap, DpMethod::FiniteDifference { step }),
            || dp_dalpha(&fam, &ph.basis, &ph.gap, DpMethod::Resolvent),
        )
    });
    let fd = fd.map_err(core_err("E4 flux derivative"))?;
    let rs = rs.map_err(core_err("E4 flux derivative"))?;
    let kubo = kubo_sigma(&fam, &ph.basis, &ph.gap, &rs).map_err(core_err("E4 Kubo formula"))?;
    let mut rows = vec![
        Row::new(ID, "dp_agreement", linalg::max_abs(&(&fd - &rs))).runtime(ms),
        Row::new(ID, "kubo_sigma", kubo.sigma),
        Row::new(ID, "kubo_imaginary", kubo.imaginary),
    ];

    let per_eps: Vec<Vec<Row>> = cfg
        .sweep
        .epsilon
        .par_iter()
        .map(|&e| -> Result<Vec<Row>> {
            let (s, ms) = ctx.timed(|| neass_sigma(&fam, &ph.basis, &ph.gap, e, order, 0.0));
            let s = s.map_err(core_err("E4 expansion"))?;
            let shifted = neass_sigma(&fam, &ph.basis, &ph.gap, e, order, shift).map_err(core_err("E4 expansion"))?;
            let tag = |row: Row| row.eps(e).order(order).residual(s.residual_norm).runtime(ms);
            Ok(vec![
                tag(Row::new(ID, "neass_sigma", s.full)),
                tag(Row::new(ID, "first_order_sigma", s.first_order)),
                tag(Row::new(ID, "sigma_error", (s.full - kubo.sigma).abs())),
                tag(Row::new(ID, "first_order_error", (s.first_order - kubo.sigma).abs())),
                tag(Row::new(ID, "neass_imaginary", s.imaginary.abs())),
                tag(Row::new(ID, "gauge_shift", (s.full - shifted.full).abs())),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(per_eps.into_iter().flatten());

    let mut fits = vec![];
    let mut checks = vec![bound_check(&rows, "dp_agreement", 1e-6)];
    if control {
        checks.push((
            kubo.sigma.abs() <= 1e-9,
            format!("control model: Kubo sigma {:.3e} (limit 1e-9)", kubo.sigma),
        ));
        let worst = rows
            .iter()
            .filter(|r| r.observable == "neass_sigma")
            .map(|r| r.value.abs())
            .fold(0.0, f64::max);
        checks.push((
            worst <= 1e-9,
            format!("control model: expansion sigma max {worst:.3e} (limit 1e-9)"),
        ));
    } else {
        let found = vec![fit_rows("sigma_error".into(), &rows, "sigma_error", Some(order))];
        let c = slope_criterion("A10", &found, &[0.8], None);
        checks.push((c.passed, format!("Kubo sigma {:.6}; {}", kubo.sigma, c.detail)));
        fits.extend(found.into_iter().flatten());
    }
    let criteria = vec![combine("A10", checks)];
    Ok(ExperimentOutput {
        id: ID,
        rows,
        fits,
        criteria,
    })
}
