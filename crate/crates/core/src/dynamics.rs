//! Propagation of density matrices under static and time-dependent
//! Hamiltonians, trace observables and Lieb–Robinson probes.

use ndarray::{Array1, Axis};

use crate::driving::Schedule;
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::{self, CMat, I};
use crate::neass::{self, NeassResult};
use crate::spectral::GapContext;
use crate::C64;

/// `e^{−iHt} ρ e^{iHt}` by eigendecomposition.
pub fn evolve_static(rho0: &CMat, h: &CMat, t: f64) -> Result<CMat> {
    linalg::ensure_square(rho0, "state")?;
    if rho0.nrows() != h.nrows() {
        return Err(Error::Shape(format!(
            "state {:?} vs Hamiltonian {:?}",
            rho0.shape(),
            h.shape()
        )));
    }
    linalg::ensure_hermitian(h, 1e-12)?;
    let u = linalg::expi(h, -t)?;
    Ok(linalg::conjugate(&u, rho0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Fourth-order commutator-free Magnus step with two Gauss points.
    Magnus4,
    /// Classical Runge–Kutta on the state columns.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    pub integrator: Integrator,
    pub step: f64,
    /// Polar re-orthonormalisation every this many steps (0 disables).
    pub reunitarize_every: usize,
    pub tolerance: f64,
    /// Repeat with half the step and report the difference.
    pub self_check: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            integrator: Integrator::Magnus4,
            step: 1e-3,
            reunitarize_every: 50,
            tolerance: 1e-7,
            self_check: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PropagationReport {
    pub state: CMat,
    pub steps: usize,
    /// `max |ρ_h − ρ_{h/2}|` when the self-check ran.
    pub self_convergence: Option<f64>,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
}

/// Orthonormal columns and weights with `ρ = W diag(p) W*`.
fn factor_state(rho: &CMat) -> Result<(CMat, Array1<f64>)> {
    let (e, v) = linalg::eigh(rho)?;
    let top = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let keep: Vec<usize> = (0..e.len()).filter(|&i| e[i].abs() > 1e-13 * top.max(1e-300)).collect();
    let w = v.select(Axis(1), &keep);
    let p = Array1::from_iter(keep.iter().map(|&i| e[i]));
    Ok((w, p))
}

fn assemble_state(w: &CMat, p: &Array1<f64>) -> CMat {
    let scaled = w * &p.mapv(|x| C64::new(x, 0.0)).insert_axis(Axis(0));
    linalg::hermitian_part(&scaled.dot(&linalg::dagger(w)))
}

/// `W (W*W)^{−1/2}`.
fn polar(w: &CMat) -> Result<CMat> {
    let g = linalg::dagger(w).dot(w);
    let (e, v) = linalg::eigh(&g)?;
    let d = e.mapv(|x| C64::new(1.0 / x.sqrt(), 0.0));
    Ok(w.dot(&linalg::from_spectrum(&v, &d)))
}

fn inf_norm(a: &CMat) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(Ω) W` by a scaled Taylor series, with `Ω` given by its action.
fn expmv(apply: &dyn Fn(&CMat) -> CMat, norm_bound: f64, w: &CMat) -> CMat {
    let pieces = (norm_bound / 0.5).ceil().max(1.0) as usize;
    let inv = 1.0 / pieces as f64;
    let mut out = w.clone();
    for _ in 0..pieces {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..40 {
            term = apply(&term).mapv(|z| z * (inv / k as f64));
            acc += &term;
            if linalg::max_abs(&term) < 1e-18 * linalg::max_abs(&acc).max(1e-300) {
                break;
            }
        }
        out = acc;
    }
    out
}

fn propagate_columns(
    w0: &CMat,
    h_of_t: &dyn Fn(f64) -> CMat,
    t0: f64,
    t1: f64,
    scale: f64,
    cfg: &PropagationConfig,
    step: f64,
) -> Result<(CMat, usize)> {
    let span = t1 - t0;
    let steps = if span == 0.0 {
        0
    } else {
        (span.abs() / step).ceil() as usize
    };
    if steps == 0 {
        return Ok((w0.clone(), 0));
    }
    let h = span / steps as f64;
    let mut w = w0.clone();
    let minus_i = C64::new(0.0, -1.0 / scale);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        match cfg.integrator {
            Integrator::Magnus4 => {
                let r3 = 3f64.sqrt();
                let h1 = h_of_t(t + (0.5 - r3 / 6.0) * h);
                let h2 = h_of_t(t + (0.5 + r3 / 6.0) * h);
                let a = minus_i * (h / 2.0);
                let b = -r3 * h * h / (12.0 * scale * scale);
                let apply = |x: &CMat| -> CMat {
                    let y1 = h1.dot(x);
                    let y2 = h2.dot(x);
                    let comm = h2.dot(&y1) - h1.dot(&y2);
                    (y1 + y2).mapv(|z| z * a) + comm.mapv(|z| z * b)
                };
                let (n1, n2) = (inf_norm(&h1), inf_norm(&h2));
                let bound = h.abs() / (2.0 * scale) * (n1 + n2) + b.abs() * 2.0 * n1 * n2;
                w = expmv(&apply, bound, &w);
            }
            Integrator::Rk4 => {
                let ha = h_of_t(t);
                let hm = h_of_t(t + 0.5 * h);
                let hb = h_of_t(t + h);
                let f = |m: &CMat, x: &CMat| m.dot(x).mapv(|z| z * minus_i);
                let k1 = f(&ha, &w);
                let k2 = f(&hm, &(&w + &k1.mapv(|z| z * (h / 2.0))));
                let k3 = f(&hm, &(&w + &k2.mapv(|z| z * (h / 2.0))));
                let k4 = f(&hb, &(&w + &k3.mapv(|z| z * h)));
                let inc = (k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
                w = w + inc;
            }
        }
        if cfg.reunitarize_every > 0 && (k + 1) % cfg.reunitarize_every == 0 {
            w = polar(&w)?;
        }
    }
    if cfg.reunitarize_every > 0 {
        w = polar(&w)?;
    }
    Ok((w, steps))
}

fn hygiene(rho0: &CMat, rho: &CMat) -> Result<(f64, f64, f64)> {
    let drift = (linalg::trace(rho) - linalg::trace(rho0)).norm();
    let min_eig = linalg::min_eigenvalue(rho)?;
    Ok((drift, min_eig, linalg::hermiticity_defect(rho)))
}

/// Solve `i·scale·dρ/dt = [H(t), ρ]` from `t0` to `t1`.
///
/// Only the range of `ρ0` is propagated. With `self_check` the run is
/// repeated at half the step; a difference above `tolerance` is an error.
pub fn evolve_timedep(
    rho0: &CMat,
    h_of_t: &dyn Fn(f64) -> CMat,
    t0: f64,
    t1: f64,
    scale: f64,
    cfg: &PropagationConfig,
) -> Result<PropagationReport> {
    if !(scale > 0.0) {
        return Err(Error::Invalid(format!("time scale must be positive, got {scale}")));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::Invalid(format!("step must be positive, got {}", cfg.step)));
    }
    linalg::ensure_square(rho0, "state")?;
    let (w0, p) = factor_state(rho0)?;
    let (w, steps) = propagate_columns(&w0, h_of_t, t0, t1, scale, cfg, cfg.step)?;
    let state = assemble_state(&w, &p);
    let self_convergence = if cfg.self_check {
        let (wf, _) = propagate_columns(&w0, h_of_t, t0, t1, scale, cfg, cfg.step / 2.0)?;
        let fine = assemble_state(&wf, &p);
        let diff = linalg::max_abs(&(&fine - &state));
        if diff > cfg.tolerance {
            return Err(Error::StepTooLarge(format!(
                "halving the step {} changed the state by {diff:.3e} > {:.1e}",
                cfg.step, cfg.tolerance
            )));
        }
        Some(diff)
    } else {
        None
    };
    let (trace_drift, min_eigenvalue, hermiticity) = hygiene(rho0, &state)?;
    Ok(PropagationReport {
        state,
        steps,
        self_convergence,
        trace_drift,
        min_eigenvalue,
        hermiticity,
    })
}

/// `ε^{|ℓ_H|} / Π_{free j} M_j · tr(ρB)`, free directions being those in
/// neither localization vector.
pub fn normalized_expectation(
    rho: &CMat,
    b: &CMat,
    ell: &[bool],
    ell_h: &[bool],
    epsilon: f64,
    spec: &LatticeSpec,
) -> Result<f64> {
    let d = spec.dim();
    if ell.len() != d || ell_h.len() != d {
        return Err(Error::Geometry(format!("localization vectors must have length {d}")));
    }
    if ell.iter().zip(ell_h).any(|(a, b)| *a && *b) {
        return Err(Error::Geometry("localization vectors are not transversal".into()));
    }
    let constrained_h = ell_h.iter().filter(|&&x| x).count();
    let volume: f64 = (0..d)
        .filter(|&j| !ell[j] && !ell_h[j])
        .map(|j| spec.sizes()[j] as f64)
        .product();
    let tr = linalg::trace(&rho.dot(b)).re;
    Ok(epsilon.powi(constrained_h as i32) / volume * tr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrRow {
    pub t: f64,
    pub distance: u64,
    pub norm: f64,
}

/// `‖[A, e^{iHt} O e^{−iHt}]‖` for each probe `A` (labelled by its distance
/// from `O`) and each time.
pub fn lr_probe(h: &CMat, o: &CMat, probes: &[(u64, CMat)], times: &[f64]) -> Result<Vec<LrRow>> {
    let (e, v) = linalg::eigh(h)?;
    let vd = linalg::dagger(&v);
    let o_eig = vd.dot(o).dot(&v);
    let mut rows = Vec::with_capacity(times.len() * probes.len());
    for &t in times {
        let n = e.len();
        let ot = CMat::from_shape_fn((n, n), |(j, k)| o_eig[(j, k)] * (I * (e[j] - e[k]) * t).exp());
        let heis = v.dot(&ot).dot(&vd);
        for (dist, a) in probes {
            rows.push(LrRow {
                t,
                distance: *dist,
                norm: linalg::op_norm(&linalg::commutator(a, &heis)),
            });
        }
    }
    Ok(rows)
}

/// Diagnostic Lieb–Robinson velocity `2^{2d+2}‖F‖‖Φ‖/a`.
pub fn lr_velocity(a: f64, d: usize, f_norm: f64, phi_norm: f64) -> f64 {
    2f64.powi(2 * d as i32 + 2) * f_norm * phi_norm / a
}

#[derive(Clone, Debug)]
pub struct SwitchingReport {
    /// Per observable: `|tr(ρ_1 B) − tr(Π_n B)|`.
    pub gap_first: Vec<f64>,
    pub gap_second: Vec<f64>,
    /// Per observable: `|tr(ρ_1 B) − tr(ρ_2 B)|`.
    pub mutual: Vec<f64>,
    /// Per observable: `|tr(ρ_1 B) − tr(P_* B)|`.
    pub gap_unperturbed: Vec<f64>,
    pub first: PropagationReport,
    pub second: PropagationReport,
    pub neass: NeassResult,
}

/// Switch `V + εH_1` on with `f1` and with `f2`, starting from the patch
/// projector, and compare the landed states with the order-`n` NEASS.
#[allow(clippy::too_many_arguments)]
pub fn switching_independence_experiment(
    ctx: &GapContext,
    v: &CMat,
    h1: &CMat,
    epsilon: f64,
    n: usize,
    f1: &dyn Schedule,
    f2: &dyn Schedule,
    end_time: f64,
    observables: &[CMat],
    cfg: &PropagationConfig,
) -> Result<SwitchingReport> {
    let neass = neass::build_static_neass(ctx, v, h1, epsilon, n)?;
    let pert = v + &h1.mapv(|z| z * epsilon);
    let p = ctx.projector();
    let run = |f: &dyn Schedule| {
        let gen = |t: f64| &ctx.h0 + &pert.mapv(|z| z * f.value(t));
        evolve_timedep(p, &gen, 0.0, end_time, epsilon, cfg)
    };
    let first = run(f1)?;
    let second = run(f2)?;
    let ex = |r: &CMat, b: &CMat| linalg::trace(&r.dot(b)).re;
    let mut out = SwitchingReport {
        gap_first: vec![],
        gap_second: vec![],
        mutual: vec![],
        gap_unperturbed: vec![],
        first,
        second,
        neass,
    };
    for b in observables {
        let a1 = ex(&out.first.state, b);
        let a2 = ex(&out.second.state, b);
        let target = ex(&out.neass.pi, b);
        out.gap_first.push((a1 - target).abs());
        out.gap_second.push((a2 - target).abs());
        out.mutual.push((a1 - a2).abs());
        out.gap_unperturbed.push((a1 - ex(p, b)).abs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn static_rabi() {
        // H = -σx, ρ0 = |0><0| → population cos²t
        let h = array![[c(0.0), c(-1.0)], [c(-1.0), c(0.0)]];
        let rho = array![[c(1.0), c(0.0)], [c(0.0), c(0.0)]];
        for t in [0.0, 0.3, 1.7] {
            let r = evolve_static(&rho, &h, t).unwrap();
            assert!((r[(0, 0)].re - f64::cos(t).powi(2)).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_generator_reduces_to_exact() {
        let h = array![[c(0.3), C64::new(0.2, 0.5)], [C64::new(0.2, -0.5), c(-0.4)]];
        let rho = array![[c(0.7), c(0.1)], [c(0.1), c(0.3)]];
        for integrator in [Integrator::Magnus4, Integrator::Rk4] {
            let cfg = PropagationConfig {
                integrator,
                step: 0.01,
                ..Default::default()
            };
            let rep = evolve_timedep(&rho, &|_| h.clone(), 0.0, 2.0, 0.5, &cfg).unwrap();
            let exact = evolve_static(&rho, &h, 4.0).unwrap();
            assert!(linalg::max_abs(&(&rep.state - &exact)) < 1e-9, "{integrator:?}");
            assert!(rep.trace_drift < 1e-12);
        }
    }

    #[test]
    fn diagonal_family_leaves_diagonal_state() {
        let rho = array![[c(1.0), c(0.0)], [c(0.0), c(0.0)]];
        let gen = |t: f64| array![[c(t.sin()), c(0.0)], [c(0.0), c(-t)]];
        let rep = evolve_timedep(&rho, &gen, 0.0, 1.0, 0.1, &PropagationConfig::default()).unwrap();
        assert!(linalg::max_abs(&(&rep.state - &rho)) < 1e-12);
    }

    #[test]
    fn expectation_normalisation() {
        let spec = LatticeSpec::new(vec![4, 3], 1, 1).unwrap();
        let rho = array![[c(1.0)]];
        let b = array![[c(6.0)]];
        let plain = normalized_expectation(&rho, &b, &[false, false], &[false, false], 0.1, &spec).unwrap();
        assert!((plain - 0.5).abs() < 1e-15);
        let loc = normalized_expectation(&rho, &b, &[false, false], &[false, true], 0.1, &spec).unwrap();
        assert!((loc - 0.1 * 6.0 / 4.0).abs() < 1e-15);
        assert!(normalized_expectation(&rho, &b, &[false, true], &[false, true], 0.1, &spec).is_err());
    }

    #[test]
    fn lr_probe_at_time_zero() {
        let h = array![[c(0.0), c(1.0)], [c(1.0), c(0.0)]];
        let o = array![[c(1.0), c(0.0)], [c(0.0), c(0.0)]];
        let a = array![[c(0.0), c(1.0)], [c(0.0), c(0.0)]];
        let rows = lr_probe(&h, &o, &[(1, a.clone())], &[0.0]).unwrap();
        let want = linalg::op_norm(&linalg::commutator(&a, &o));
        assert!((rows[0].norm - want).abs() < 1e-14);
    }
}
