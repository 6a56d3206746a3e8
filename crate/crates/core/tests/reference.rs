mod common;

use std::sync::Arc;

use common::{cylinder, Chain};
use neass_core::driving::{SineSchedule, SwitchedFamily, SwitchingFunction, TimeFamily};
use neass_core::dynamics::{evolve_static, switching_independence_experiment, PropagationConfig};
use neass_core::hall::{dp_dalpha, kubo_sigma, neass_sigma, DpMethod, DEFAULT_ALPHA_STEP};
use neass_core::linalg::{self, CMat};
use neass_core::neass::{
    build_spacetime_neass, build_static_neass, effective_propagate, expansion_coefficients, first_order_from_resolvent,
    pidot_residual, transport_generator, DerivativeStrategy, SpacetimeOptions,
};
use neass_core::spectral::{GapContext, GapOptions};

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn expect(rho: &CMat, b: &CMat) -> f64 {
    linalg::trace(&rho.dot(b)).re
}

fn chain_ctx(chain: &Chain) -> GapContext {
    GapContext::new(&chain.h0, 4, &GapOptions::ground_state()).unwrap()
}

#[test]
fn chain_is_gapped() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    assert_eq!(chain.basis.dim(), 70);
    assert!(ctx.patch.gap > 0.2, "gap {}", ctx.patch.gap);
}

#[test]
fn residual_identity_and_scaling() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    let eps_list = [0.02, 0.04, 0.08, 0.16];
    for n in 1..=3 {
        let r = build_static_neass(&ctx, &chain.potential(0.1), &chain.h1, 0.1, n).unwrap();
        let scale = linalg::op_norm(&r.hamiltonian);
        assert!(r.static_identity_error.unwrap() <= 1e-8 * scale);
        let res: Vec<f64> = eps_list
            .iter()
            .map(|&e| {
                build_static_neass(&ctx, &chain.potential(e), &chain.h1, e, n)
                    .unwrap()
                    .residual_norm
            })
            .collect();
        let s = slope(&eps_list, &res);
        println!("n={n} residuals {res:?} slope {s:.3}");
        assert!(s >= n as f64 + 0.7);
    }
}

#[test]
fn stationarity_drift() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    let eps_list = [0.02, 0.04, 0.08, 0.16];
    let drift: Vec<f64> = eps_list
        .iter()
        .map(|&e| {
            let r = build_static_neass(&ctx, &chain.potential(e), &chain.h1, e, 2).unwrap();
            let rho = evolve_static(&r.pi, &r.hamiltonian, 5.0).unwrap();
            (expect(&rho, &chain.probe) - expect(&r.pi, &chain.probe)).abs()
        })
        .collect();
    let s = slope(&eps_list, &drift);
    println!("drift {drift:?} slope {s:.3}");
    assert!(s >= 2.7);
}

#[test]
fn first_order_expansion() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    let eps_list = [0.02, 0.04, 0.08, 0.16];
    let mut errs = vec![];
    for &e in &eps_list {
        let v = chain.potential(e);
        let r = build_static_neass(&ctx, &v, &chain.h1, e, 1).unwrap();
        let p = expansion_coefficients(&r, 1).unwrap();
        let resolvent = first_order_from_resolvent(&ctx, &v, &chain.h1, e).unwrap();
        assert!(linalg::max_abs(&(&p[1] - &resolvent)) < 1e-8);
        let b = &chain.probe;
        errs.push((expect(&r.pi, b) - expect(ctx.projector(), b) - e * expect(&p[1], b)).abs());
    }
    let s = slope(&eps_list, &errs);
    println!("first-order errors {errs:?} slope {s:.3}");
    assert!(s >= 1.7);
}

#[test]
fn energy_shift_invariance() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    let shifted = &chain.h0 + &linalg::identity(70).mapv(|z| z * 3.0);
    let ctx2 = GapContext::new(&shifted, 4, &GapOptions::ground_state()).unwrap();
    for n in 1..=3 {
        let a = build_static_neass(&ctx, &chain.potential(0.1), &chain.h1, 0.1, n).unwrap();
        let b = build_static_neass(&ctx2, &chain.potential(0.1), &chain.h1, 0.1, n).unwrap();
        assert!(linalg::op_norm(&(&a.pi - &b.pi)) < 1e-10);
    }
}

#[test]
fn switching_lands_on_the_neass() {
    let chain = Chain::new();
    let ctx = chain_ctx(&chain);
    let f1 = SwitchingFunction::smoothstep(7, 1.0);
    let f2 = SwitchingFunction::exp_bump(1.0);
    let cfg = PropagationConfig {
        step: 2e-3,
        ..Default::default()
    };
    let eps_list = [0.05, 0.1, 0.2];
    let mut g1 = vec![];
    let mut g2 = vec![];
    let mut mutual = vec![];
    for &e in &eps_list {
        let rep = switching_independence_experiment(
            &ctx,
            &chain.potential(e),
            &chain.h1,
            e,
            3,
            &f1,
            &f2,
            1.0,
            std::slice::from_ref(&chain.probe),
            &cfg,
        )
        .unwrap();
        println!(
            "eps {e}: to neass {:.3e} {:.3e}, mutual {:.3e}, to P* {:.3e}, self-conv {:?}",
            rep.gap_first[0], rep.gap_second[0], rep.mutual[0], rep.gap_unperturbed[0], rep.first.self_convergence
        );
        if e == 0.05 {
            assert!(rep.gap_first[0] * 10.0 <= rep.gap_unperturbed[0]);
        }
        assert!(rep.first.trace_drift < 1e-8 && rep.first.min_eigenvalue > -1e-8);
        g1.push(rep.gap_first[0]);
        g2.push(rep.gap_second[0]);
        mutual.push(rep.mutual[0]);
    }
    for (name, ys) in [("first", &g1), ("second", &g2), ("mutual", &mutual)] {
        let s = slope(&eps_list, ys);
        println!("{name} slope {s:.3}");
        assert!(s >= 1.7, "{name}");
    }
}

fn switched_chain(eps: f64) -> (Chain, SwitchedFamily) {
    let chain = Chain::new();
    let fam = SwitchedFamily::new(
        chain.h0.clone(),
        chain.potential(eps),
        chain.h1.clone(),
        Arc::new(SwitchingFunction::smoothstep(7, 1.0)),
    );
    (chain, fam)
}

fn options(eps: f64, delta: f64, n: usize, strategy: DerivativeStrategy) -> SpacetimeOptions {
    SpacetimeOptions {
        epsilon: eps,
        delta,
        n,
        sector: 4,
        gap: GapOptions::ground_state(),
        strategy,
    }
}

#[test]
fn spacetime_expansion_on_switching_family() {
    let (_, fam) = switched_chain(0.1);
    let opts = options(0.1, 1.0, 2, DerivativeStrategy::Jet);
    for t in [0.3, 0.5, 0.8] {
        let r = pidot_residual(&fam, t, &opts, 1e-3).unwrap();
        println!("t={t} pidot residual {r:.3e}");
        assert!(r <= 1e-6);
    }
    // jets and finite differences agree
    let jet = build_spacetime_neass(&fam, 0.5, &opts).unwrap();
    let fd = build_spacetime_neass(
        &fam,
        0.5,
        &options(
            0.1,
            1.0,
            2,
            DerivativeStrategy::FiniteDifference {
                step: 1e-3,
                richardson: true,
            },
        ),
    )
    .unwrap();
    for (a, b) in jet.a.iter().zip(&fd.a) {
        assert!(linalg::max_abs(&(a - b)) < 1e-6);
    }
    println!("fd discrepancy {:?}", fd.fd_discrepancy);
    // after the switch every derivative of f vanishes
    for t in [1.0, 1.3] {
        let d1 = build_spacetime_neass(&fam, t, &opts).unwrap();
        let d0 = build_spacetime_neass(&fam, t, &options(0.1, 0.0, 2, DerivativeStrategy::Jet)).unwrap();
        for (a, b) in d1.a.iter().zip(&d0.a) {
            assert!(linalg::max_abs(&(a - b)) < 1e-9);
        }
    }
}

#[test]
fn delta_zero_matches_static() {
    let (chain, fam) = switched_chain(0.1);
    let ctx = chain_ctx(&chain);
    let st = build_static_neass(&ctx, &chain.potential(0.1), &chain.h1, 0.1, 3).unwrap();
    let sp = build_spacetime_neass(&fam, 2.0, &options(0.1, 0.0, 3, DerivativeStrategy::Jet)).unwrap();
    assert!(linalg::max_abs(&(&st.pi - &sp.pi)) < 1e-12);
}

#[test]
fn delta_polynomial_dependence() {
    let (_, fam) = switched_chain(0.1);
    let a: Vec<Vec<CMat>> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&d| {
            build_spacetime_neass(&fam, 0.4, &options(0.1, d, 2, DerivativeStrategy::Jet))
                .unwrap()
                .a
        })
        .collect();
    // A_1 does not depend on δ, A_2 is affine in δ
    assert!(linalg::max_abs(&(&a[0][0] - &a[2][0])) < 1e-12);
    let mid = (&a[0][1] + &a[2][1]).mapv(|z| z * 0.5);
    assert!(linalg::max_abs(&(mid - &a[1][1])) < 1e-9);
}

/// `H_0(t) = H_0 + 0.3 sin(t)·H_1`, a driven unperturbed Hamiltonian.
fn driven_chain(eps: f64) -> SwitchedFamily {
    let chain = Chain::new();
    SwitchedFamily::constant(chain.h0.clone(), chain.potential(eps), linalg::zeros(70)).with_drive(
        chain.h1.clone(),
        Arc::new(SineSchedule {
            amplitude: 0.3,
            omega: 1.0,
            phase: 0.2,
        }),
    )
}

#[test]
fn transport_generator_blocks() {
    let fam = driven_chain(0.1);
    let opts = GapOptions::ground_state();
    let t = 0.7;
    let ctx = GapContext::new(&fam.h0(t), 4, &opts).unwrap();
    let k = transport_generator(&ctx, &fam.h0_dot(t));
    let p = ctx.projector();
    assert!(linalg::op_norm(&p.dot(&k).dot(p)) < 1e-9);
    let h = 1e-4;
    let proj = |s: f64| GapContext::new(&fam.h0(s), 4, &opts).unwrap().patch.projector;
    let pdot = (proj(t + h) - proj(t - h)).mapv(|z| z / (2.0 * h));
    let q = linalg::identity(70) - p;
    let lhs = p.dot(&k).dot(&q);
    let rhs = p.dot(&pdot).mapv(|z| z * -linalg::I);
    assert!(linalg::op_norm(&(lhs - rhs)) < 1e-6);
}

#[test]
fn driven_family_by_finite_differences() {
    let fam = driven_chain(0.1);
    let opts = options(
        0.1,
        1.0,
        2,
        DerivativeStrategy::FiniteDifference {
            step: 1e-3,
            richardson: false,
        },
    );
    assert!(build_spacetime_neass(&fam, 0.5, &options(0.1, 1.0, 2, DerivativeStrategy::Jet)).is_err());
    let r = pidot_residual(&fam, 0.5, &opts, 1e-3).unwrap();
    println!("driven pidot residual {r:.3e}");
    assert!(r <= 1e-6);
}

#[test]
fn effective_dynamics_follows_the_patch() {
    let fam = driven_chain(0.1);
    let opts = options(0.1, 1.0, 1, DerivativeStrategy::Auto);
    let start = GapContext::new(&fam.h0(0.0), 4, &opts.gap).unwrap();
    let cfg = PropagationConfig {
        step: 0.005,
        self_check: false,
        ..Default::default()
    };
    let rep = effective_propagate(start.projector(), &fam, &opts, 0.0, 0.2, &cfg).unwrap();
    let end = GapContext::new(&fam.h0(0.2), 4, &opts.gap).unwrap();
    let dev = linalg::op_norm(&(&rep.propagation.state - end.projector()));
    println!("effective deviation {dev:.3e} range defect {:.3e}", rep.range_defect);
    assert!(dev < 1e-6);
}

#[test]
fn hall_response_of_flux_cylinder() {
    let (fam, basis) = cylinder(false);
    let opts = GapOptions::ground_state();
    assert_eq!(basis.dim(), 220);
    let fd = dp_dalpha(
        &fam,
        &basis,
        &opts,
        DpMethod::FiniteDifference {
            step: DEFAULT_ALPHA_STEP,
        },
    )
    .unwrap();
    let rs = dp_dalpha(&fam, &basis, &opts, DpMethod::Resolvent).unwrap();
    assert!(linalg::max_abs(&(&fd - &rs)) <= 1e-6);
    let kubo = kubo_sigma(&fam, &basis, &opts, &rs).unwrap();
    assert!(kubo.imaginary.abs() < 1e-9);
    let eps_list = [0.05, 0.1, 0.2];
    let mut errs = vec![];
    for &e in &eps_list {
        let s = neass_sigma(&fam, &basis, &opts, e, 2, 0.0).unwrap();
        let shifted = neass_sigma(&fam, &basis, &opts, e, 2, 0.7).unwrap();
        assert!((s.full - shifted.full).abs() < 1e-9);
        assert!((s.first_order - kubo.sigma).abs() < 1e-8);
        errs.push((s.full - kubo.sigma).abs());
    }
    let sl = slope(&eps_list, &errs);
    println!("kubo {:.6} errors {errs:?} slope {sl:.3}", kubo.sigma);
    assert!(sl >= 0.8);
}

#[test]
fn hall_control_model_vanishes() {
    let (fam, basis) = cylinder(true);
    let opts = GapOptions::ground_state();
    let rs = dp_dalpha(&fam, &basis, &opts, DpMethod::Resolvent).unwrap();
    let kubo = kubo_sigma(&fam, &basis, &opts, &rs).unwrap();
    let s = neass_sigma(&fam, &basis, &opts, 0.1, 2, 0.0).unwrap();
    println!("control kubo {:.3e} neass {:.3e}", kubo.sigma, s.full);
    assert!(kubo.sigma.abs() <= 1e-9 && s.full.abs() <= 1e-9);
}
