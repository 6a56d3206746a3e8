//! E5: structural checks. Inverse Liouvillian identities, the monomial
//! basis, the commutator bound on random interactions and invariance under
//! a shift of the energy zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neass_core::fock::{adjoint_string, decompose, reconstruct, Ladder, Mode, Monomial, OpString};
use neass_core::interactions::{
    check_vcomm_bound, Adjointness, DecayFunction, Interaction, NormGeometry, SlowPotential, Term,
};
use neass_core::linalg::{self, CMat, I};
use neass_core::neass::build_static_neass;
use neass_core::spectral::{off_diagonal, Bridge, GapContext, LiouvillianInverse, WeightFunction};
use neass_core::C64;

use super::{bound_check, combine, core_err, Context, ExperimentOutput, Row};
use crate::config::ExperimentId;
use crate::model::Physics;
use crate::Result;

const ID: ExperimentId = ExperimentId::E5;
const BASIS_MODES: usize = 4;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    CMat::from_shape_fn((n, n), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn inverse_identities(ph: &Physics, gap: &GapContext, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Row>> {
    let p = gap.projector();
    let q = &linalg::identity(ph.dim()) - p;
    let other_bridge = match gap.weight.bridge {
        Bridge::Exponential => Bridge::Quintic,
        Bridge::Quintic => Bridge::Exponential,
    };
    let wf = WeightFunction::new(gap.weight.g, gap.weight.g_tilde, other_bridge).map_err(core_err("E5 weight"))?;
    let other = LiouvillianInverse::new(&gap.eigen, &wf);
    let (mut sign, mut block, mut bridge) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        let b = linalg::hermitian_part(&random_matrix(rng, ph.dim()));
        let nb = linalg::op_norm(&b);
        let ib = gap.inverse.apply(&b);
        let back = linalg::commutator(&ph.h0, &ib).mapv(|z| z * I);
        let cross = |m: &CMat| p.dot(m).dot(&q);
        sign = sign.max(linalg::op_norm(&off_diagonal(&(&back + &b), p)) / nb);
        block = block.max(linalg::op_norm(&p.dot(&ib).dot(p)) / nb);
        bridge = bridge.max(linalg::max_abs(&(cross(&ib) - cross(&other.apply(&b)))) / nb);
    }
    Ok(vec![
        Row::new(ID, "imap_sign", sign),
        Row::new(ID, "imap_patch_block", block),
        Row::new(ID, "imap_bridge", bridge),
    ])
}

fn monomial_rows(rng: &mut ChaCha8Rng, roundtrips: usize) -> Result<Vec<Row>> {
    let basis: Vec<CMat> = Monomial::all(BASIS_MODES)
        .iter()
        .map(|m| m.matrix())
        .collect::<neass_core::Result<_>>()
        .map_err(core_err("E5 monomials"))?;
    let mut gram = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        let ad = linalg::dagger(a);
        for (j, b) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            gram = gram.max((linalg::trace(&ad.dot(b)) - want).norm());
        }
    }
    let mut rows = vec![Row::new(ID, "monomial_orthonormality", gram)];
    let full = 1usize << BASIS_MODES;
    let mut worst = 0.0f64;
    for _ in 0..roundtrips {
        let a = random_matrix(rng, full);
        let coeffs = decompose(&a, BASIS_MODES).map_err(core_err("E5 decomposition"))?;
        let back = reconstruct(&coeffs, BASIS_MODES).map_err(core_err("E5 reconstruction"))?;
        worst = worst.max(linalg::max_abs(&(&back - &a)));
    }
    rows.push(Row::new(ID, "monomial_roundtrip", worst));
    Ok(rows)
}

/// `c·c†_a c†_b c_c c_d + h.c.` on up to four sites.
fn pair_hopping(rng: &mut ChaCha8Rng, modes: &[usize]) -> Vec<(C64, OpString)> {
    let pick = |rng: &mut ChaCha8Rng| modes[rng.gen_range(0..modes.len())];
    let (a, b) = loop {
        let (a, b) = (pick(rng), pick(rng));
        if a != b {
            break (a, b);
        }
    };
    let (c, d) = loop {
        let (c, d) = (pick(rng), pick(rng));
        if c != d {
            break (c, d);
        }
    };
    let coeff = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let ops = vec![
        (a, Ladder::Create),
        (b, Ladder::Create),
        (c, Ladder::Annihilate),
        (d, Ladder::Annihilate),
    ];
    let adj = adjoint_string(coeff, &ops);
    vec![(coeff, ops), adj]
}

/// A random interaction whose terms each live on at most four sites.
fn random_interaction(ph: &Physics, rng: &mut ChaCha8Rng, terms: usize) -> Result<Interaction> {
    let spec = &ph.spec;
    let ns = spec.num_sites();
    let s = spec.spin();
    let mut phi = Interaction::new(spec, Adjointness::Hermitian);
    for _ in 0..terms {
        let a = Mode::new(rng.gen_range(0..ns), rng.gen_range(0..s));
        let mut b = Mode::new(rng.gen_range(0..ns), rng.gen_range(0..s));
        if a == b {
            b = Mode::new((a.site + 1) % ns, a.spin);
        }
        let term = match rng.gen_range(0..4) {
            0 if a != b => Term::Hopping {
                from: a,
                to: b,
                amp: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            },
            1 if a != b => Term::Density {
                a,
                b,
                w: rng.gen_range(-1.0..1.0),
            },
            2 if ns * s >= 2 => {
                let mut sites: Vec<usize> = (0..rng.gen_range(1..=4.min(ns)))
                    .map(|_| rng.gen_range(0..ns))
                    .collect();
                sites.sort_unstable();
                sites.dedup();
                let modes: Vec<usize> = sites
                    .iter()
                    .flat_map(|&x| (0..s).map(move |sp| Mode::new(x, sp).index(s)))
                    .collect();
                if modes.len() < 2 {
                    continue;
                }
                Term::Strings {
                    strings: pair_hopping(rng, &modes),
                    sites,
                }
            }
            _ => Term::OnSite {
                mode: a,
                value: rng.gen_range(-1.0..1.0),
            },
        };
        phi.push(term).map_err(core_err("E5 random interaction"))?;
    }
    Ok(phi)
}

fn bound_rows(ctx: &Context, rng: &mut ChaCha8Rng, instances: usize) -> Result<Vec<Row>> {
    let ph = ctx.physics;
    let sweep = &ctx.cfg.sweep.epsilon;
    let geom = NormGeometry::plain(ph.spec.dim());
    let zeta = DecayFunction::Exponential { a: 0.5 };
    let mut violations = 0usize;
    let mut ratio = 0.0f64;
    for _ in 0..instances {
        let phi = random_interaction(ph, rng, 6)?;
        let eps = sweep[rng.gen_range(0..sweep.len())];
        // Configured profile when there is one, a unit ramp otherwise, with local jitter.
        let base: Vec<f64> = match ph.slow_potential(eps) {
            Ok(v) => v.values,
            Err(_) => ph.spec.sites().iter().map(|x| eps * x.coords[0] as f64).collect(),
        };
        let v = SlowPotential {
            values: base.iter().map(|b| b + eps * rng.gen_range(-0.5..0.5)).collect(),
            epsilon: eps,
        };
        let rep = check_vcomm_bound(&phi, &v, &zeta, 0, &geom).map_err(core_err("E5 commutator bound"))?;
        if !rep.safe_holds {
            violations += 1;
        }
        if rep.paper_rhs > 0.0 {
            ratio = ratio.max(rep.lhs / rep.paper_rhs);
        }
    }
    Ok(vec![
        Row::new(ID, "vcomm_safe_violations", violations as f64),
        Row::new(ID, "vcomm_paper_ratio", ratio),
    ])
}

fn shift_rows(ctx: &Context, gap: &GapContext, shift: f64) -> Result<Vec<Row>> {
    let ph = ctx.physics;
    let e = ctx.cfg.checks.identity_epsilon.unwrap_or(0.1);
    let moved = &ph.h0 + &linalg::identity(ph.dim()).mapv(|z| z * shift);
    let gap2 = GapContext::new(&moved, ph.particles(), &ph.gap).map_err(core_err("E5 shifted patch"))?;
    let v = ph.potential(e).map_err(core_err("E5 potential"))?;
    let mut rows = vec![];
    for &n in &ctx.cfg.sweep.n {
        let a = build_static_neass(gap, &v, &ph.h1, e, n).map_err(core_err("E5 expansion"))?;
        let b = build_static_neass(&gap2, &v, &ph.h1, e, n).map_err(core_err("E5 expansion"))?;
        rows.push(
            Row::new(ID, "energy_shift", linalg::max_abs(&(&a.pi - &b.pi)))
                .eps(e)
                .order(n),
        );
    }
    Ok(rows)
}

pub fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let ph = ctx.physics;
    let checks = &ctx.cfg.checks;
    let gap = GapContext::new(&ph.h0, ph.particles(), &ph.gap).map_err(core_err("E5 gapped patch"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed());

    let mut rows = inverse_identities(ph, &gap, &mut rng, checks.random_operators.unwrap_or(20))?;
    rows.extend(monomial_rows(&mut rng, checks.monomial_roundtrips.unwrap_or(50))?);
    rows.extend(bound_rows(ctx, &mut rng, checks.bound_instances.unwrap_or(200))?);
    rows.extend(shift_rows(ctx, &gap, checks.energy_shift.unwrap_or(3.0))?);

    let criteria = vec![
        combine(
            "A6",
            vec![
                bound_check(&rows, "imap_sign", 1e-10),
                bound_check(&rows, "imap_patch_block", 1e-10),
                bound_check(&rows, "imap_bridge", 1e-12),
            ],
        ),
        combine(
            "A7",
            vec![
                bound_check(&rows, "monomial_orthonormality", 1e-12),
                bound_check(&rows, "monomial_roundtrip", 1e-10),
            ],
        ),
        combine("A8", vec![bound_check(&rows, "vcomm_safe_violations", 0.0)]),
        combine("A12", vec![bound_check(&rows, "energy_shift", 1e-10)]),
    ];
    Ok(ExperimentOutput {
        id: ID,
        rows,
        fits: vec![],
        criteria,
    })
}
