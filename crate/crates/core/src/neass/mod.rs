//! Order-n construction of the non-equilibrium almost-stationary state.
//!
//! The generator `εS = Σ_μ ε^μ A_μ` is built level by level so that the
//! conjugated Hamiltonian `U*(H − iεδ∂_t)U − εδK`, `U = exp(iεS)`, is block
//! diagonal with respect to the unperturbed patch up to order `ε^n`. The
//! potential is carried as the O(1) operator `V/ε` one power of ε up, so its
//! commutators with `A_ν` appear rebracketed at the order they contribute.

pub mod series;

use std::sync::Arc;

use ndarray::Array1;

use crate::driving::TimeFamily;
use crate::dynamics::{evolve_timedep, PropagationConfig, PropagationReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::spectral::{self, GapContext, GapOptions};
use crate::C64;

pub use series::{conjugation_series, duhamel_series, series_commutator, EpsSeries, OpJet};

/// How time derivatives of the generators are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeStrategy {
    /// Forward-mode Taylor jets through the recursion; needs analytic jets
    /// of the perturbation and a constant unperturbed Hamiltonian.
    Jet,
    /// Five-point central differences on a grid of spacing `step`, optionally
    /// repeated at `step/2` to report the discrepancy.
    FiniteDifference { step: f64, richardson: bool },
    /// Jets when available, otherwise differences with the default step.
    Auto,
}

pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrategyUsed {
    Static,
    Jet,
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub struct NeassResult {
    pub epsilon: f64,
    pub n: usize,
    pub delta: f64,
    pub t: f64,
    /// `A_1..A_n`.
    pub a: Vec<CMat>,
    /// Time derivatives of `A_1..A_n`.
    pub a_dot: Vec<CMat>,
    /// Block-diagonal coefficients `C_0..C_n` of the transformed generator.
    pub c: Vec<CMat>,
    /// Effective Hamiltonians `h_0..h_n`.
    pub h: Vec<CMat>,
    /// `S = Σ ε^{μ−1} A_μ`.
    pub s: CMat,
    /// `exp(iεS)`.
    pub unitary: CMat,
    pub pi: CMat,
    /// Projector of the unperturbed patch.
    pub projector: CMat,
    pub k: Option<CMat>,
    pub hamiltonian: CMat,
    /// `‖[Π, H]‖`.
    pub residual_norm: f64,
    pub r_n: CMat,
    /// `‖[Π,H] − ε^{n+1}[Π,R_n]‖`, only meaningful for `δ = 0`.
    pub static_identity_error: Option<f64>,
    pub strategy: StrategyUsed,
    /// Largest change of any `A_μ` when the difference step is halved.
    pub fd_discrepancy: Option<f64>,
}

/// Inputs of one recursion at one time.
struct Point {
    ctx: Arc<GapContext>,
    h0: OpJet,
    /// `V/ε + H_1`
    drive: OpJet,
    /// `V` itself (value only).
    v: CMat,
    h1: CMat,
    /// Parallel-transport generator (zero for a static `H_0`).
    k: OpJet,
}

impl Point {
    fn inverse(&self, x: &OpJet) -> OpJet {
        x.map(|m| self.ctx.inverse.apply(m))
    }

    fn dtilde(&self, x: &CMat) -> CMat {
        spectral::diagonalize_map(x, &self.ctx.h0, &self.ctx.inverse)
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Graded coefficients of `U*H_0U + ε·U*(V/ε+H_1)U − δ·Q − δεK` up to
/// `degree`, with the given generators.
fn graded_generator(p: &Point, a: &[OpJet], a_dot: &[OpJet], delta: f64, degree: usize) -> Result<EpsSeries> {
    let d = p.ctx.dim();
    let s = EpsSeries::from_generators(a, d, degree);
    let mut total = conjugation_series(&s, &EpsSeries::monomial(p.h0.clone(), 0, degree))?;
    let drive = conjugation_series(&s, &EpsSeries::monomial(p.drive.clone(), 1, degree))?;
    total = total.add(&drive)?;
    if delta != 0.0 {
        let sd = EpsSeries::from_generators(a_dot, d, degree);
        let q = duhamel_series(&s, &sd)?;
        total.add_scaled(&q, c(-delta))?;
        if !p.k.is_zero() {
            total.add_scaled(&EpsSeries::monomial(p.k.clone(), 1, degree), c(-delta))?;
        }
    }
    Ok(total)
}

/// One level: returns `A_μ` and the block-diagonal `C_μ`.
fn level(p: &Point, a: &[OpJet], a_dot: &[OpJet], delta: f64, mu: usize) -> Result<(OpJet, OpJet)> {
    let series = graded_generator(p, a, a_dot, delta, mu)?;
    let rhs = &series.coeffs[mu];
    let a_mu = p.inverse(rhs).map(linalg::hermitian_part);
    let fix = p.h0.truncated(a_mu.order()).commutator(&a_mu).scale(I);
    Ok((a_mu.clone(), rhs.add(&fix)))
}

/// `d/dt exp(iX)` given `Ẋ`, via the divided-difference formula in the
/// eigenbasis of `X`.
fn exp_derivative(lambda: &Array1<f64>, w: &CMat, x_dot: &CMat) -> CMat {
    let wd = linalg::dagger(w);
    let xt = wd.dot(x_dot).dot(w);
    let n = lambda.len();
    let g = CMat::from_shape_fn((n, n), |(j, k)| {
        let half = 0.5 * (lambda[j] - lambda[k]);
        let sinc = if half.abs() < 1e-8 {
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        I * (I * 0.5 * (lambda[j] + lambda[k])).exp() * sinc
    });
    w.dot(&(&g * &xt)).dot(&wd)
}

struct Finished {
    a: Vec<CMat>,
    a_dot: Vec<CMat>,
    c: Vec<CMat>,
}

fn finish(
    p: &Point,
    levels: Finished,
    epsilon: f64,
    delta: f64,
    n: usize,
    t: f64,
    strategy: StrategyUsed,
) -> Result<NeassResult> {
    let d = p.ctx.dim();
    let mut eps_s = linalg::zeros(d);
    let mut eps_s_dot = linalg::zeros(d);
    let mut s = linalg::zeros(d);
    for (i, (a, ad)) in levels.a.iter().zip(&levels.a_dot).enumerate() {
        let mu = (i + 1) as i32;
        eps_s.scaled_add(c(epsilon.powi(mu)), a);
        eps_s_dot.scaled_add(c(epsilon.powi(mu)), ad);
        s.scaled_add(c(epsilon.powi(mu - 1)), a);
    }
    let (lambda, w) = linalg::eigh(&eps_s)?;
    let phases = lambda.mapv(|x| (I * x).exp());
    let u = linalg::from_spectrum(&w, &phases);
    let ud = linalg::dagger(&u);
    let proj = p.ctx.projector().clone();
    let pi = linalg::hermitian_part(&u.dot(&proj).dot(&ud));

    let h0 = p.h0.value().clone();
    let ham = &h0 + &p.v + &p.h1.mapv(|z| z * epsilon);

    // exact transformed generator
    let mut full = ud.dot(&ham).dot(&u);
    if delta != 0.0 {
        let u_dot = exp_derivative(&lambda, &w, &eps_s_dot);
        full = full - ud.dot(&u_dot).mapv(|z| z * I * epsilon * delta);
        full.scaled_add(c(-epsilon * delta), p.k.value());
    }
    let mut truncated = linalg::zeros(d);
    for (mu, cm) in levels.c.iter().enumerate() {
        truncated.scaled_add(c(epsilon.powi(mu as i32)), cm);
    }
    let rem = (full - truncated).mapv(|z| z / epsilon.powi(n as i32 + 1));
    let r_n = u.dot(&rem).dot(&ud);

    let comm = linalg::commutator(&pi, &ham);
    let residual_norm = linalg::op_norm(&comm);
    let static_identity_error = if delta == 0.0 {
        let pred = linalg::commutator(&pi, &r_n).mapv(|z| z * epsilon.powi(n as i32 + 1));
        Some(linalg::op_norm(&(comm - pred)))
    } else {
        None
    };

    let mut h = Vec::with_capacity(n + 1);
    h.push(&h0 + &p.dtilde(&p.v));
    for (mu, cm) in levels.c.iter().enumerate().skip(1) {
        if mu == 1 {
            h.push(linalg::hermitian_part(&p.dtilde(&(cm - &p.v.mapv(|z| z / epsilon)))));
        } else {
            h.push(linalg::hermitian_part(&p.dtilde(cm)));
        }
    }

    let k = if p.k.is_zero() { None } else { Some(p.k.value().clone()) };
    Ok(NeassResult {
        epsilon,
        n,
        delta,
        t,
        a: levels.a,
        a_dot: levels.a_dot,
        c: levels.c,
        h,
        s,
        unitary: u,
        pi,
        projector: proj,
        k,
        hamiltonian: ham,
        residual_norm,
        r_n,
        static_identity_error,
        strategy,
        fd_discrepancy: None,
    })
}

/// Run all levels at a single point whose inputs are jets; derivatives of
/// the generators come from the jets themselves.
fn run_jet(p: &Point, delta: f64, n: usize) -> Result<Finished> {
    let mut a: Vec<OpJet> = Vec::with_capacity(n);
    let mut a_dot: Vec<OpJet> = Vec::with_capacity(n);
    let mut cs = vec![p.h0.value().clone()];
    for mu in 1..=n {
        let (a_mu, c_mu) = level(p, &a, &a_dot, delta, mu)?;
        a_dot.push(a_mu.derivative());
        a.push(a_mu);
        cs.push(c_mu.value().clone());
    }
    Ok(Finished {
        a: a.iter().map(|x| x.value().clone()).collect(),
        a_dot: a_dot.iter().map(|x| x.value().clone()).collect(),
        c: cs,
    })
}

fn check_params(epsilon: f64, delta: f64, n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::Invalid("expansion order must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Invalid(format!("delta must lie in [0,1], got {delta}")));
    }
    Ok(())
}

/// Time-independent construction (`δ = 0`) for `H = H_0 + V + εH_1`.
pub fn build_static_neass(ctx: &GapContext, v: &CMat, h1: &CMat, epsilon: f64, n: usize) -> Result<NeassResult> {
    check_params(epsilon, 0.0, n)?;
    let d = ctx.dim();
    for (m, what) in [(v, "potential"), (h1, "perturbation")] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Shape(format!(
                "{what} has shape {:?}, expected {d}x{d}",
                m.shape()
            )));
        }
    }
    let p = Point {
        ctx: Arc::new(ctx.clone()),
        h0: OpJet::constant(ctx.h0.clone()),
        drive: OpJet::constant(v.mapv(|z| z / epsilon) + h1),
        v: v.clone(),
        h1: h1.clone(),
        k: OpJet::zero(d, 0),
    };
    let levels = run_jet(&p, 0.0, n)?;
    finish(&p, levels, epsilon, 0.0, n, 0.0, StrategyUsed::Static)
}

/// Parameters shared by the time-dependent constructions.
#[derive(Clone, Debug)]
pub struct SpacetimeOptions {
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    pub sector: usize,
    pub gap: GapOptions,
    pub strategy: DerivativeStrategy,
}

/// `K = −I(Ḣ_0)`, the generator of parallel transport of the patch.
pub fn transport_generator(ctx: &GapContext, h0_dot: &CMat) -> CMat {
    linalg::hermitian_part(&ctx.inverse.apply(h0_dot).mapv(|z| -z))
}

fn point_at(
    family: &dyn TimeFamily,
    t: f64,
    opts: &SpacetimeOptions,
    shared: Option<&Arc<GapContext>>,
) -> Result<Point> {
    let ctx = match shared {
        Some(c) => c.clone(),
        None => Arc::new(GapContext::new(&family.h0(t), opts.sector, &opts.gap)?),
    };
    let d = ctx.dim();
    let v = family.v(t);
    let h1 = family.h1(t);
    let k = if family.h0_is_static() {
        OpJet::zero(d, 0)
    } else {
        OpJet::constant(transport_generator(&ctx, &family.h0_dot(t)))
    };
    Ok(Point {
        h0: OpJet::constant(ctx.h0.clone()),
        drive: OpJet::constant(v.mapv(|z| z / opts.epsilon) + &h1),
        v,
        h1,
        k,
        ctx,
    })
}

/// Time-dependent construction at time `t` for adiabatic parameter `δ`.
pub fn build_spacetime_neass(family: &dyn TimeFamily, t: f64, opts: &SpacetimeOptions) -> Result<NeassResult> {
    check_params(opts.epsilon, opts.delta, opts.n)?;
    let strategy = match opts.strategy {
        DerivativeStrategy::Auto if family.h0_is_static() => DerivativeStrategy::Jet,
        DerivativeStrategy::Auto => DerivativeStrategy::FiniteDifference {
            step: DEFAULT_FD_STEP,
            richardson: false,
        },
        s => s,
    };
    match strategy {
        DerivativeStrategy::Jet => {
            if !family.h0_is_static() {
                return Err(Error::Derivative(
                    "jet strategy needs a time-independent unperturbed Hamiltonian".into(),
                ));
            }
            let (vj, h1j) = family
                .perturbation_jets(t, opts.n)
                .ok_or_else(|| Error::Derivative("family provides no analytic jets".into()))?;
            let mut p = point_at(family, t, opts, None)?;
            p.drive = vj.scale(c(1.0 / opts.epsilon)).add(&h1j);
            p.h0 = OpJet::constant_with_order(p.h0.value().clone(), opts.n);
            let levels = run_jet(&p, opts.delta, opts.n)?;
            finish(&p, levels, opts.epsilon, opts.delta, opts.n, t, StrategyUsed::Jet)
        }
        DerivativeStrategy::FiniteDifference { step, richardson } => {
            let mut res = run_fd(family, t, opts, step)?;
            if richardson {
                let fine = run_fd(family, t, opts, step / 2.0)?;
                let disc = res
                    .a
                    .iter()
                    .zip(&fine.a)
                    .map(|(x, y)| linalg::max_abs(&(x - y)))
                    .fold(0.0, f64::max);
                res.fd_discrepancy = Some(disc);
            }
            Ok(res)
        }
        DerivativeStrategy::Auto => unreachable!(),
    }
}

fn stencil(vals: [&OpJet; 4], h: f64) -> OpJet {
    // (f(−2) − 8f(−1) + 8f(1) − f(2)) / 12h
    let [m2, m1, p1, p2] = vals;
    let mut acc = m2.scale(c(1.0));
    acc.add_scaled(m1, c(-8.0));
    acc.add_scaled(p1, c(8.0));
    acc.add_scaled(p2, c(-1.0));
    acc.scale(c(1.0 / (12.0 * h)))
}

fn run_fd(family: &dyn TimeFamily, t: f64, opts: &SpacetimeOptions, h: f64) -> Result<NeassResult> {
    if !(h > 0.0) || t + h == t {
        return Err(Error::Derivative(format!("difference step {h} underflows at t = {t}")));
    }
    let n = opts.n;
    let g = 2 * n as i64;
    let shared = if family.h0_is_static() {
        Some(Arc::new(GapContext::new(&family.h0(t), opts.sector, &opts.gap)?))
    } else {
        None
    };
    let idx = |j: i64| (j + g) as usize;
    let mut points = Vec::with_capacity((2 * g + 1) as usize);
    for j in -g..=g {
        points.push(point_at(family, t + j as f64 * h, opts, shared.as_ref())?);
    }
    // a[ν][j], a_dot[ν][j]
    let mut a: Vec<Vec<Option<OpJet>>> = Vec::new();
    let mut a_dot: Vec<Vec<Option<OpJet>>> = Vec::new();
    let mut c_mid: Vec<CMat> = vec![points[idx(0)].h0.value().clone()];
    for mu in 1..=n {
        let reach = g - 2 * (mu as i64 - 1);
        // derivatives of the previous level where needed
        if mu >= 2 {
            let prev = &a[mu - 2];
            let mut row = vec![None; (2 * g + 1) as usize];
            for j in -reach..=reach {
                let get = |k: i64| prev[idx(k)].as_ref().expect("level computed on wider range");
                row[idx(j)] = Some(stencil([get(j - 2), get(j - 1), get(j + 1), get(j + 2)], h));
            }
            a_dot.push(row);
        }
        let mut row_a = vec![None; (2 * g + 1) as usize];
        for j in -reach..=reach {
            let p = &points[idx(j)];
            let prev_a: Vec<OpJet> = (0..mu - 1).map(|nu| a[nu][idx(j)].clone().unwrap()).collect();
            let prev_d: Vec<OpJet> = (0..mu - 1).map(|nu| a_dot[nu][idx(j)].clone().unwrap()).collect();
            let (a_mu, c_mu) = level(p, &prev_a, &prev_d, opts.delta, mu)?;
            if j == 0 {
                c_mid.push(c_mu.value().clone());
            }
            row_a[idx(j)] = Some(a_mu);
        }
        a.push(row_a);
    }
    let last = &a[n - 1];
    let get = |k: i64| last[idx(k)].as_ref().unwrap();
    let final_dot = stencil([get(-2), get(-1), get(1), get(2)], h);
    let mut dots: Vec<CMat> = (0..n - 1)
        .map(|nu| a_dot[nu][idx(0)].as_ref().unwrap().value().clone())
        .collect();
    dots.push(final_dot.value().clone());
    let levels = Finished {
        a: (0..n)
            .map(|nu| a[nu][idx(0)].as_ref().unwrap().value().clone())
            .collect(),
        a_dot: dots,
        c: c_mid,
    };
    finish(
        &points[idx(0)],
        levels,
        opts.epsilon,
        opts.delta,
        n,
        t,
        StrategyUsed::FiniteDifference,
    )
}

/// `‖iεδ Π̇ − [H,Π] − ε^{n+1}[Π,R_n]‖` with `Π̇` from five-point central
/// differences of step `h`.
pub fn pidot_residual(family: &dyn TimeFamily, t: f64, opts: &SpacetimeOptions, h: f64) -> Result<f64> {
    let mid = build_spacetime_neass(family, t, opts)?;
    let at = |k: f64| build_spacetime_neass(family, t + k * h, opts).map(|r| OpJet::constant(r.pi));
    let pdot = stencil([&at(-2.0)?, &at(-1.0)?, &at(1.0)?, &at(2.0)?], h).c.remove(0);
    let e = opts.epsilon;
    let lhs = pdot.mapv(|z| z * I * e * opts.delta) - linalg::commutator(&mid.hamiltonian, &mid.pi);
    let rhs = linalg::commutator(&mid.pi, &mid.r_n).mapv(|z| z * e.powi(opts.n as i32 + 1));
    Ok(linalg::op_norm(&(lhs - rhs)))
}

/// Coefficients `P_0..P_k` of `Π = exp(iεS) P exp(−iεS)` in powers of ε.
pub fn expansion_coefficients(result: &NeassResult, k: usize) -> Result<Vec<CMat>> {
    if k > result.n {
        return Err(Error::Invalid(format!(
            "requested {k} coefficients from an order-{} expansion",
            result.n
        )));
    }
    let d = result.pi.nrows();
    let gens: Vec<OpJet> = result.a.iter().map(|a| OpJet::constant(a.mapv(|z| -z))).collect();
    let s = EpsSeries::from_generators(&gens, d, k);
    let p = EpsSeries::monomial(OpJet::constant(result.projector.clone()), 0, k);
    let series = conjugation_series(&s, &p)?;
    Ok(series.coeffs.into_iter().map(|j| j.value().clone()).collect())
}

/// First-order coefficient from the reduced resolvent: `−[R_0, [V/ε + H_1, P]]`.
pub fn first_order_from_resolvent(ctx: &GapContext, v: &CMat, h1: &CMat, epsilon: f64) -> Result<CMat> {
    let r0 = spectral::reduced_resolvent(&ctx.eigen, &ctx.patch)?;
    let drive = v.mapv(|z| z / epsilon) + h1;
    let inner = linalg::commutator(&drive, ctx.projector());
    Ok(linalg::commutator(&r0, &inner).mapv(|z| -z))
}

#[derive(Clone, Debug)]
pub struct EffectiveReport {
    pub propagation: PropagationReport,
    /// `‖P(t_1) − P_*(t_1) P(t_1) P_*(t_1)‖`.
    pub range_defect: f64,
}

/// Solve `iεδ dP/dt = [εδK + Σ_μ ε^μ h_μ, P]` from a state inside the
/// patch at `t0`.
pub fn effective_propagate(
    p0: &CMat,
    family: &dyn TimeFamily,
    opts: &SpacetimeOptions,
    t0: f64,
    t1: f64,
    cfg: &PropagationConfig,
) -> Result<EffectiveReport> {
    let start = GapContext::new(&family.h0(t0), opts.sector, &opts.gap)?;
    let proj = start.projector();
    let defect = linalg::op_norm(&(p0 - &proj.dot(p0).dot(proj)));
    if defect > 1e-8 {
        return Err(Error::OutsideRange(defect));
    }
    let scale = opts.epsilon * opts.delta;
    if !(scale > 0.0) {
        return Err(Error::Invalid("effective propagation needs δ > 0".into()));
    }
    let failure = std::cell::RefCell::new(None);
    let generator = |t: f64| -> CMat {
        match build_spacetime_neass(family, t, opts) {
            Ok(r) => {
                let mut g = linalg::zeros(r.pi.nrows());
                for (mu, h) in r.h.iter().enumerate() {
                    g.scaled_add(c(opts.epsilon.powi(mu as i32)), h);
                }
                if let Some(k) = &r.k {
                    g.scaled_add(c(scale), k);
                }
                g
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                linalg::zeros(p0.nrows())
            }
        }
    };
    let propagation = evolve_timedep(p0, &generator, t0, t1, scale, cfg)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let end = GapContext::new(&family.h0(t1), opts.sector, &opts.gap)?;
    let pe = end.projector();
    let st = &propagation.state;
    let range_defect = linalg::op_norm(&(st - &pe.dot(st).dot(pe)));
    Ok(EffectiveReport {
        propagation,
        range_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = CMat::from_shape_fn((n, n), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        linalg::hermitian_part(&a)
    }

    fn toy(seed: u64) -> (GapContext, CMat, CMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 8;
        let mut h0 = random_herm(&mut rng, d).mapv(|z| z * 0.3);
        h0[[0, 0]] -= C64::new(3.0, 0.0);
        let ctx = GapContext::new(&h0, 1, &GapOptions::ground_state()).unwrap();
        (ctx, random_herm(&mut rng, d), random_herm(&mut rng, d))
    }

    #[test]
    fn zero_perturbation_gives_patch_projector() {
        let (ctx, _, _) = toy(1);
        let z = linalg::zeros(8);
        let r = build_static_neass(&ctx, &z, &z, 0.1, 3).unwrap();
        assert!(r.a.iter().all(|a| linalg::max_abs(a) < 1e-14));
        assert!(linalg::max_abs(&(&r.pi - ctx.projector())) < 1e-13);
        assert!(r.residual_norm < 1e-12);
    }

    #[test]
    fn static_identity_and_block_structure() {
        let (ctx, w, h1) = toy(2);
        for n in 1..=3 {
            let eps = 0.05;
            let v = w.mapv(|z| z * eps);
            let r = build_static_neass(&ctx, &v, &h1, eps, n).unwrap();
            let scale = linalg::op_norm(&r.hamiltonian);
            assert!(r.static_identity_error.unwrap() < 1e-8 * scale);
            for (mu, cm) in r.c.iter().enumerate() {
                let od = spectral::off_diagonal(cm, ctx.projector());
                assert!(linalg::op_norm(&od) < 1e-10, "C_{mu} off-diagonal");
            }
            for hm in &r.h {
                let cm = linalg::commutator(hm, ctx.projector());
                assert!(linalg::op_norm(&cm) < 1e-9 * linalg::op_norm(hm).max(1.0));
            }
            let pi2 = r.pi.dot(&r.pi);
            assert!(linalg::max_abs(&(&pi2 - &r.pi)) < 1e-10);
        }
    }

    #[test]
    fn residual_scales_with_order() {
        let (ctx, w, h1) = toy(3);
        for n in 1..=3 {
            let res: Vec<f64> = [0.02, 0.01]
                .iter()
                .map(|&e| {
                    build_static_neass(&ctx, &w.mapv(|z| z * e), &h1, e, n)
                        .unwrap()
                        .residual_norm
                })
                .collect();
            let slope = (res[0] / res[1]).ln() / 2f64.ln();
            assert!(slope > n as f64 + 0.7, "n={n} slope={slope}");
        }
    }

    #[test]
    fn first_coefficient_matches_resolvent() {
        let (ctx, w, h1) = toy(4);
        let eps = 0.1;
        let v = w.mapv(|z| z * eps);
        let r = build_static_neass(&ctx, &v, &h1, eps, 2).unwrap();
        let p = expansion_coefficients(&r, 2).unwrap();
        assert!(linalg::max_abs(&(&p[0] - ctx.projector())) < 1e-14);
        let want = first_order_from_resolvent(&ctx, &v, &h1, eps).unwrap();
        assert!(linalg::max_abs(&(&p[1] - &want)) < 1e-10);
        assert!(expansion_coefficients(&r, 3).is_err());
    }

    #[test]
    fn exp_derivative_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_herm(&mut rng, 5);
        let xd = random_herm(&mut rng, 5);
        let (l, w) = linalg::eigh(&x).unwrap();
        let an = exp_derivative(&l, &w, &xd);
        let h = 1e-5;
        let up = linalg::expi(&(&x + &xd.mapv(|z| z * h)), 1.0).unwrap();
        let dn = linalg::expi(&(&x - &xd.mapv(|z| z * h)), 1.0).unwrap();
        let fd = (up - dn).mapv(|z| z / (2.0 * h));
        assert!(linalg::max_abs(&(an - fd)) < 1e-8);
    }
}
