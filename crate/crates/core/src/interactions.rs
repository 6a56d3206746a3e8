//! Interactions as collections of local number-conserving terms, their
//! quasi-locality norms, slowly varying potentials and commutators with them.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, Ladder, Mode, OpString, SectorBasis, SectorOperator};
use crate::lattice::{LatticeSpec, LocalizationVector, Site};
use crate::linalg::{self, CMat};

/// Whether an interaction (and each of its terms) is self-adjoint or
/// anti-self-adjoint. Commutators of Hermitian terms with a potential are
/// anti-Hermitian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjointness {
    Hermitian,
    AntiHermitian,
}

#[derive(Clone, Debug)]
pub enum Term {
    /// `amp·a*_from a_to + h.c.`
    Hopping { from: Mode, to: Mode, amp: C64 },
    /// `value·a*_m a_m`
    OnSite { mode: Mode, value: f64 },
    /// `w·n_{x,i} n_{y,j}` with `x != y` or `i != j`.
    Density { a: Mode, b: Mode, w: f64 },
    /// Arbitrary sum of number-conserving strings on the given sites.
    Strings {
        sites: Vec<usize>,
        strings: Vec<(C64, OpString)>,
    },
}

impl Term {
    pub fn support(&self) -> Vec<usize> {
        let mut s = match self {
            Term::Hopping { from, to, .. } => vec![from.site, to.site],
            Term::OnSite { mode, .. } => vec![mode.site],
            Term::Density { a, b, .. } => vec![a.site, b.site],
            Term::Strings { sites, .. } => sites.clone(),
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn strings(&self, s: usize) -> Vec<(C64, OpString)> {
        match self {
            Term::Hopping { from, to, amp } => {
                let (f, t) = (from.index(s), to.index(s));
                let fwd = vec![(f, Ladder::Create), (t, Ladder::Annihilate)];
                let (c, back) = fock::adjoint_string(*amp, &fwd);
                vec![(*amp, fwd), (c, back)]
            }
            Term::OnSite { mode, value } => {
                let m = mode.index(s);
                vec![(
                    C64::new(*value, 0.0),
                    vec![(m, Ladder::Create), (m, Ladder::Annihilate)],
                )]
            }
            Term::Density { a, b, w } => {
                let (p, q) = (a.index(s), b.index(s));
                vec![(
                    C64::new(*w, 0.0),
                    vec![
                        (p, Ladder::Create),
                        (p, Ladder::Annihilate),
                        (q, Ladder::Create),
                        (q, Ladder::Annihilate),
                    ],
                )]
            }
            Term::Strings { strings, .. } => strings.clone(),
        }
    }

    fn scaled(&self, c: f64) -> Term {
        match self {
            Term::Hopping { from, to, amp } => Term::Hopping {
                from: *from,
                to: *to,
                amp: amp * c,
            },
            Term::OnSite { mode, value } => Term::OnSite {
                mode: *mode,
                value: value * c,
            },
            Term::Density { a, b, w } => Term::Density { a: *a, b: *b, w: w * c },
            Term::Strings { sites, strings } => Term::Strings {
                sites: sites.clone(),
                strings: strings.iter().map(|(z, s)| (z * c, s.clone())).collect(),
            },
        }
    }
}

/// Sum of local terms on a fixed lattice.
#[derive(Clone, Debug)]
pub struct Interaction {
    spec: LatticeSpec,
    terms: Vec<Term>,
    adjointness: Adjointness,
}

impl Interaction {
    pub fn new(spec: &LatticeSpec, adjointness: Adjointness) -> Self {
        Interaction {
            spec: spec.clone(),
            terms: Vec::new(),
            adjointness,
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn adjointness(&self) -> Adjointness {
        self.adjointness
    }

    /// Add a term after checking its support, number conservation and (for
    /// raw strings) its adjointness.
    pub fn push(&mut self, term: Term) -> Result<()> {
        let nsites = self.spec.num_sites();
        let s = self.spec.spin();
        let modes_ok = |m: &Mode| m.site < nsites && m.spin < s;
        match &term {
            Term::Hopping { from, to, .. } => {
                if !modes_ok(from) || !modes_ok(to) {
                    return Err(Error::SupportOutside(format!("{from:?} / {to:?}")));
                }
                if self.adjointness != Adjointness::Hermitian {
                    return Err(Error::Adjointness {
                        expected: "anti-Hermitian",
                        deviation: f64::NAN,
                    });
                }
            }
            Term::OnSite { mode, .. } => {
                if !modes_ok(mode) {
                    return Err(Error::SupportOutside(format!("{mode:?}")));
                }
                if self.adjointness != Adjointness::Hermitian {
                    return Err(Error::Adjointness {
                        expected: "anti-Hermitian",
                        deviation: f64::NAN,
                    });
                }
            }
            Term::Density { a, b, .. } => {
                if !modes_ok(a) || !modes_ok(b) {
                    return Err(Error::SupportOutside(format!("{a:?} / {b:?}")));
                }
                if a == b {
                    return Err(Error::Invalid("density term needs two distinct modes".into()));
                }
                if self.adjointness != Adjointness::Hermitian {
                    return Err(Error::Adjointness {
                        expected: "anti-Hermitian",
                        deviation: f64::NAN,
                    });
                }
            }
            Term::Strings { sites, strings } => {
                if sites.iter().any(|&x| x >= nsites) {
                    return Err(Error::SupportOutside(format!("{sites:?}")));
                }
                for (_, st) in strings {
                    if fock::particle_change(st) != 0 {
                        return Err(Error::NotNumberConserving);
                    }
                    if st.iter().any(|&(m, _)| !sites.contains(&(m / s))) {
                        return Err(Error::SupportOutside(format!(
                            "string acts outside declared sites {sites:?}"
                        )));
                    }
                }
                let (local, _) = local_matrix(&term, s)?;
                check_adjointness(&local, self.adjointness)?;
            }
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn extend(&mut self, other: &Interaction) -> Result<()> {
        if other.adjointness != self.adjointness || other.spec != self.spec {
            return Err(Error::Invalid("incompatible interactions".into()));
        }
        self.terms.extend(other.terms.iter().cloned());
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Interaction {
        Interaction {
            spec: self.spec.clone(),
            terms: self.terms.iter().map(|t| t.scaled(c)).collect(),
            adjointness: self.adjointness,
        }
    }

    pub fn all_strings(&self) -> Vec<(C64, OpString)> {
        let s = self.spec.spin();
        self.terms.iter().flat_map(|t| t.strings(s)).collect()
    }

    /// Terms grouped by their support set.
    pub fn grouped(&self) -> BTreeMap<Vec<usize>, Vec<&Term>> {
        let mut map: BTreeMap<Vec<usize>, Vec<&Term>> = BTreeMap::new();
        for t in &self.terms {
            map.entry(t.support()).or_default().push(t);
        }
        map
    }
}

fn check_adjointness(m: &CMat, adj: Adjointness) -> Result<()> {
    let scale = linalg::max_abs(m).max(1.0);
    let (dev, name) = match adj {
        Adjointness::Hermitian => (linalg::hermiticity_defect(m), "Hermitian"),
        Adjointness::AntiHermitian => (linalg::anti_hermiticity_defect(m), "anti-Hermitian"),
    };
    if dev > 1e-10 * scale {
        return Err(Error::Adjointness {
            expected: name,
            deviation: dev,
        });
    }
    Ok(())
}

/// Relabel the modes of `sites` to `0..k` (order preserving).
fn local_relabel(strings: &[(C64, OpString)], sites: &[usize], s: usize) -> Vec<(C64, OpString)> {
    let local = |m: usize| {
        let pos = sites.iter().position(|&x| x == m / s).expect("mode within sites");
        pos * s + m % s
    };
    strings
        .iter()
        .map(|(c, st)| (*c, st.iter().map(|&(m, l)| (local(m), l)).collect()))
        .collect()
}

/// Full-Fock matrix of a term on the modes of its support and the mode count.
pub fn local_matrix(term: &Term, s: usize) -> Result<(CMat, usize)> {
    let sites = term.support();
    let modes = sites.len() * s;
    let strings = local_relabel(&term.strings(s), &sites, s);
    Ok((fock::full_matrix(&strings, modes)?, modes))
}

/// Operator norm of `Φ(X)`, the sum of all terms supported on `sites`.
pub fn local_norm(terms: &[&Term], sites: &[usize], s: usize) -> Result<f64> {
    let modes = sites.len() * s;
    let strings: Vec<(C64, OpString)> = terms
        .iter()
        .flat_map(|t| local_relabel(&t.strings(s), sites, s))
        .collect();
    let m = fock::full_matrix(&strings, modes)?;
    Ok(linalg::op_norm(&m))
}

/// `Σ_X Φ(X)` restricted to the `N`-particle sector.
pub fn assemble(phi: &Interaction, basis: &SectorBasis) -> Result<SectorOperator> {
    if basis.modes() != phi.spec.num_modes() {
        return Err(Error::Shape(format!(
            "basis has {} modes, lattice {}",
            basis.modes(),
            phi.spec.num_modes()
        )));
    }
    let m = fock::strings_matrix(&phi.all_strings(), basis, basis)?;
    check_adjointness(&m, phi.adjointness)?;
    Ok(SectorOperator {
        n_in: basis.particles(),
        n_out: basis.particles(),
        matrix: m,
    })
}

/// Translation-invariant model data on a spin-`s` lattice. Matrices are `s×s`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    /// Hopping kernel entries `T(d)` keyed by displacement.
    pub hopping: Vec<(Vec<i64>, CMat)>,
    /// On-site field `φ(x)` per site (linear index order); empty means zero.
    pub onsite: Vec<CMat>,
    /// Pair kernel `W(r)` keyed by distance `r ≥ 1`.
    pub density: Vec<(u64, CMat)>,
    pub mu: f64,
}

fn kernel_at<'a>(kernel: &'a [(Vec<i64>, CMat)], d: &[i64]) -> Option<&'a CMat> {
    kernel.iter().find(|(k, _)| k.as_slice() == d).map(|(_, m)| m)
}

/// The Hamiltonian `Σ a*_x T(x−y) a_y + Σ a*_x φ(x) a_x + Σ_{x≠y} W(d) n_x n_y − μ𝔑`.
pub fn build_model(spec: &LatticeSpec, model: &ModelSpec) -> Result<Interaction> {
    let s = spec.spin();
    let nsites = spec.num_sites();
    let check_shape = |m: &CMat, what: &str| -> Result<()> {
        if m.nrows() != s || m.ncols() != s {
            return Err(Error::Shape(format!("{what} must be {s}x{s}")));
        }
        Ok(())
    };
    for (d, t) in &model.hopping {
        if d.len() != spec.dim() {
            return Err(Error::Shape("hopping displacement has wrong dimension".into()));
        }
        check_shape(t, "hopping matrix")?;
    }
    let mut phi = Interaction::new(spec, Adjointness::Hermitian);
    let sites = spec.sites();
    for x in 0..nsites {
        for y in x..nsites {
            let dxy = spec.diff(&sites[x], &sites[y]);
            let dyx = spec.diff(&sites[y], &sites[x]);
            let txy = kernel_at(&model.hopping, &dxy);
            let tyx = kernel_at(&model.hopping, &dyx);
            if x == y {
                if let Some(t) = txy {
                    if linalg::hermiticity_defect(t) > 1e-12 {
                        return Err(Error::NonSelfAdjointKernel("T(0) is not Hermitian".into()));
                    }
                    for i in 0..s {
                        phi.push(Term::OnSite {
                            mode: Mode::new(x, i),
                            value: t[(i, i)].re,
                        })?;
                        for j in i + 1..s {
                            if t[(i, j)].norm() != 0.0 {
                                phi.push(Term::Hopping {
                                    from: Mode::new(x, i),
                                    to: Mode::new(x, j),
                                    amp: t[(i, j)],
                                })?;
                            }
                        }
                    }
                }
                continue;
            }
            let zero = linalg::zeros(s);
            let a = txy.unwrap_or(&zero);
            let b = tyx.unwrap_or(&zero);
            if linalg::max_abs(&(b - &linalg::dagger(a))) > 1e-12 {
                return Err(Error::NonSelfAdjointKernel(format!("T({dyx:?}) != T({dxy:?})*")));
            }
            for i in 0..s {
                for j in 0..s {
                    if a[(i, j)].norm() != 0.0 {
                        phi.push(Term::Hopping {
                            from: Mode::new(x, i),
                            to: Mode::new(y, j),
                            amp: a[(i, j)],
                        })?;
                    }
                }
            }
        }
    }
    if !model.onsite.is_empty() {
        if model.onsite.len() != nsites {
            return Err(Error::Shape("on-site field needs one matrix per site".into()));
        }
        for (x, f) in model.onsite.iter().enumerate() {
            check_shape(f, "on-site matrix")?;
            if linalg::hermiticity_defect(f) > 1e-12 {
                return Err(Error::NonSelfAdjointKernel(format!("φ at site {x}")));
            }
            for i in 0..s {
                if f[(i, i)].re != 0.0 {
                    phi.push(Term::OnSite {
                        mode: Mode::new(x, i),
                        value: f[(i, i)].re,
                    })?;
                }
                for j in i + 1..s {
                    if f[(i, j)].norm() != 0.0 {
                        phi.push(Term::Hopping {
                            from: Mode::new(x, i),
                            to: Mode::new(x, j),
                            amp: f[(i, j)],
                        })?;
                    }
                }
            }
        }
    }
    for (r, w) in &model.density {
        check_shape(w, "pair kernel")?;
        if linalg::hermiticity_defect(w) > 1e-12 || w.iter().any(|z| z.im != 0.0) {
            return Err(Error::NonSelfAdjointKernel(format!("W({r}) must be real symmetric")));
        }
        for x in 0..nsites {
            for y in x + 1..nsites {
                if spec.dist(&sites[x], &sites[y]) != *r {
                    continue;
                }
                for i in 0..s {
                    for j in 0..s {
                        if w[(i, j)].re != 0.0 {
                            phi.push(Term::Density {
                                a: Mode::new(x, i),
                                b: Mode::new(y, j),
                                w: w[(i, j)].re,
                            })?;
                        }
                    }
                }
            }
        }
    }
    if model.mu != 0.0 {
        for x in 0..nsites {
            for i in 0..s {
                phi.push(Term::OnSite {
                    mode: Mode::new(x, i),
                    value: -model.mu,
                })?;
            }
        }
    }
    Ok(phi)
}

/// Decay profile `ζ` entering the interaction norms.
#[derive(Clone, Debug)]
pub enum DecayFunction {
    Exponential {
        a: f64,
    },
    /// `ζ ≡ 1`: only the polynomial factor of `F_ζ` remains.
    PolynomialOnly,
    /// Values at `r = 0, 1, 2, …`, linearly interpolated, held constant beyond.
    Table(Vec<f64>),
}

impl DecayFunction {
    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("decay table needs positive finite values".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Invalid("decay table must be non-increasing".into()));
        }
        Ok(DecayFunction::Table(values))
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            DecayFunction::Exponential { a } => (-a * r).exp(),
            DecayFunction::PolynomialOnly => 1.0,
            DecayFunction::Table(v) => {
                let last = v.len() - 1;
                if r >= last as f64 {
                    return v[last];
                }
                let k = r.floor() as usize;
                let t = r - k as f64;
                v[k] * (1.0 - t) + v[k + 1] * t
            }
        }
    }

    /// `F_ζ(r) = ζ(r)/(1+r)^{d+1}`.
    pub fn weight(&self, r: f64, d: usize) -> f64 {
        self.eval(r) / (1.0 + r).powi(d as i32 + 1)
    }
}

/// Where distances are measured from in [`interaction_norm`].
#[derive(Clone, Debug)]
pub struct NormGeometry {
    pub loc: LocalizationVector,
    pub scale: f64,
}

impl NormGeometry {
    pub fn plain(d: usize) -> Self {
        NormGeometry {
            loc: LocalizationVector::none(d),
            scale: 0.0,
        }
    }
}

fn pow0(x: f64, n: u32) -> f64 {
    if n == 0 {
        1.0
    } else {
        x.powi(n as i32)
    }
}

/// `max_{x,y} Σ_{X ⊇ {x,y}} diam(X)^n · w(X) / F_ζ(d_L(x,y))` for given per-support weights.
fn weighted_norm(
    spec: &LatticeSpec,
    weights: &[(Vec<usize>, f64)],
    zeta: &DecayFunction,
    n: u32,
    geom: &NormGeometry,
) -> Result<f64> {
    let ns = spec.num_sites();
    let mut acc = vec![0.0f64; ns * ns];
    for (sites, w) in weights {
        if *w == 0.0 {
            continue;
        }
        let contrib = pow0(spec.diam_idx(sites)? as f64, n) * w;
        if contrib == 0.0 {
            continue;
        }
        for &x in sites {
            for &y in sites {
                acc[x * ns + y] += contrib;
            }
        }
    }
    let all = spec.sites();
    let mut best: f64 = 0.0;
    for x in 0..ns {
        for y in 0..ns {
            let a = acc[x * ns + y];
            if a == 0.0 {
                continue;
            }
            let r = spec.dist_loc(&all[x], &all[y], &geom.loc, geom.scale);
            best = best.max(a / zeta.weight(r, spec.dim()));
        }
    }
    Ok(best)
}

/// `‖Φ‖_{ζ,n,L}` evaluated on this finite instance.
pub fn interaction_norm(phi: &Interaction, zeta: &DecayFunction, n: u32, geom: &NormGeometry) -> Result<f64> {
    let s = phi.spec.spin();
    let mut weights = Vec::new();
    for (sites, terms) in phi.grouped() {
        weights.push((sites.clone(), local_norm(&terms, &sites, s)?));
    }
    weighted_norm(&phi.spec, &weights, zeta, n, geom)
}

/// Profile `u ↦ v(u)` of a slowly varying potential, evaluated at `u = ε x_j`.
#[derive(Clone, Debug)]
pub enum Profile {
    Linear {
        slope: f64,
        offset: f64,
    },
    Constant(f64),
    /// `height·(1 − ((u−center)/width)²)²` inside the window, zero outside (C¹).
    Bump {
        center: f64,
        width: f64,
        height: f64,
    },
}

impl Profile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Profile::Linear { slope, offset } => slope * u + offset,
            Profile::Constant(c) => c,
            Profile::Bump { center, width, height } => {
                let z = (u - center) / width;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - z * z).powi(2)
                }
            }
        }
    }
}

/// Values `v(x)` on every site (linear index order).
#[derive(Clone, Debug)]
pub struct SlowPotential {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

impl SlowPotential {
    pub fn shifted(&self, c: f64) -> SlowPotential {
        SlowPotential {
            values: self.values.iter().map(|v| v + c).collect(),
            epsilon: self.epsilon,
        }
    }

    pub fn scaled(&self, c: f64) -> SlowPotential {
        SlowPotential {
            values: self.values.iter().map(|v| v * c).collect(),
            epsilon: self.epsilon,
        }
    }
}

/// `v(x) = profile(ε·x_j)` along direction `j` (0-based).
pub fn slow_potential(spec: &LatticeSpec, direction: usize, epsilon: f64, profile: &Profile) -> Result<SlowPotential> {
    if direction >= spec.dim() {
        return Err(Error::Geometry(format!("direction {} beyond dimension", direction + 1)));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Invalid("epsilon must be in (0,1]".into()));
    }
    if spec.is_closed(direction) {
        match profile {
            Profile::Linear { slope, .. } if *slope != 0.0 => {
                return Err(Error::Seam(format!(
                    "linear profile along closed direction {}",
                    direction + 1
                )))
            }
            Profile::Bump { .. } => {
                let (lo, hi) = spec.range(direction);
                for c in [lo, hi] {
                    if profile.eval(epsilon * c as f64) != 0.0 {
                        return Err(Error::Seam(format!(
                            "bump does not vanish at the seam of direction {}",
                            direction + 1
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    let values = spec
        .sites()
        .iter()
        .map(|x| profile.eval(epsilon * x.coords[direction] as f64))
        .collect();
    Ok(SlowPotential { values, epsilon })
}

/// `sup_Z (max_Z v − min_Z v)/(ε·diam Z)`, attained on pairs.
pub fn c_v(v: &SlowPotential, spec: &LatticeSpec) -> f64 {
    let sites = spec.sites();
    let mut best: f64 = 0.0;
    for x in 0..sites.len() {
        for y in x + 1..sites.len() {
            let d = spec.dist(&sites[x], &sites[y]) as f64;
            best = best.max((v.values[x] - v.values[y]).abs() / (v.epsilon * d));
        }
    }
    best
}

/// `V_v = Σ_x v(x) n_x`.
pub fn potential_hamiltonian(v: &SlowPotential, spec: &LatticeSpec) -> Result<Interaction> {
    if v.values.len() != spec.num_sites() {
        return Err(Error::Shape("potential needs one value per site".into()));
    }
    let mut phi = Interaction::new(spec, Adjointness::Hermitian);
    for (x, &val) in v.values.iter().enumerate() {
        if val == 0.0 {
            continue;
        }
        for i in 0..spec.spin() {
            phi.push(Term::OnSite {
                mode: Mode::new(x, i),
                value: val,
            })?;
        }
    }
    Ok(phi)
}

/// `Σ_x x_j n_x` with unwrapped coordinates.
pub fn coordinate_operator(spec: &LatticeSpec, direction: usize) -> Result<Interaction> {
    let values = spec.sites().iter().map(|x| x.coords[direction] as f64).collect();
    potential_hamiltonian(&SlowPotential { values, epsilon: 1.0 }, spec)
}

/// Interaction of `[A, V_v]`: each string `c·w` becomes
/// `c·Σ_m v(site m)(#a_m − #a*_m)·w`, on the same support.
pub fn commutator_interaction(phi_a: &Interaction, v: &SlowPotential) -> Result<Interaction> {
    let s = phi_a.spec.spin();
    let adj = match phi_a.adjointness {
        Adjointness::Hermitian => Adjointness::AntiHermitian,
        Adjointness::AntiHermitian => Adjointness::Hermitian,
    };
    let mut out = Interaction::new(&phi_a.spec, adj);
    for t in &phi_a.terms {
        let strings: Vec<(C64, OpString)> = t
            .strings(s)
            .into_iter()
            .filter_map(|(c, st)| {
                let w: f64 = st
                    .iter()
                    .map(|&(m, l)| {
                        let val = v.values[m / s];
                        match l {
                            Ladder::Annihilate => val,
                            Ladder::Create => -val,
                        }
                    })
                    .sum();
                (w != 0.0).then(|| (c * w, st))
            })
            .collect();
        if strings.is_empty() {
            continue;
        }
        out.terms.push(Term::Strings {
            sites: t.support(),
            strings,
        });
    }
    Ok(out)
}

/// Comparison of `‖[A,V_v]/ε‖_{ζ,k,L}` against two upper bounds.
#[derive(Clone, Debug)]
pub struct CommutatorBoundReport {
    pub lhs: f64,
    /// `(s/2)·C_v·‖Φ_A‖_{ζ,k+d+1,L}`; reported only.
    pub paper_rhs: f64,
    /// Norm built from per-term bounds `s|Z|(max_Z v − min_Z v)‖Φ_A(Z)‖/ε`.
    pub safe_rhs: f64,
    pub safe_holds: bool,
    pub paper_holds: bool,
    /// Per-support `(‖[Φ_A(Z),V]‖, s|Z|(max−min)‖Φ_A(Z)‖)`.
    pub per_term: Vec<(f64, f64)>,
}

pub fn check_vcomm_bound(
    phi_a: &Interaction,
    v: &SlowPotential,
    zeta: &DecayFunction,
    k: u32,
    geom: &NormGeometry,
) -> Result<CommutatorBoundReport> {
    let spec = &phi_a.spec;
    let s = spec.spin();
    let comm = commutator_interaction(phi_a, v)?.scaled(1.0 / v.epsilon);
    let lhs = interaction_norm(&comm, zeta, k, geom)?;
    let paper_rhs = 0.5 * s as f64 * c_v(v, spec) * interaction_norm(phi_a, zeta, k + spec.dim() as u32 + 1, geom)?;
    let comm_groups = commutator_interaction(phi_a, v)?;
    let comm_groups = comm_groups.grouped();
    let mut safe_weights = Vec::new();
    let mut per_term = Vec::new();
    for (sites, terms) in phi_a.grouped() {
        let norm_a = local_norm(&terms, &sites, s)?;
        let vals: Vec<f64> = sites.iter().map(|&x| v.values[x]).collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        let bound = s as f64 * sites.len() as f64 * spread * norm_a;
        let actual = match comm_groups.get(&sites) {
            Some(ts) => local_norm(ts, &sites, s)?,
            None => 0.0,
        };
        per_term.push((actual, bound));
        safe_weights.push((sites, bound / v.epsilon));
    }
    let safe_rhs = weighted_norm(spec, &safe_weights, zeta, k, geom)?;
    let slack = 1e-12 * (1.0 + lhs);
    Ok(CommutatorBoundReport {
        lhs,
        paper_rhs,
        safe_rhs,
        safe_holds: lhs <= safe_rhs + slack && per_term.iter().all(|(a, b)| *a <= b + 1e-12 * (1.0 + b)),
        paper_holds: lhs <= paper_rhs + slack,
        per_term,
    })
}

/// Sites as coordinate tuples, for diagnostics.
pub fn support_sites(spec: &LatticeSpec, idx: &[usize]) -> Vec<Site> {
    idx.iter().map(|&i| spec.site_at(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::commutator;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn chain(m: usize) -> LatticeSpec {
        LatticeSpec::new(vec![m], 0, 1).unwrap()
    }

    #[test]
    fn empty_and_onsite() {
        let spec = chain(2);
        let b = SectorBasis::for_lattice(&spec, 1).unwrap();
        let phi = Interaction::new(&spec, Adjointness::Hermitian);
        assert_eq!(linalg::max_abs(&assemble(&phi, &b).unwrap().matrix), 0.0);
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        phi.push(Term::OnSite {
            mode: Mode::new(1, 0),
            value: 0.7,
        })
        .unwrap();
        let m = assemble(&phi, &b).unwrap().matrix;
        for (k, &st) in b.states().iter().enumerate() {
            let want = if st & 2 != 0 { 0.7 } else { 0.0 };
            assert_eq!(m[(k, k)], c(want));
        }
    }

    #[test]
    fn two_site_hopping() {
        let spec = chain(2);
        let b = SectorBasis::for_lattice(&spec, 1).unwrap();
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        phi.push(Term::Hopping {
            from: Mode::new(0, 0),
            to: Mode::new(1, 0),
            amp: c(-1.0),
        })
        .unwrap();
        let m = assemble(&phi, &b).unwrap().matrix;
        assert_eq!(m[(0, 1)], c(-1.0));
        assert_eq!(m[(1, 0)], c(-1.0));
        assert_eq!(m[(0, 0)], c(0.0));
    }

    #[test]
    fn model_examples() {
        let spec = chain(2);
        let only_mu = ModelSpec {
            hopping: vec![],
            onsite: vec![],
            density: vec![],
            mu: 1.0,
        };
        let b = SectorBasis::for_lattice(&spec, 2).unwrap();
        let m = assemble(&build_model(&spec, &only_mu).unwrap(), &b).unwrap().matrix;
        assert_eq!(m[(0, 0)], c(-2.0));
        let w = ModelSpec {
            hopping: vec![],
            onsite: vec![],
            density: vec![(1, linalg::identity(1).mapv(|z| z * 0.3))],
            mu: 0.5,
        };
        let m = assemble(&build_model(&spec, &w).unwrap(), &b).unwrap().matrix;
        assert!((m[(0, 0)].re - (0.3 - 1.0)).abs() < 1e-15);
        let bad = ModelSpec {
            hopping: vec![(vec![1], linalg::identity(1).mapv(|_| C64::new(0.0, 1.0)))],
            onsite: vec![],
            density: vec![],
            mu: 0.0,
        };
        assert!(matches!(build_model(&spec, &bad), Err(Error::NonSelfAdjointKernel(_))));
    }

    #[test]
    fn commutator_matches_matrices() {
        let spec = chain(4);
        let b = SectorBasis::for_lattice(&spec, 2).unwrap();
        let model = ModelSpec {
            hopping: vec![
                (vec![1], linalg::identity(1).mapv(|_| C64::new(-1.0, 0.3))),
                (vec![-1], linalg::identity(1).mapv(|_| C64::new(-1.0, -0.3))),
            ],
            onsite: vec![],
            density: vec![(1, linalg::identity(1).mapv(|z| z * 0.4))],
            mu: 0.0,
        };
        let phi = build_model(&spec, &model).unwrap();
        let v = SlowPotential {
            values: vec![0.3, -1.0, 2.0, 0.5],
            epsilon: 0.5,
        };
        let a = assemble(&phi, &b).unwrap().matrix;
        let vm = assemble(&potential_hamiltonian(&v, &spec).unwrap(), &b).unwrap().matrix;
        let ci = commutator_interaction(&phi, &v).unwrap();
        assert_eq!(ci.adjointness(), Adjointness::AntiHermitian);
        let cm = assemble(&ci, &b).unwrap().matrix;
        assert!(linalg::max_abs(&(cm - commutator(&a, &vm))) < 1e-13);
    }

    #[test]
    fn slow_potential_rules() {
        let spec = chain(8);
        let v = slow_potential(
            &spec,
            0,
            0.1,
            &Profile::Linear {
                slope: 1.0,
                offset: 0.0,
            },
        )
        .unwrap();
        let x4 = spec.index(&Site::new(vec![4]));
        assert!((v.values[x4] - 0.4).abs() < 1e-15);
        assert!((c_v(&v, &spec) - 1.0).abs() < 1e-12);
        let flat = slow_potential(&spec, 0, 0.1, &Profile::Constant(2.0)).unwrap();
        assert_eq!(c_v(&flat, &spec), 0.0);
        let ring = LatticeSpec::new(vec![8], 1, 1).unwrap();
        assert!(matches!(
            slow_potential(
                &ring,
                0,
                0.1,
                &Profile::Linear {
                    slope: 1.0,
                    offset: 0.0
                }
            ),
            Err(Error::Seam(_))
        ));
        let narrow = Profile::Bump {
            center: 0.0,
            width: 0.25,
            height: 1.0,
        };
        assert!(slow_potential(&ring, 0, 0.1, &narrow).is_ok());
        let wide = Profile::Bump {
            center: 0.0,
            width: 1.0,
            height: 1.0,
        };
        assert!(matches!(slow_potential(&ring, 0, 0.1, &wide), Err(Error::Seam(_))));
    }

    #[test]
    fn norm_examples() {
        let spec = chain(4);
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        phi.push(Term::OnSite {
            mode: Mode::new(1, 0),
            value: 1.0,
        })
        .unwrap();
        let z = DecayFunction::Exponential { a: 1.0 };
        let g = NormGeometry::plain(1);
        assert!((interaction_norm(&phi, &z, 0, &g).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(interaction_norm(&phi, &z, 1, &g).unwrap(), 0.0);
        phi.push(Term::OnSite {
            mode: Mode::new(3, 0),
            value: -1.0,
        })
        .unwrap();
        assert!((interaction_norm(&phi, &z, 0, &g).unwrap() - 1.0).abs() < 1e-14);
        let doubled = phi.scaled(2.0);
        assert!((interaction_norm(&doubled, &z, 0, &g).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bound_report_on_hopping() {
        let spec = chain(2);
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        phi.push(Term::Hopping {
            from: Mode::new(0, 0),
            to: Mode::new(1, 0),
            amp: c(1.0),
        })
        .unwrap();
        let v = SlowPotential {
            values: vec![0.0, 0.1],
            epsilon: 0.1,
        };
        let r = check_vcomm_bound(&phi, &v, &DecayFunction::PolynomialOnly, 0, &NormGeometry::plain(1)).unwrap();
        assert!(r.safe_holds);
        assert!(r.lhs > 0.0);
        let flat = SlowPotential {
            values: vec![0.3, 0.3],
            epsilon: 0.1,
        };
        let r = check_vcomm_bound(&phi, &flat, &DecayFunction::PolynomialOnly, 0, &NormGeometry::plain(1)).unwrap();
        assert_eq!(r.lhs, 0.0);
    }
}
