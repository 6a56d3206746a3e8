//! Turns a validated configuration into matrices on the particle-number sector.

use neass_core::dynamics::{Integrator, PropagationConfig};
use neass_core::fock::{Mode, SectorBasis};
use neass_core::hall::{landau_gauge_flux, TwistedFamily};
use neass_core::interactions::{
    assemble, build_model, potential_hamiltonian, slow_potential, Adjointness, Interaction, ModelSpec, Profile,
    SlowPotential, Term,
};
use neass_core::lattice::{LatticeSpec, Site};
use neass_core::linalg::{self, CMat};
use neass_core::spectral::{Bridge, GapOptions, PatchSelector, DEFAULT_GAP_FLOOR};
use neass_core::{Result, C64};

use crate::config::{BridgeName, ExperimentConfig, Field, Hop, MethodName, ProfileConfig};

/// Everything the experiments need, built once per configuration.
pub struct Physics {
    pub spec: LatticeSpec,
    pub basis: SectorBasis,
    /// Interaction of the unperturbed Hamiltonian, flux included.
    pub interaction: Interaction,
    pub h0: CMat,
    pub h1: CMat,
    /// `(name, matrix)` for each measured observable.
    pub observables: Vec<(String, CMat)>,
    pub gap: GapOptions,
    profile: Option<Profile>,
    direction: usize,
}

fn scalar_block(s: usize, z: C64) -> CMat {
    linalg::identity(s).mapv(|w| w * z)
}

fn kernel(hops: &[Hop], s: usize) -> Vec<(Vec<i64>, CMat)> {
    hops.iter()
        .map(|h| {
            (
                h.shift.clone(),
                scalar_block(s, C64::new(h.amp, h.amp_im.unwrap_or(0.0))),
            )
        })
        .collect()
}

fn field_value(f: &Field, x: &Site) -> f64 {
    match f {
        Field::Uniform { value } => *value,
        Field::Staggered { value } => {
            if x.coords.iter().sum::<i64>().rem_euclid(2) == 0 {
                *value
            } else {
                -value
            }
        }
        Field::Linear { direction, value } => value * x.coords[direction - 1] as f64,
        Field::Quadratic { direction, value } => value * (x.coords[direction - 1] as f64).powi(2),
        Field::Site { site, value } => {
            if &x.coords == site {
                *value
            } else {
                0.0
            }
        }
    }
}

fn onsite(spec: &LatticeSpec, fields: &[Field]) -> Vec<CMat> {
    if fields.is_empty() {
        return vec![];
    }
    spec.sites()
        .iter()
        .map(|x| {
            let v: f64 = fields.iter().map(|f| field_value(f, x)).sum();
            scalar_block(spec.spin(), C64::new(v, 0.0))
        })
        .collect()
}

pub fn profile(p: &ProfileConfig) -> Profile {
    match *p {
        ProfileConfig::Linear { slope, offset } => Profile::Linear { slope, offset },
        ProfileConfig::Constant { value } => Profile::Constant(value),
        ProfileConfig::Bump { center, width, height } => Profile::Bump { center, width, height },
    }
}

pub fn gap_options(cfg: &ExperimentConfig) -> GapOptions {
    let p = &cfg.patch;
    GapOptions {
        selector: match p.window {
            Some((lo, hi)) => PatchSelector::Window { lo, hi },
            None => PatchSelector::Lowest(p.lowest.unwrap_or(1)),
        },
        gap_floor: p.gap_floor.unwrap_or(DEFAULT_GAP_FLOOR),
        g_tilde: p.g_tilde,
        bridge: match p.bridge {
            Some(BridgeName::Quintic) => Bridge::Quintic,
            _ => Bridge::Exponential,
        },
    }
}

pub fn propagation(cfg: &ExperimentConfig) -> PropagationConfig {
    let mut out = PropagationConfig::default();
    let i = &cfg.integrator;
    if let Some(m) = i.method {
        out.integrator = match m {
            MethodName::Magnus4 => Integrator::Magnus4,
            MethodName::Rk4 => Integrator::Rk4,
        };
    }
    if let Some(h) = i.step {
        out.step = h;
    }
    if let Some(k) = i.reunitarize_every {
        out.reunitarize_every = k;
    }
    if let Some(b) = i.self_check {
        out.self_check = b;
    }
    if let Some(t) = cfg.tolerances.self_convergence {
        out.tolerance = t;
    }
    out
}

/// `n(x)` summed over spins, named by its coordinates.
fn density_observable(spec: &LatticeSpec, basis: &SectorBasis, coords: &[i64]) -> Result<(String, CMat)> {
    let site = spec.site(coords.to_vec())?;
    let idx = spec.index(&site);
    let mut phi = Interaction::new(spec, Adjointness::Hermitian);
    for spin in 0..spec.spin() {
        phi.push(Term::OnSite {
            mode: Mode::new(idx, spin),
            value: 1.0,
        })?;
    }
    let name = coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    Ok((format!("n({name})"), assemble(&phi, basis)?.matrix))
}

impl Physics {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = LatticeSpec::new(cfg.lattice.sizes.clone(), cfg.closed(), cfg.spin())?;
        let s = spec.spin();
        let basis = SectorBasis::for_lattice(&spec, cfg.model.particles)?;
        let model = ModelSpec {
            hopping: kernel(&cfg.model.hopping, s),
            onsite: onsite(&spec, &cfg.model.onsite),
            density: cfg
                .model
                .density
                .iter()
                .map(|p| (p.distance, scalar_block(s, C64::new(p.w, 0.0))))
                .collect(),
            mu: cfg.model.mu.unwrap_or(0.0),
        };
        let mut interaction = build_model(&spec, &model)?;
        if let Some(f) = &cfg.model.flux {
            interaction = landau_gauge_flux(&interaction, f.value, f.hop - 1, f.gauge - 1)?;
        }
        let h0 = assemble(&interaction, &basis)?.matrix;
        let pert = ModelSpec {
            hopping: kernel(&cfg.perturbation.hopping, s),
            onsite: onsite(&spec, &cfg.perturbation.onsite),
            density: vec![],
            mu: 0.0,
        };
        let h1 = assemble(&build_model(&spec, &pert)?, &basis)?.matrix;
        let observables = cfg
            .observables
            .density
            .iter()
            .map(|c| density_observable(&spec, &basis, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Physics {
            spec,
            basis,
            interaction,
            h0,
            h1,
            observables,
            gap: gap_options(cfg),
            profile: cfg.perturbation.profile.as_ref().map(profile),
            direction: cfg.perturbation.direction.unwrap_or(1) - 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn particles(&self) -> usize {
        self.basis.particles()
    }

    pub fn slow_potential(&self, eps: f64) -> Result<SlowPotential> {
        let p = self
            .profile
            .as_ref()
            .ok_or_else(|| neass_core::Error::Invalid("no perturbation profile configured".into()))?;
        slow_potential(&self.spec, self.direction, eps, p)
    }

    /// The assembled slowly varying potential at scale `eps`.
    pub fn potential(&self, eps: f64) -> Result<CMat> {
        let v = self.slow_potential(eps)?;
        Ok(assemble(&potential_hamiltonian(&v, &self.spec)?, &self.basis)?.matrix)
    }

    pub fn twisted(&self, twist: usize) -> Result<TwistedFamily> {
        TwistedFamily::new(self.interaction.clone(), twist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn staggered_chain_matches_direct_assembly() {
        let cfg = parse_config(
            "schema_version = 1
experiments = [\"E1\"]
lattice.sizes = [4]
model.particles = 2
model.hopping = [{shift = [1], amp = -1.0}, {shift = [-1], amp = -1.0}]
model.onsite = [{kind = \"staggered\", value = 0.5}, {kind = \"site\", site = [0], value = 0.25}]
perturbation.profile = {kind = \"linear\", slope = 1.0, offset = 0.0}
observables.density = [[0]]
sweep.epsilon = [0.1, 0.2, 0.3]
sweep.n = [1]
",
        )
        .unwrap();
        let ph = Physics::build(&cfg).unwrap();
        assert_eq!(ph.dim(), 6);
        assert!(linalg::hermiticity_defect(&ph.h0) < 1e-14);
        // Sites are -1, 0, 1, 2, so the field is -0.5, 0.75, -0.5, 0.5 and the
        // diagonal of a basis state is the sum over its occupied sites.
        let fields = [-0.5, 0.75, -0.5, 0.5];
        for (k, &b) in ph.basis.states().iter().enumerate() {
            let e: f64 = (0..4).filter(|j| b >> j & 1 == 1).map(|j| fields[j]).sum();
            assert!((ph.h0[(k, k)].re - e).abs() < 1e-14);
        }
        assert_eq!(ph.observables[0].0, "n(0)");
        let trace = linalg::trace(&ph.observables[0].1).re;
        // Site 0 is occupied in C(3,1) = 3 of the 6 states.
        assert_eq!(trace, 3.0);
        let v = ph.potential(0.1).unwrap();
        assert!(linalg::max_abs(&linalg::commutator(&v, &ph.observables[0].1)) < 1e-15);
    }
}
