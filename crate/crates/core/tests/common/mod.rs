#![allow(dead_code)]

use neass_core::fock::{Mode, SectorBasis};
use neass_core::hall::{landau_gauge_flux, TwistedFamily};
use neass_core::interactions::{
    assemble, build_model, potential_hamiltonian, slow_potential, Adjointness, Interaction, ModelSpec, Profile, Term,
};
use neass_core::lattice::LatticeSpec;
use neass_core::linalg::CMat;
use neass_core::C64;

fn one(x: f64) -> CMat {
    CMat::from_elem((1, 1), C64::new(x, 0.0))
}

/// Interacting chain of 8 sites at half filling with a staggered field.
pub struct Chain {
    pub spec: LatticeSpec,
    pub basis: SectorBasis,
    pub h0: CMat,
    pub h1: CMat,
    /// Density at the middle site.
    pub probe: CMat,
}

impl Chain {
    pub fn new() -> Self {
        let spec = LatticeSpec::new(vec![8], 0, 1).unwrap();
        let onsite = spec
            .sites()
            .iter()
            .map(|x| one(if x.coords[0].rem_euclid(2) == 0 { 1.5 } else { -1.5 }))
            .collect();
        let model = ModelSpec {
            hopping: vec![(vec![1], one(-1.0)), (vec![-1], one(-1.0))],
            onsite,
            density: vec![(1, one(0.2))],
            mu: 0.2,
        };
        let phi = build_model(&spec, &model).unwrap();
        let basis = SectorBasis::for_lattice(&spec, 4).unwrap();
        let h0 = assemble(&phi, &basis).unwrap().matrix;
        let pert = ModelSpec {
            hopping: vec![(vec![1], one(-0.5)), (vec![-1], one(-0.5))],
            onsite: vec![],
            density: vec![],
            mu: 0.0,
        };
        let h1 = assemble(&build_model(&spec, &pert).unwrap(), &basis).unwrap().matrix;
        let mut probe_phi = Interaction::new(&spec, Adjointness::Hermitian);
        probe_phi
            .push(Term::OnSite {
                mode: Mode::new(3, 0),
                value: 1.0,
            })
            .unwrap();
        let probe = assemble(&probe_phi, &basis).unwrap().matrix;
        Chain {
            spec,
            basis,
            h0,
            h1,
            probe,
        }
    }

    /// `Σ_x ε x n_x`.
    pub fn potential(&self, eps: f64) -> CMat {
        let v = slow_potential(
            &self.spec,
            0,
            eps,
            &Profile::Linear {
                slope: 1.0,
                offset: 0.0,
            },
        )
        .unwrap();
        assemble(&potential_hamiltonian(&v, &self.spec).unwrap(), &self.basis)
            .unwrap()
            .matrix
    }
}

/// 4×3 cylinder with flux 1/4 (or zero flux plus a symmetric control field).
pub fn cylinder(control: bool) -> (TwistedFamily, SectorBasis) {
    let spec = LatticeSpec::new(vec![4, 3], 1, 1).unwrap();
    let onsite = spec
        .sites()
        .iter()
        .map(|x| {
            let (a, b) = (x.coords[0], x.coords[1]);
            let stag = if (a + b).rem_euclid(2) == 0 { 0.5 } else { -0.5 };
            let extra = if control {
                0.3 * b as f64 + 0.17 * (a * a) as f64
            } else {
                0.0
            };
            one(stag + extra)
        })
        .collect();
    let model = ModelSpec {
        hopping: vec![
            (vec![1, 0], one(-1.0)),
            (vec![-1, 0], one(-1.0)),
            (vec![0, 1], one(-1.0)),
            (vec![0, -1], one(-1.0)),
        ],
        onsite,
        density: vec![],
        mu: 0.0,
    };
    let mut phi = build_model(&spec, &model).unwrap();
    if !control {
        phi = landau_gauge_flux(&phi, 0.25, 0, 1).unwrap();
    }
    let basis = SectorBasis::for_lattice(&spec, 3).unwrap();
    (TwistedFamily::new(phi, 0).unwrap(), basis)
}
