//! Hall response of a cylinder: magnetic twist along the closed direction,
//! current operator, the Kubo formula and its comparison with the current
//! carried by the NEASS of a linear potential along the open direction.

use crate::error::{Error, Result};
use crate::fock::SectorBasis;
use crate::interactions::{self, assemble, Adjointness, Interaction, Term};
use crate::linalg::{self, CMat};
use crate::neass;
use crate::spectral::{self, GapContext, GapOptions};
use crate::C64;

/// `α ↦ H(α)`: every hopping `a*_x T a_y` picks up `e^{iα (x −_Λ y)_j}` with
/// `j` the twist direction.
#[derive(Clone, Debug)]
pub struct TwistedFamily {
    base: Interaction,
    direction: usize,
}

impl TwistedFamily {
    pub fn new(base: Interaction, direction: usize) -> Result<Self> {
        let spec = base.spec();
        if direction >= spec.dim() || !spec.is_closed(direction) {
            return Err(Error::Geometry(format!(
                "twist direction {} must be a closed direction",
                direction + 1
            )));
        }
        if base.adjointness() != Adjointness::Hermitian {
            return Err(Error::Invalid("twisted family needs a Hermitian base".into()));
        }
        Ok(TwistedFamily { base, direction })
    }

    pub fn base(&self) -> &Interaction {
        &self.base
    }

    pub fn direction(&self) -> usize {
        self.direction
    }

    /// Wrapped displacement of a hopping along the twist direction.
    fn displacement(&self, from: usize, to: usize) -> i64 {
        let spec = self.base.spec();
        spec.diff(&spec.site_at(from), &spec.site_at(to))[self.direction]
    }

    fn rebuild(&self, f: impl Fn(C64, i64) -> Option<C64>, keep_other: bool) -> Result<Interaction> {
        let mut out = Interaction::new(self.base.spec(), Adjointness::Hermitian);
        for t in self.base.terms() {
            match t {
                Term::Hopping { from, to, amp } => {
                    let d = self.displacement(from.site, to.site);
                    if let Some(a) = f(*amp, d) {
                        out.push(Term::Hopping {
                            from: *from,
                            to: *to,
                            amp: a,
                        })?;
                    }
                }
                other if keep_other => out.push(other.clone())?,
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn at(&self, alpha: f64) -> Result<Interaction> {
        self.rebuild(|amp, d| Some(amp * C64::from_polar(1.0, alpha * d as f64)), true)
    }

    /// `∂_α H(α)` at `α = 0`.
    pub fn current(&self) -> Result<Interaction> {
        self.rebuild(|amp, d| (d != 0).then(|| amp * C64::new(0.0, d as f64)), false)
    }

    pub fn hamiltonian(&self, alpha: f64, basis: &SectorBasis) -> Result<CMat> {
        Ok(assemble(&self.at(alpha)?, basis)?.matrix)
    }
}

pub fn current_operator(fam: &TwistedFamily, basis: &SectorBasis) -> Result<CMat> {
    Ok(assemble(&fam.current()?, basis)?.matrix)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DpMethod {
    /// Central difference of the patch projector with Richardson
    /// extrapolation between `step` and `step/2`.
    FiniteDifference { step: f64 },
    /// `−(R_0 J P + P J R_0)`, for a patch that is a single eigenvalue.
    Resolvent,
}

pub const DEFAULT_ALPHA_STEP: f64 = 1e-4;

fn projector_at(fam: &TwistedFamily, alpha: f64, basis: &SectorBasis, opts: &GapOptions) -> Result<CMat> {
    let h = fam.hamiltonian(alpha, basis)?;
    Ok(GapContext::new(&h, basis.particles(), opts)?.patch.projector)
}

/// `∂_α P_*(α)` at `α = 0`.
pub fn dp_dalpha(fam: &TwistedFamily, basis: &SectorBasis, opts: &GapOptions, method: DpMethod) -> Result<CMat> {
    match method {
        DpMethod::FiniteDifference { step } => {
            if !(step > 0.0) {
                return Err(Error::Invalid(format!("difference step must be positive, got {step}")));
            }
            let central = |h: f64| -> Result<CMat> {
                let p = projector_at(fam, h, basis, opts)?;
                let m = projector_at(fam, -h, basis, opts)?;
                Ok((p - m).mapv(|z| z / (2.0 * h)))
            };
            let coarse = central(step)?;
            let fine = central(step / 2.0)?;
            Ok((fine.mapv(|z| z * 4.0) - coarse).mapv(|z| z / 3.0))
        }
        DpMethod::Resolvent => {
            let h = fam.hamiltonian(0.0, basis)?;
            let ctx = GapContext::new(&h, basis.particles(), opts)?;
            let r0 = spectral::reduced_resolvent(&ctx.eigen, &ctx.patch)?;
            let j = current_operator(fam, basis)?;
            let p = ctx.projector();
            let a = r0.dot(&j).dot(p);
            Ok((&a + &linalg::dagger(&a)).mapv(|z| -z))
        }
    }
}

/// Direction perpendicular to the twist on a two-dimensional cylinder.
fn transverse_direction(fam: &TwistedFamily) -> Result<usize> {
    let spec = fam.base.spec();
    if spec.dim() != 2 {
        return Err(Error::Geometry(format!("Hall setup needs d = 2, got {}", spec.dim())));
    }
    let other = 1 - fam.direction;
    if spec.is_closed(other) {
        return Err(Error::Geometry(format!("direction {} must be open", other + 1)));
    }
    Ok(other)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conductivity {
    pub sigma: f64,
    /// Imaginary part of the trace, kept as a diagnostic.
    pub imaginary: f64,
}

/// `(1/|Λ|)·tr(P[∂_α P, [X, P]])`, `X` the coordinate across the cylinder.
pub fn kubo_sigma(fam: &TwistedFamily, basis: &SectorBasis, opts: &GapOptions, dp: &CMat) -> Result<Conductivity> {
    let other = transverse_direction(fam)?;
    let spec = fam.base.spec();
    let h = fam.hamiltonian(0.0, basis)?;
    let ctx = GapContext::new(&h, basis.particles(), opts)?;
    let p = ctx.projector();
    let x = assemble(&interactions::coordinate_operator(spec, other)?, basis)?.matrix;
    let inner = linalg::commutator(&x, p);
    let z = linalg::trace(&p.dot(&linalg::commutator(dp, &inner))) / spec.num_sites() as f64;
    Ok(Conductivity {
        sigma: z.re,
        imaginary: z.im,
    })
}

#[derive(Clone, Debug)]
pub struct NeassSigma {
    pub epsilon: f64,
    /// `tr(P_1 J)/|Λ|`.
    pub first_order: f64,
    /// `(tr(Π_n J) − tr(P J))/(ε|Λ|)`.
    pub full: f64,
    /// Imaginary part of `tr(Π_n J)`.
    pub imaginary: f64,
    pub residual_norm: f64,
}

/// Current response of the order-`n` NEASS for `v = ε x` (plus `shift`)
/// across the cylinder, with no additional perturbation.
pub fn neass_sigma(
    fam: &TwistedFamily,
    basis: &SectorBasis,
    opts: &GapOptions,
    epsilon: f64,
    n: usize,
    shift: f64,
) -> Result<NeassSigma> {
    let other = transverse_direction(fam)?;
    let spec = fam.base.spec();
    let h = fam.hamiltonian(0.0, basis)?;
    let ctx = GapContext::new(&h, basis.particles(), opts)?;
    let pot = interactions::slow_potential(
        spec,
        other,
        epsilon,
        &interactions::Profile::Linear {
            slope: 1.0,
            offset: shift,
        },
    )?;
    let v = assemble(&interactions::potential_hamiltonian(&pot, spec)?, basis)?.matrix;
    let h1 = linalg::zeros(basis.dim());
    let res = neass::build_static_neass(&ctx, &v, &h1, epsilon, n)?;
    let coeffs = neass::expansion_coefficients(&res, 1)?;
    let j = current_operator(fam, basis)?;
    let vol = spec.num_sites() as f64;
    let tr_pi = linalg::trace(&res.pi.dot(&j));
    let tr_p = linalg::trace(&ctx.projector().dot(&j));
    Ok(NeassSigma {
        epsilon,
        first_order: linalg::trace(&coeffs[1].dot(&j)).re / vol,
        full: (tr_pi.re - tr_p.re) / (epsilon * vol),
        imaginary: tr_pi.im,
        residual_norm: res.residual_norm,
    })
}

/// Landau-gauge flux `φ` per plaquette: each hopping with displacement
/// `±1` along `hop_dir` and none along `gauge_dir` picks up
/// `e^{2πiφ·(x−y)·y_g}`, `y_g` the gauge coordinate.
pub fn landau_gauge_flux(base: &Interaction, flux: f64, hop_dir: usize, gauge_dir: usize) -> Result<Interaction> {
    let spec = base.spec();
    if hop_dir >= spec.dim() || gauge_dir >= spec.dim() || hop_dir == gauge_dir {
        return Err(Error::Geometry("flux needs two distinct directions".into()));
    }
    let mut out = Interaction::new(spec, base.adjointness());
    for t in base.terms() {
        match t {
            Term::Hopping { from, to, amp } => {
                let (x, y) = (spec.site_at(from.site), spec.site_at(to.site));
                let d = spec.diff(&x, &y);
                let phase = if d[gauge_dir] == 0 && d[hop_dir] != 0 {
                    2.0 * std::f64::consts::PI * flux * d[hop_dir] as f64 * y.coords[gauge_dir] as f64
                } else {
                    0.0
                };
                out.push(Term::Hopping {
                    from: *from,
                    to: *to,
                    amp: amp * C64::from_polar(1.0, phase),
                })?;
            }
            other => out.push(other.clone())?,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Mode;
    use crate::lattice::LatticeSpec;

    fn ring2() -> (TwistedFamily, SectorBasis) {
        let spec = LatticeSpec::new(vec![2], 1, 1).unwrap();
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        phi.push(Term::Hopping {
            from: Mode::new(1, 0),
            to: Mode::new(0, 0),
            amp: C64::new(-1.0, 0.0),
        })
        .unwrap();
        phi.push(Term::OnSite {
            mode: Mode::new(0, 0),
            value: 0.5,
        })
        .unwrap();
        let basis = SectorBasis::for_lattice(&spec, 1).unwrap();
        (TwistedFamily::new(phi, 0).unwrap(), basis)
    }

    #[test]
    fn twist_is_hermitian_and_trivial_at_zero() {
        let (fam, basis) = ring2();
        let h0 = assemble(fam.base(), &basis).unwrap().matrix;
        assert!(linalg::max_abs(&(fam.hamiltonian(0.0, &basis).unwrap() - h0)) < 1e-15);
        let h = fam.hamiltonian(0.7, &basis).unwrap();
        assert!(linalg::hermiticity_defect(&h) < 1e-15);
    }

    #[test]
    fn spectrum_is_periodic_in_the_twist() {
        // Ring of 4 with a next-nearest hop and a staggered field, 2 particles.
        let spec = LatticeSpec::new(vec![4], 1, 1).unwrap();
        let mut phi = Interaction::new(&spec, Adjointness::Hermitian);
        for x in 0..4 {
            for (d, amp) in [(1, C64::new(-1.0, 0.0)), (2, C64::new(0.3, 0.2))] {
                phi.push(Term::Hopping {
                    from: Mode::new((x + d) % 4, 0),
                    to: Mode::new(x, 0),
                    amp,
                })
                .unwrap();
            }
            phi.push(Term::OnSite {
                mode: Mode::new(x, 0),
                value: if x % 2 == 0 { 0.4 } else { -0.4 },
            })
            .unwrap();
        }
        let basis = SectorBasis::for_lattice(&spec, 2).unwrap();
        let fam = TwistedFamily::new(phi, 0).unwrap();
        let spectrum = |a: f64| linalg::eigh(&fam.hamiltonian(a, &basis).unwrap()).unwrap().0;
        let period = 2.0 * std::f64::consts::PI / 4.0;
        for a in [0.0, 0.37, 1.1] {
            let e0 = spectrum(a);
            let e1 = spectrum(a + period);
            assert!(e0.iter().zip(e1.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        // A quarter period is not a symmetry of this model.
        let moved = spectrum(0.37 + period / 4.0);
        assert!(spectrum(0.37)
            .iter()
            .zip(moved.iter())
            .any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn current_matches_difference_quotient() {
        let (fam, basis) = ring2();
        let j = current_operator(&fam, &basis).unwrap();
        let h = 1e-5;
        let fd = (fam.hamiltonian(h, &basis).unwrap() - fam.hamiltonian(-h, &basis).unwrap()).mapv(|z| z / (2.0 * h));
        assert!(linalg::max_abs(&(j - fd)) < 1e-9);
    }

    #[test]
    fn projector_derivative_methods_agree() {
        let (fam, basis) = ring2();
        let opts = GapOptions::ground_state();
        let a = dp_dalpha(
            &fam,
            &basis,
            &opts,
            DpMethod::FiniteDifference {
                step: DEFAULT_ALPHA_STEP,
            },
        )
        .unwrap();
        let b = dp_dalpha(&fam, &basis, &opts, DpMethod::Resolvent).unwrap();
        assert!(linalg::max_abs(&(a - b)) < 1e-7);
    }

    #[test]
    fn open_twist_direction_rejected() {
        let spec = LatticeSpec::new(vec![4], 0, 1).unwrap();
        let phi = Interaction::new(&spec, Adjointness::Hermitian);
        assert!(matches!(TwistedFamily::new(phi, 0), Err(Error::Geometry(_))));
    }
}
