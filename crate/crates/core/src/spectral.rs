//! Eigendecompositions, isolated spectral patches and the quasi-local inverse
//! of the Liouvillian `B ↦ [H,B]`.

use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};

#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// Ascending.
    pub energies: Array1<f64>,
    /// Columns are eigenvectors.
    pub vectors: CMat,
    pub sector: usize,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn to_eigenbasis(&self, b: &CMat) -> CMat {
        linalg::dagger(&self.vectors).dot(b).dot(&self.vectors)
    }

    pub fn from_eigenbasis(&self, b: &CMat) -> CMat {
        self.vectors.dot(b).dot(&linalg::dagger(&self.vectors))
    }
}

pub fn diagonalize(h: &CMat, sector: usize) -> Result<EigenSystem> {
    linalg::ensure_hermitian(h, 1e-10)?;
    let (energies, vectors) = linalg::eigh(h)?;
    Ok(EigenSystem {
        energies,
        vectors,
        sector,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatchSelector {
    /// The `k` lowest eigenvalues.
    Lowest(usize),
    /// All eigenvalues in `[lo, hi]`.
    Window { lo: f64, hi: f64 },
}

pub const DEFAULT_GAP_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GappedPatch {
    pub selector: PatchSelector,
    pub indices: Vec<usize>,
    pub energies: Vec<f64>,
    pub projector: CMat,
    /// Lowest energy of the patch.
    pub e_star: f64,
    pub kappa: usize,
    /// Distance from the patch to the rest of the spectrum.
    pub gap: f64,
    /// Diameter of the patch.
    pub width: f64,
}

pub fn find_gapped_patch(es: &EigenSystem, selector: &PatchSelector, gap_floor: f64) -> Result<GappedPatch> {
    let n = es.dim();
    let indices: Vec<usize> = match *selector {
        PatchSelector::Lowest(k) => (0..k.min(n)).collect(),
        PatchSelector::Window { lo, hi } => (0..n)
            .filter(|&i| es.energies[i] >= lo && es.energies[i] <= hi)
            .collect(),
    };
    if indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let PatchSelector::Lowest(k) = selector {
        if *k > n {
            return Err(Error::Invalid(format!(
                "{k} states requested from a {n}-dimensional sector"
            )));
        }
    }
    if indices.len() == n {
        return Err(Error::NoGap("selection has no complement".into()));
    }
    let energies: Vec<f64> = indices.iter().map(|&i| es.energies[i]).collect();
    let lo = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut gap = f64::INFINITY;
    for i in 0..n {
        if indices.contains(&i) {
            continue;
        }
        let e = es.energies[i];
        for &p in &energies {
            gap = gap.min((e - p).abs());
        }
    }
    if gap <= gap_floor {
        return Err(Error::NoGap(format!("gap {gap:.3e} at or below floor {gap_floor:.1e}")));
    }
    let width = hi - lo;
    if width >= gap {
        return Err(Error::NoGap(format!("patch width {width:.3e} not below gap {gap:.3e}")));
    }
    let projector = linalg::projector_from_columns(&es.vectors, &indices);
    Ok(GappedPatch {
        selector: selector.clone(),
        kappa: indices.len(),
        indices,
        energies,
        projector,
        e_star: lo,
        gap,
        width,
    })
}

/// `(H_0 − E_*)^{-1}(1 − P_*)` for a patch consisting of one eigenvalue.
pub fn reduced_resolvent(es: &EigenSystem, patch: &GappedPatch) -> Result<CMat> {
    let tol = 1e-9 * es.energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    if patch.width > tol {
        return Err(Error::Invalid(format!(
            "reduced resolvent needs a single eigenvalue, patch width {:.3e}",
            patch.width
        )));
    }
    let d = Array1::from_iter((0..es.dim()).map(|i| {
        if patch.indices.contains(&i) {
            C64::new(0.0, 0.0)
        } else {
            C64::new(1.0 / (es.energies[i] - patch.e_star), 0.0)
        }
    }));
    Ok(linalg::from_spectrum(&es.vectors, &d))
}

/// `(P A P + P⊥ A P⊥, P A P⊥ + P⊥ A P)`.
pub fn block_split(a: &CMat, p: &CMat) -> (CMat, CMat) {
    let pa = p.dot(a);
    let ap = a.dot(p);
    let pap = pa.dot(p);
    // P⊥ A P⊥ = A − PA − AP + PAP
    let diag = a - &pa - &ap + &pap.mapv(|z| z * 2.0);
    let off = a - &diag;
    (diag, off)
}

pub fn off_diagonal(a: &CMat, p: &CMat) -> CMat {
    block_split(a, p).1
}

/// Smooth monotone transition from 0 at `x ≤ 0` to 1 at `x ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Bridge {
    /// `σ(x)/(σ(x)+σ(1−x))`, `σ(x) = exp(−1/x)`.
    #[default]
    Exponential,
    /// Quintic smoothstep `6x⁵ − 15x⁴ + 10x³`.
    Quintic,
}

fn sigma(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

impl Bridge {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            Bridge::Exponential => {
                let a = sigma(x);
                a / (a + sigma(1.0 - x))
            }
            Bridge::Quintic => x * x * x * (x * (6.0 * x - 15.0) + 10.0),
        }
    }
}

/// Frequency profile `Ŵ` of the weight function: zero on `[−g̃, g̃]`,
/// `−i/(√(2π)ω)` for `|ω| ≥ g`, bridged in between.
#[derive(Clone, Copy, Debug)]
pub struct WeightFunction {
    pub g: f64,
    pub g_tilde: f64,
    pub bridge: Bridge,
}

impl WeightFunction {
    pub fn new(g: f64, g_tilde: f64, bridge: Bridge) -> Result<Self> {
        if !(g > g_tilde && g_tilde > 0.0) {
            return Err(Error::Invalid(format!(
                "weight function needs g > g_tilde > 0, got g={g}, g_tilde={g_tilde}"
            )));
        }
        Ok(WeightFunction { g, g_tilde, bridge })
    }

    /// Cutoff `g/4`, or halfway between the patch width and the gap when the
    /// patch is wider than that.
    pub fn for_patch(patch: &GappedPatch, bridge: Bridge) -> Result<Self> {
        let quarter = patch.gap / 4.0;
        let g_tilde = if patch.width <= quarter {
            quarter
        } else {
            0.5 * (patch.width + patch.gap)
        };
        Self::new(patch.gap, g_tilde, bridge)
    }

    /// Errors unless `I` is guaranteed to vanish on the patch block and to
    /// invert the Liouvillian across the gap.
    pub fn check_patch(&self, patch: &GappedPatch) -> Result<()> {
        if patch.width > self.g_tilde {
            return Err(Error::Invalid(format!(
                "patch width {:.3e} exceeds cutoff {:.3e}",
                patch.width, self.g_tilde
            )));
        }
        if self.g > patch.gap * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "weight function gap {:.3e} exceeds spectral gap {:.3e}",
                self.g, patch.gap
            )));
        }
        Ok(())
    }

    pub fn chi(&self, omega: f64) -> f64 {
        let a = omega.abs();
        if a <= self.g_tilde {
            0.0
        } else if a >= self.g {
            1.0
        } else {
            self.bridge.eval((a - self.g_tilde) / (self.g - self.g_tilde))
        }
    }

    pub fn value(&self, omega: f64) -> C64 {
        self.multiplier(omega) / (2.0 * PI).sqrt()
    }

    /// `√(2π)·Ŵ(ω) = −iχ(ω)/ω`.
    pub fn multiplier(&self, omega: f64) -> C64 {
        let c = self.chi(omega);
        if c == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            -I * (c / omega)
        }
    }
}

/// `B ↦ √(2π) Σ_{n,m} Ŵ(E_m − E_n) P_n B P_m`.
#[derive(Clone, Debug)]
pub struct LiouvillianInverse {
    vectors: CMat,
    weights: CMat,
}

impl LiouvillianInverse {
    pub fn new(es: &EigenSystem, wf: &WeightFunction) -> Self {
        let n = es.dim();
        let e = &es.energies;
        let weights = CMat::from_shape_fn((n, n), |(r, c)| wf.multiplier(e[c] - e[r]));
        LiouvillianInverse {
            vectors: es.vectors.clone(),
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply(&self, b: &CMat) -> CMat {
        let vd = linalg::dagger(&self.vectors);
        let bt = vd.dot(b).dot(&self.vectors);
        let w = &bt * &self.weights;
        self.vectors.dot(&w).dot(&vd)
    }
}

pub fn liouvillian_inverse(b: &CMat, es: &EigenSystem, wf: &WeightFunction) -> CMat {
    LiouvillianInverse::new(es, wf).apply(b)
}

/// `D + i·I([H_0, D])`, block diagonal with respect to the patch.
pub fn diagonalize_map(d: &CMat, h0: &CMat, inv: &LiouvillianInverse) -> CMat {
    d + &inv.apply(&linalg::commutator(h0, d)).mapv(|z| z * I)
}

/// Everything derived from the unperturbed Hamiltonian that the expansion needs.
#[derive(Clone, Debug)]
pub struct GapContext {
    pub h0: CMat,
    pub eigen: EigenSystem,
    pub patch: GappedPatch,
    pub weight: WeightFunction,
    pub inverse: LiouvillianInverse,
}

#[derive(Clone, Debug)]
pub struct GapOptions {
    pub selector: PatchSelector,
    pub gap_floor: f64,
    /// Explicit cutoff; `None` uses [`WeightFunction::for_patch`].
    pub g_tilde: Option<f64>,
    pub bridge: Bridge,
}

impl GapOptions {
    pub fn ground_state() -> Self {
        GapOptions {
            selector: PatchSelector::Lowest(1),
            gap_floor: DEFAULT_GAP_FLOOR,
            g_tilde: None,
            bridge: Bridge::default(),
        }
    }
}

impl GapContext {
    pub fn new(h0: &CMat, sector: usize, opts: &GapOptions) -> Result<Self> {
        let eigen = diagonalize(h0, sector)?;
        let patch = find_gapped_patch(&eigen, &opts.selector, opts.gap_floor)?;
        let weight = match opts.g_tilde {
            Some(gt) => WeightFunction::new(patch.gap, gt, opts.bridge)?,
            None => WeightFunction::for_patch(&patch, opts.bridge)?,
        };
        weight.check_patch(&patch)?;
        let inverse = LiouvillianInverse::new(&eigen, &weight);
        Ok(GapContext {
            h0: h0.clone(),
            eigen,
            patch,
            weight,
            inverse,
        })
    }

    pub fn projector(&self) -> &CMat {
        &self.patch.projector
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }
}
