//! Fermionic Fock space on occupation bitstrings.
//!
//! Mode `m = site_index * s + spin` (spin 0-based); bit `m` of a state is the
//! occupation of mode `m`. Jordan–Wigner signs count occupied modes with a
//! smaller index than the target.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::CMat;

/// Largest mode count for which full Fock space operators are built.
pub const FULL_SPACE_LIMIT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub site: usize,
    pub spin: usize,
}

impl Mode {
    pub fn new(site: usize, spin: usize) -> Self {
        Mode { site, spin }
    }

    pub fn index(&self, s: usize) -> usize {
        self.site * s + self.spin
    }

    pub fn from_index(m: usize, s: usize) -> Self {
        Mode {
            site: m / s,
            spin: m % s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// A product of ladder operators, written left to right and applied right to
/// left. Entries are mode indices.
pub type OpString = Vec<(usize, Ladder)>;

/// Apply a string to a basis state; `None` when it annihilates the state.
pub fn apply_string(ops: &[(usize, Ladder)], state: u64) -> Option<(f64, u64)> {
    let mut b = state;
    let mut sign = 1.0;
    for &(m, l) in ops.iter().rev() {
        let bit = 1u64 << m;
        let occ = b & bit != 0;
        match l {
            Ladder::Create if occ => return None,
            Ladder::Annihilate if !occ => return None,
            _ => {}
        }
        if (b & (bit - 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        b ^= bit;
    }
    Some((sign, b))
}

pub fn particle_change(ops: &[(usize, Ladder)]) -> i64 {
    ops.iter().map(|&(_, l)| if l == Ladder::Create { 1 } else { -1 }).sum()
}

/// Hermitian conjugate of `c·ops`.
pub fn adjoint_string(c: C64, ops: &[(usize, Ladder)]) -> (C64, OpString) {
    let rev = ops
        .iter()
        .rev()
        .map(|&(m, l)| {
            let l = match l {
                Ladder::Create => Ladder::Annihilate,
                Ladder::Annihilate => Ladder::Create,
            };
            (m, l)
        })
        .collect();
    (c.conj(), rev)
}

/// Basis of the `n`-particle sector in increasing bitstring order.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    modes: usize,
    n: usize,
    states: Vec<u64>,
    lookup: HashMap<u64, usize>,
}

impl SectorBasis {
    pub fn new(modes: usize, n: usize) -> Result<Self> {
        if n > modes || modes > 63 {
            return Err(Error::SectorRange { n, modes });
        }
        let mut states = Vec::with_capacity(binomial(modes, n) as usize);
        if n == 0 {
            states.push(0);
        } else {
            // Gosper's hack enumerates popcount-n words in increasing order.
            let mut v: u64 = (1u64 << n) - 1;
            let limit = 1u64 << modes;
            while v < limit {
                states.push(v);
                let t = v | (v - 1);
                v = (t + 1) | (((!t & (!t).wrapping_neg()) - 1) >> (v.trailing_zeros() + 1));
            }
        }
        let lookup = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(SectorBasis {
            modes,
            n,
            states,
            lookup,
        })
    }

    pub fn for_lattice(spec: &LatticeSpec, n: usize) -> Result<Self> {
        Self::new(spec.num_modes(), n)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn position(&self, state: u64) -> Option<usize> {
        self.lookup.get(&state).copied()
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

/// Dense operator between two particle-number sectors.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    pub n_in: usize,
    pub n_out: usize,
    pub matrix: CMat,
}

impl SectorOperator {
    pub fn is_number_conserving(&self) -> bool {
        self.n_in == self.n_out
    }
}

/// Matrix of a sum of strings mapping sector `from` into sector `to`.
pub fn strings_matrix(terms: &[(C64, OpString)], from: &SectorBasis, to: &SectorBasis) -> Result<CMat> {
    for (_, s) in terms {
        if from.particles() as i64 + particle_change(s) != to.particles() as i64 {
            return Err(Error::Shape("string does not map between the given sectors".into()));
        }
        if s.iter().any(|&(m, _)| m >= from.modes()) {
            return Err(Error::SupportOutside(format!("mode beyond {}", from.modes())));
        }
    }
    let mut out = Array2::zeros((to.dim(), from.dim()));
    for (j, &b) in from.states().iter().enumerate() {
        for (c, s) in terms {
            if let Some((sign, nb)) = apply_string(s, b) {
                let i = to.position(nb).expect("target state in sector");
                out[(i, j)] += c * sign;
            }
        }
    }
    Ok(out)
}

pub fn creation(basis: &SectorBasis, mode: usize) -> Result<SectorOperator> {
    let n = basis.particles();
    if n + 1 > basis.modes() {
        return Err(Error::SectorRange {
            n: n + 1,
            modes: basis.modes(),
        });
    }
    let to = SectorBasis::new(basis.modes(), n + 1)?;
    let m = strings_matrix(&[(C64::new(1.0, 0.0), vec![(mode, Ladder::Create)])], basis, &to)?;
    Ok(SectorOperator {
        n_in: n,
        n_out: n + 1,
        matrix: m,
    })
}

pub fn annihilation(basis: &SectorBasis, mode: usize) -> Result<SectorOperator> {
    let n = basis.particles();
    if n == 0 {
        return Err(Error::SectorRange {
            n: 0,
            modes: basis.modes(),
        });
    }
    let to = SectorBasis::new(basis.modes(), n - 1)?;
    let m = strings_matrix(&[(C64::new(1.0, 0.0), vec![(mode, Ladder::Annihilate)])], basis, &to)?;
    Ok(SectorOperator {
        n_in: n,
        n_out: n - 1,
        matrix: m,
    })
}

/// Σ_{x∈sites, spins} a*a on the sector; diagonal.
pub fn number_operator(basis: &SectorBasis, spin: usize, sites: &[usize]) -> SectorOperator {
    let mut mask = 0u64;
    for &x in sites {
        for i in 0..spin {
            mask |= 1u64 << (x * spin + i);
        }
    }
    let d = basis.dim();
    let mut m = Array2::zeros((d, d));
    for (k, &b) in basis.states().iter().enumerate() {
        m[(k, k)] = C64::new((b & mask).count_ones() as f64, 0.0);
    }
    SectorOperator {
        n_in: basis.particles(),
        n_out: basis.particles(),
        matrix: m,
    }
}

fn check_full(modes: usize) -> Result<()> {
    if modes > FULL_SPACE_LIMIT {
        return Err(Error::SizeLimit {
            modes,
            limit: FULL_SPACE_LIMIT,
        });
    }
    Ok(())
}

/// Matrix of a sum of strings on the full Fock space (states in bitstring order).
pub fn full_matrix(terms: &[(C64, OpString)], modes: usize) -> Result<CMat> {
    check_full(modes)?;
    let dim = 1usize << modes;
    let mut out = Array2::zeros((dim, dim));
    for b in 0..dim as u64 {
        for (c, s) in terms {
            if s.iter().any(|&(m, _)| m >= modes) {
                return Err(Error::SupportOutside(format!("mode beyond {modes}")));
            }
            if let Some((sign, nb)) = apply_string(s, b) {
                out[(nb as usize, b as usize)] += c * sign;
            }
        }
    }
    Ok(out)
}

/// Element of the orthonormal monomial basis: per mode one of
/// `1, a, a*, a*a − aa*`, multiplied in canonical mode order and normalised.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    pub f: Vec<u8>,
}

impl Monomial {
    pub fn new(f: Vec<u8>) -> Self {
        assert!(f.iter().all(|&x| x < 4), "monomial labels are 0..=3");
        Monomial { f }
    }

    pub fn modes(&self) -> usize {
        self.f.len()
    }

    pub fn normalization(&self) -> f64 {
        let k = self.f.iter().filter(|&&x| x == 0 || x == 3).count();
        0.5f64.powf(k as f64 / 2.0)
    }

    pub fn is_number_conserving(&self) -> bool {
        let a = self.f.iter().filter(|&&x| x == 1).count();
        let c = self.f.iter().filter(|&&x| x == 2).count();
        a == c
    }

    /// Action on a full-space basis state: `M_f |b⟩ = value |b'⟩`.
    pub fn act(&self, state: u64) -> Option<(f64, u64)> {
        let mut b = state;
        let mut v = self.normalization();
        for m in (0..self.f.len()).rev() {
            let bit = 1u64 << m;
            match self.f[m] {
                0 => {}
                3 => {
                    if b & bit == 0 {
                        v = -v;
                    }
                }
                code => {
                    let occ = b & bit != 0;
                    if (code == 1 && !occ) || (code == 2 && occ) {
                        return None;
                    }
                    if (b & (bit - 1)).count_ones() % 2 == 1 {
                        v = -v;
                    }
                    b ^= bit;
                }
            }
        }
        Some((v, b))
    }

    pub fn matrix(&self) -> Result<CMat> {
        check_full(self.modes())?;
        let dim = 1usize << self.modes();
        let mut out = Array2::zeros((dim, dim));
        for b in 0..dim as u64 {
            if let Some((v, nb)) = self.act(b) {
                out[(nb as usize, b as usize)] = C64::new(v, 0.0);
            }
        }
        Ok(out)
    }

    /// All `4^modes` monomials.
    pub fn all(modes: usize) -> Vec<Monomial> {
        let total = 1usize << (2 * modes);
        (0..total)
            .map(|k| Monomial::new((0..modes).map(|m| ((k >> (2 * m)) & 3) as u8).collect()))
            .collect()
    }
}

/// Coefficients `tr(M_f* A)` for every monomial (full space, `A` of size 2^modes).
pub fn decompose(a: &CMat, modes: usize) -> Result<Vec<(Monomial, C64)>> {
    check_full(modes)?;
    let dim = 1usize << modes;
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::Shape(format!("expected {dim}x{dim} operator")));
    }
    let mut out = Vec::with_capacity(1 << (2 * modes));
    for f in Monomial::all(modes) {
        let mut c = C64::new(0.0, 0.0);
        for b in 0..dim as u64 {
            if let Some((v, nb)) = f.act(b) {
                c += a[(nb as usize, b as usize)] * v;
            }
        }
        out.push((f, c));
    }
    Ok(out)
}

pub fn reconstruct(coeffs: &[(Monomial, C64)], modes: usize) -> Result<CMat> {
    check_full(modes)?;
    let dim = 1usize << modes;
    let mut out = Array2::zeros((dim, dim));
    for (f, c) in coeffs {
        if c.norm() == 0.0 {
            continue;
        }
        for b in 0..dim as u64 {
            if let Some((v, nb)) = f.act(b) {
                out[(nb as usize, b as usize)] += c * v;
            }
        }
    }
    Ok(out)
}

/// Sites carrying a mode on which some monomial with a non-negligible
/// coefficient acts non-trivially.
pub fn operator_support(a: &CMat, modes: usize, spin: usize) -> Result<Vec<usize>> {
    let coeffs = decompose(a, modes)?;
    let tol = 1e-12 * coeffs.iter().map(|(_, c)| c.norm()).fold(1.0, f64::max);
    let mut sites: Vec<usize> = coeffs
        .iter()
        .filter(|(_, c)| c.norm() > tol)
        .flat_map(|(f, _)| {
            f.f.iter()
                .enumerate()
                .filter(|(_, &x)| x != 0)
                .map(|(m, _)| m / spin)
                .collect::<Vec<_>>()
        })
        .collect();
    sites.sort_unstable();
    sites.dedup();
    Ok(sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, max_abs};

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn sector_dimensions() {
        assert_eq!(SectorBasis::new(2, 1).unwrap().dim(), 2);
        assert_eq!(SectorBasis::new(4, 2).unwrap().dim(), 6);
        assert_eq!(SectorBasis::new(5, 0).unwrap().dim(), 1);
        assert_eq!(SectorBasis::new(8, 4).unwrap().dim(), 70);
        assert!(SectorBasis::new(3, 4).is_err());
        let b = SectorBasis::new(6, 3).unwrap();
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        for (i, &s) in b.states().iter().enumerate() {
            assert_eq!(b.position(s), Some(i));
            assert_eq!(s.count_ones(), 3);
        }
    }

    #[test]
    fn creation_signs() {
        let vac = SectorBasis::new(1, 0).unwrap();
        let c = creation(&vac, 0).unwrap();
        assert_eq!(c.matrix[(0, 0)], one());
        // mode 0 occupied, create mode 1: one occupied mode below
        let s1 = SectorBasis::new(2, 1).unwrap();
        let c1 = creation(&s1, 1).unwrap();
        let from = s1.position(0b01).unwrap();
        assert_eq!(c1.matrix[(0, from)], -one());
    }

    #[test]
    fn car_on_sectors() {
        let modes = 4;
        for n in 1..modes {
            let b = SectorBasis::new(modes, n).unwrap();
            for i in 0..modes {
                for j in 0..modes {
                    let ai = annihilation(&b, i).unwrap();
                    let up = SectorBasis::new(modes, n - 1).unwrap();
                    let cj_up = creation(&up, j).unwrap();
                    let cj = creation(&b, j).unwrap();
                    let hi = SectorBasis::new(modes, n + 1).unwrap();
                    let ai_hi = annihilation(&hi, i).unwrap();
                    let anti = cj_up.matrix.dot(&ai.matrix) + ai_hi.matrix.dot(&cj.matrix);
                    let want = if i == j { 1.0 } else { 0.0 };
                    for r in 0..b.dim() {
                        for c in 0..b.dim() {
                            let w = if r == c { want } else { 0.0 };
                            assert_eq!(anti[(r, c)], C64::new(w, 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn number_operator_examples() {
        let b = SectorBasis::new(4, 2).unwrap();
        let all = number_operator(&b, 1, &[0, 1, 2, 3]);
        for k in 0..b.dim() {
            assert_eq!(all.matrix[(k, k)], C64::new(2.0, 0.0));
        }
        assert_eq!(max_abs(&number_operator(&b, 1, &[]).matrix), 0.0);
        let one_site = number_operator(&b, 1, &[2]);
        for (k, &s) in b.states().iter().enumerate() {
            assert_eq!(one_site.matrix[(k, k)].re, ((s >> 2) & 1) as f64);
        }
    }

    #[test]
    fn monomial_single_mode() {
        let f = Monomial::new(vec![3]);
        let m = f.matrix().unwrap();
        let tr: C64 = dagger(&m).dot(&m).diag().sum();
        assert!((tr.re - 1.0).abs() < 1e-15);
        assert!((m[(1, 1)].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((m[(0, 0)].re + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let id = Monomial::new(vec![0, 0, 0]);
        assert!((id.normalization() - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn decompose_number_operator() {
        let n = full_matrix(&[(one(), vec![(0, Ladder::Create), (0, Ladder::Annihilate)])], 1).unwrap();
        let c = decompose(&n, 1).unwrap();
        for (f, v) in &c {
            let want = match f.f[0] {
                0 | 3 => 1.0 / 2f64.sqrt(),
                _ => 0.0,
            };
            assert!((v.re - want).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn supports() {
        let id = ndarray::Array2::<C64>::eye(4);
        assert!(operator_support(&id, 2, 1).unwrap().is_empty());
        let n0 = full_matrix(&[(one(), vec![(1, Ladder::Create), (1, Ladder::Annihilate)])], 2).unwrap();
        assert_eq!(operator_support(&n0, 2, 1).unwrap(), vec![1]);
        let hop = full_matrix(&[(one(), vec![(0, Ladder::Create), (2, Ladder::Annihilate)])], 3).unwrap();
        assert_eq!(operator_support(&hop, 3, 1).unwrap(), vec![0, 2]);
    }
}
