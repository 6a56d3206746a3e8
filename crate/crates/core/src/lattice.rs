//! Finite boxes with optional periodic closure, ℓ¹ metrics and distances to
//! localization hyperplanes.

use crate::error::{Error, Result};

/// A box `M_1 × … × M_d` whose first `closed` directions are periodic.
///
/// Coordinates in direction `j` run over `{-(M_j-1)/2, …, M_j/2}` (integer
/// division), which is `{-M_j/2+1, …, M_j/2}` for even sizes. Closed
/// directions must have even size; open directions may be odd.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    sizes: Vec<usize>,
    closed: usize,
    spin: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub coords: Vec<i64>,
}

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site { coords }
    }
}

/// Constrained directions plus the anchor point of the hyperplane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalizationVector {
    pub ell: Vec<bool>,
    pub anchor: Site,
}

impl LocalizationVector {
    pub fn none(d: usize) -> Self {
        LocalizationVector {
            ell: vec![false; d],
            anchor: Site::new(vec![0; d]),
        }
    }

    pub fn weight(&self) -> usize {
        self.ell.iter().filter(|&&b| b).count()
    }
}

impl LatticeSpec {
    pub fn new(sizes: Vec<usize>, closed: usize, spin: usize) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Lattice("dimension must be positive".into()));
        }
        if closed > sizes.len() {
            return Err(Error::Lattice(format!(
                "{closed} closed directions exceed dimension {}",
                sizes.len()
            )));
        }
        if spin == 0 {
            return Err(Error::Lattice("internal dimension must be positive".into()));
        }
        for (j, &m) in sizes.iter().enumerate() {
            if m < 2 {
                return Err(Error::Lattice(format!("size {m} in direction {} below 2", j + 1)));
            }
            if j < closed && m % 2 != 0 {
                return Err(Error::Lattice(format!(
                    "closed direction {} needs an even size, got {m}",
                    j + 1
                )));
            }
        }
        Ok(LatticeSpec { sizes, closed, spin })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn closed(&self) -> usize {
        self.closed
    }

    pub fn spin(&self) -> usize {
        self.spin
    }

    pub fn is_closed(&self, j: usize) -> bool {
        j < self.closed
    }

    pub fn num_sites(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn num_modes(&self) -> usize {
        self.num_sites() * self.spin
    }

    /// Inclusive coordinate range in direction `j` (0-based).
    pub fn range(&self, j: usize) -> (i64, i64) {
        let m = self.sizes[j] as i64;
        (-((m - 1) / 2), m / 2)
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.coords.len() == self.dim()
            && x.coords.iter().enumerate().all(|(j, &c)| {
                let (lo, hi) = self.range(j);
                lo <= c && c <= hi
            })
    }

    pub fn site(&self, coords: Vec<i64>) -> Result<Site> {
        let s = Site::new(coords);
        if !self.contains(&s) {
            return Err(Error::Lattice(format!("site {:?} outside the box", s.coords)));
        }
        Ok(s)
    }

    /// Row-major linear index (first direction slowest).
    pub fn index(&self, x: &Site) -> usize {
        let mut idx = 0usize;
        for (j, &c) in x.coords.iter().enumerate() {
            let (lo, _) = self.range(j);
            idx = idx * self.sizes[j] + (c - lo) as usize;
        }
        idx
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let d = self.dim();
        let mut coords = vec![0i64; d];
        for j in (0..d).rev() {
            let m = self.sizes[j];
            let (lo, _) = self.range(j);
            coords[j] = lo + (idx % m) as i64;
            idx /= m;
        }
        Site::new(coords)
    }

    pub fn sites(&self) -> Vec<Site> {
        (0..self.num_sites()).map(|i| self.site_at(i)).collect()
    }

    fn wrap(&self, j: usize, a: i64) -> i64 {
        if j < self.closed {
            let m = self.sizes[j] as i64;
            let mut r = a.rem_euclid(m);
            if r > m / 2 {
                r -= m;
            }
            r
        } else {
            a
        }
    }

    /// The difference vector `x −_Λ y`.
    pub fn diff(&self, x: &Site, y: &Site) -> Vec<i64> {
        x.coords
            .iter()
            .zip(&y.coords)
            .enumerate()
            .map(|(j, (a, b))| self.wrap(j, a - b))
            .collect()
    }

    pub fn dist(&self, x: &Site, y: &Site) -> u64 {
        self.diff(x, y).iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn dist_idx(&self, x: usize, y: usize) -> u64 {
        self.dist(&self.site_at(x), &self.site_at(y))
    }

    pub fn dist_to(&self, x: &Site, loc: &LocalizationVector) -> u64 {
        self.diff(x, &loc.anchor)
            .iter()
            .zip(&loc.ell)
            .filter(|(_, &b)| b)
            .map(|(c, _)| c.unsigned_abs())
            .sum()
    }

    /// `dist(x,y) + scale·(dist(x,L) + dist(y,L))`.
    pub fn dist_loc(&self, x: &Site, y: &Site, loc: &LocalizationVector, scale: f64) -> f64 {
        self.dist(x, y) as f64 + scale * (self.dist_to(x, loc) as f64 + self.dist_to(y, loc) as f64)
    }

    pub fn diam(&self, xs: &[Site]) -> Result<u64> {
        if xs.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut m = 0;
        for (i, x) in xs.iter().enumerate() {
            for y in &xs[i + 1..] {
                m = m.max(self.dist(x, y));
            }
        }
        Ok(m)
    }

    pub fn diam_idx(&self, xs: &[usize]) -> Result<u64> {
        let sites: Vec<Site> = xs.iter().map(|&i| self.site_at(i)).collect();
        self.diam(&sites)
    }

    /// Translate along the closed directions (components of `v` in open
    /// directions must be zero).
    pub fn translate(&self, x: &Site, v: &[i64]) -> Result<Site> {
        let mut c = x.coords.clone();
        for j in 0..self.dim() {
            if v[j] == 0 {
                continue;
            }
            if j >= self.closed {
                return Err(Error::Lattice(format!(
                    "cannot translate along open direction {}",
                    j + 1
                )));
            }
            c[j] = self.wrap(j, c[j] + v[j]);
        }
        Ok(Site::new(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_examples() {
        let ring = LatticeSpec::new(vec![8], 1, 1).unwrap();
        let chain = LatticeSpec::new(vec![8], 0, 1).unwrap();
        let x = Site::new(vec![4]);
        let y = Site::new(vec![-3]);
        assert_eq!(ring.diff(&x, &y), vec![-1]);
        assert_eq!(chain.diff(&x, &y), vec![7]);
        assert_eq!(ring.diff(&x, &x), vec![0]);
    }

    #[test]
    fn dist_examples() {
        let cyl = LatticeSpec::new(vec![8, 8], 1, 1).unwrap();
        assert_eq!(cyl.dist(&Site::new(vec![4, 0]), &Site::new(vec![-3, 0])), 1);
        let open = LatticeSpec::new(vec![8, 8], 0, 1).unwrap();
        assert_eq!(open.dist(&Site::new(vec![1, 1]), &Site::new(vec![-1, 0])), 3);
    }

    #[test]
    fn dist_to_hyperplane() {
        let sq = LatticeSpec::new(vec![8, 8], 0, 1).unwrap();
        let loc = LocalizationVector {
            ell: vec![false, true],
            anchor: Site::new(vec![0, 0]),
        };
        assert_eq!(sq.dist_to(&Site::new(vec![3, -2]), &loc), 2);
        assert_eq!(sq.dist_to(&Site::new(vec![3, -2]), &LocalizationVector::none(2)), 0);
        let chain = LatticeSpec::new(vec![8], 0, 1).unwrap();
        let l1 = LocalizationVector {
            ell: vec![true],
            anchor: Site::new(vec![0]),
        };
        let d = chain.dist_loc(&Site::new(vec![1]), &Site::new(vec![2]), &l1, 0.5);
        assert!((d - 2.5).abs() < 1e-15);
    }

    #[test]
    fn diameters() {
        let ring = LatticeSpec::new(vec![8], 1, 1).unwrap();
        assert!(matches!(ring.diam(&[]), Err(Error::EmptySupport)));
        assert_eq!(ring.diam(&[Site::new(vec![2])]).unwrap(), 0);
        assert_eq!(ring.diam(&[Site::new(vec![2]), Site::new(vec![3])]).unwrap(), 1);
        assert_eq!(ring.diam(&ring.sites()).unwrap(), 4);
    }

    #[test]
    fn index_roundtrip_and_ranges() {
        let l = LatticeSpec::new(vec![4, 3], 1, 1).unwrap();
        assert_eq!(l.range(1), (-1, 1));
        for i in 0..l.num_sites() {
            assert_eq!(l.index(&l.site_at(i)), i);
        }
        assert_eq!(l.site_at(0).coords, vec![-1, -1]);
        assert!(LatticeSpec::new(vec![3], 1, 1).is_err());
        assert!(LatticeSpec::new(vec![4], 2, 1).is_err());
    }
}
