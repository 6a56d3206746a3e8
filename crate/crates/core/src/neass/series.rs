//! Truncated power series in ε whose coefficients are operator-valued Taylor
//! jets in time.

use ndarray::Array2;

use crate::driving::Taylor;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::C64;

/// `Σ_k c_k τ^k`: an operator together with its time derivatives.
///
/// Order 0 is a plain matrix. Products and sums truncate at the smaller
/// order, except that an exact zero is neutral.
#[derive(Clone, Debug, PartialEq)]
pub struct OpJet {
    pub c: Vec<CMat>,
}

impl OpJet {
    pub fn constant(m: CMat) -> Self {
        OpJet { c: vec![m] }
    }

    /// A constant carried at the given order (higher coefficients zero).
    pub fn constant_with_order(m: CMat, order: usize) -> Self {
        let d = m.nrows();
        let mut c = vec![m];
        c.extend((0..order).map(|_| linalg::zeros(d)));
        OpJet { c }
    }

    pub fn zero(dim: usize, order: usize) -> Self {
        OpJet {
            c: vec![linalg::zeros(dim); order + 1],
        }
    }

    /// `f(τ)·m` for a scalar jet `f`.
    pub fn from_scalar(f: &Taylor, m: &CMat) -> Self {
        OpJet {
            c: f.c.iter().map(|&x| linalg::scale_re(m, x)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn value(&self) -> &CMat {
        &self.c[0]
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|m| m.iter().all(|z| z.re == 0.0 && z.im == 0.0))
    }

    pub fn truncated(&self, order: usize) -> Self {
        OpJet {
            c: self.c[..=order.min(self.order())].to_vec(),
        }
    }

    /// Time derivative; the order drops by one (a constant has zero derivative).
    pub fn derivative(&self) -> Self {
        if self.order() == 0 {
            return OpJet::zero(self.dim(), 0);
        }
        OpJet {
            c: (1..self.c.len()).map(|k| self.c[k].mapv(|z| z * k as f64)).collect(),
        }
    }

    /// The `k`-th time derivative at the expansion point.
    pub fn nth_derivative(&self, k: usize) -> CMat {
        if k > self.order() {
            return linalg::zeros(self.dim());
        }
        let f: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k].mapv(|z| z * f)
    }

    /// Apply a time-independent linear map coefficientwise.
    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        OpJet {
            c: self.c.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        self.map(|m| m.mapv(|x| x * z))
    }

    /// Sum truncated at the smaller order; an exact zero does not truncate.
    pub fn add(&self, o: &OpJet) -> Self {
        if o.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return o.clone();
        }
        let n = self.c.len().min(o.c.len());
        OpJet {
            c: (0..n).map(|k| &self.c[k] + &o.c[k]).collect(),
        }
    }

    pub fn add_scaled(&mut self, o: &OpJet, z: C64) {
        if o.is_zero() {
            return;
        }
        if self.is_zero() {
            *self = o.scale(z);
            return;
        }
        let n = self.c.len().min(o.c.len());
        self.c.truncate(n);
        for k in 0..n {
            self.c[k].scaled_add(z, &o.c[k]);
        }
    }

    pub fn sub(&self, o: &OpJet) -> Self {
        let n = self.c.len().min(o.c.len());
        OpJet {
            c: (0..n).map(|k| &self.c[k] - &o.c[k]).collect(),
        }
    }

    pub fn mul(&self, o: &OpJet) -> Self {
        let n = self.c.len().min(o.c.len());
        let d = self.dim();
        OpJet {
            c: (0..n)
                .map(|k| {
                    let mut acc: CMat = Array2::zeros((d, d));
                    for j in 0..=k {
                        acc = acc + self.c[j].dot(&o.c[k - j]);
                    }
                    acc
                })
                .collect(),
        }
    }

    pub fn commutator(&self, o: &OpJet) -> Self {
        let n = self.c.len().min(o.c.len());
        let d = self.dim();
        if self.is_zero() || o.is_zero() {
            return OpJet::zero(d, n - 1);
        }
        OpJet {
            c: (0..n)
                .map(|k| {
                    let mut acc: CMat = Array2::zeros((d, d));
                    for j in 0..=k {
                        acc = acc + linalg::commutator(&self.c[j], &o.c[k - j]);
                    }
                    acc
                })
                .collect(),
        }
    }
}

/// `Σ_{μ=0}^{degree} ε^μ c_μ`, truncated above `degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsSeries {
    pub coeffs: Vec<OpJet>,
}

impl EpsSeries {
    pub fn zero(dim: usize, degree: usize, order: usize) -> Self {
        EpsSeries {
            coeffs: vec![OpJet::zero(dim, order); degree + 1],
        }
    }

    /// `x` placed at ε-power `offset` (zero series if `offset > degree`).
    pub fn monomial(x: OpJet, offset: usize, degree: usize) -> Self {
        let mut s = EpsSeries::zero(x.dim(), degree, x.order());
        if offset <= degree {
            s.coeffs[offset] = x;
        }
        s
    }

    /// Series with `a[μ-1]` at power μ (valuation one), as for `εS`.
    pub fn from_generators(a: &[OpJet], dim: usize, degree: usize) -> Self {
        let order = a.iter().map(|x| x.order()).max().unwrap_or(0);
        let mut s = EpsSeries::zero(dim, degree, order);
        for (i, x) in a.iter().enumerate() {
            if i < degree {
                s.coeffs[i + 1] = x.clone();
            }
        }
        s
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    pub fn add(&self, o: &EpsSeries) -> Result<EpsSeries> {
        self.check(o)?;
        Ok(EpsSeries {
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn add_scaled(&mut self, o: &EpsSeries, z: C64) -> Result<()> {
        self.check(o)?;
        for (a, b) in self.coeffs.iter_mut().zip(&o.coeffs) {
            a.add_scaled(b, z);
        }
        Ok(())
    }

    pub fn scale(&self, z: C64) -> EpsSeries {
        EpsSeries {
            coeffs: self.coeffs.iter().map(|a| a.scale(z)).collect(),
        }
    }

    /// Value at a numerical ε (order-0 parts only).
    pub fn evaluate(&self, eps: f64) -> CMat {
        let mut acc = linalg::zeros(self.dim());
        for (mu, a) in self.coeffs.iter().enumerate() {
            acc.scaled_add(C64::new(eps.powi(mu as i32), 0.0), a.value());
        }
        acc
    }

    fn check(&self, o: &EpsSeries) -> Result<()> {
        if self.degree() != o.degree() || self.dim() != o.dim() {
            return Err(Error::Shape(format!(
                "series of degree {} and dim {} vs degree {} and dim {}",
                self.degree(),
                self.dim(),
                o.degree(),
                o.dim()
            )));
        }
        Ok(())
    }
}

/// Coefficient `k` is `Σ_{i+j=k} [a_i, b_j]`.
pub fn series_commutator(a: &EpsSeries, b: &EpsSeries) -> Result<EpsSeries> {
    a.check(b)?;
    let n = a.degree();
    let order = a.coeffs[0].order().min(b.coeffs[0].order());
    let mut out = EpsSeries::zero(a.dim(), n, order);
    for i in 0..=n {
        if a.coeffs[i].is_zero() {
            continue;
        }
        for j in 0..=(n - i) {
            if b.coeffs[j].is_zero() {
                continue;
            }
            let c = a.coeffs[i].commutator(&b.coeffs[j]);
            out.coeffs[i + j] = out.coeffs[i + j].add(&c);
        }
    }
    Ok(out)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn minus_i_pow(k: usize) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

/// `Σ_k ((−i)^k/k!) ad^k_{εS}(X)`, i.e. `U*XU` for `U = exp(iεS)`.
///
/// `eps_s` must have valuation one. Everything above the series degree is
/// dropped.
pub fn conjugation_series(eps_s: &EpsSeries, x: &EpsSeries) -> Result<EpsSeries> {
    nested_sum(eps_s, x, |k| minus_i_pow(k) / factorial(k))
}

/// The Duhamel coefficients `−ε·Σ_k ((−i)^k/(k+1)!) ad^k_{εS}(εṠ)`.
///
/// Together with `−δ` these are the terms contributed by `−iεδ U*U̇`.
pub fn duhamel_series(eps_s: &EpsSeries, eps_s_dot: &EpsSeries) -> Result<EpsSeries> {
    let inner = nested_sum(eps_s, eps_s_dot, |k| minus_i_pow(k) / factorial(k + 1))?;
    let n = inner.degree();
    let mut out = EpsSeries::zero(inner.dim(), n, inner.coeffs[0].order());
    for mu in 1..=n {
        out.coeffs[mu] = inner.coeffs[mu - 1].scale(C64::new(-1.0, 0.0));
    }
    Ok(out)
}

fn nested_sum(eps_s: &EpsSeries, x: &EpsSeries, weight: impl Fn(usize) -> C64) -> Result<EpsSeries> {
    eps_s.check(x)?;
    if !eps_s.coeffs[0].is_zero() {
        return Err(Error::Invalid("generator series must have zero constant term".into()));
    }
    let n = x.degree();
    let mut term = x.clone();
    let mut out = x.clone();
    for k in 1..=n {
        term = series_commutator(eps_s, &term)?;
        if term.coeffs.iter().all(|c| c.is_zero()) {
            break;
        }
        out.add_scaled(&term, weight(k))?;
    }
    Ok(out)
}
