//! Scalar time profiles with exact Taylor jets, switching functions, and
//! time-dependent Hamiltonian families.

use std::sync::Arc;

use crate::linalg::{self, CMat};
use crate::neass::series::OpJet;

/// Truncated Taylor series `Σ_k c_k τ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Taylor {
    pub c: Vec<f64>,
}

impl Taylor {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Taylor { c }
    }

    /// `x0 + slope·τ`.
    pub fn variable(x0: f64, slope: f64, order: usize) -> Self {
        let mut t = Self::constant(x0, order);
        if order >= 1 {
            t.c[1] = slope;
        }
        t
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        if k > self.order() {
            return 0.0;
        }
        self.c[k] * (1..=k).map(|i| i as f64).product::<f64>()
    }

    fn zip(&self, o: &Taylor, f: impl Fn(f64, f64) -> f64) -> Taylor {
        let n = self.c.len().min(o.c.len());
        Taylor {
            c: (0..n).map(|k| f(self.c[k], o.c[k])).collect(),
        }
    }

    pub fn add(&self, o: &Taylor) -> Taylor {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Taylor) -> Taylor {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Taylor {
        Taylor {
            c: self.c.iter().map(|x| x * s).collect(),
        }
    }

    pub fn mul(&self, o: &Taylor) -> Taylor {
        let n = self.c.len().min(o.c.len());
        Taylor {
            c: (0..n).map(|k| (0..=k).map(|j| self.c[j] * o.c[k - j]).sum()).collect(),
        }
    }

    pub fn recip(&self) -> Taylor {
        let n = self.c.len();
        let a0 = self.c[0];
        let mut b = vec![0.0; n];
        b[0] = 1.0 / a0;
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| self.c[j] * b[k - j]).sum();
            b[k] = -s / a0;
        }
        Taylor { c: b }
    }

    pub fn div(&self, o: &Taylor) -> Taylor {
        self.mul(&o.recip())
    }

    pub fn exp(&self) -> Taylor {
        let n = self.c.len();
        let mut b = vec![0.0; n];
        b[0] = self.c[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| j as f64 * self.c[j] * b[k - j]).sum();
            b[k] = s / k as f64;
        }
        Taylor { c: b }
    }
}

/// A scalar function of time with Taylor jets of any order.
pub trait Schedule: Send + Sync {
    fn jet(&self, t: f64, order: usize) -> Taylor;

    fn value(&self, t: f64) -> f64 {
        self.jet(t, 0).value()
    }

    /// `[f(t), f'(t), …, f^{(order)}(t)]`.
    fn derivatives(&self, t: f64, order: usize) -> Vec<f64> {
        let j = self.jet(t, order);
        (0..=order).map(|k| j.derivative(k)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantSchedule(pub f64);

impl Schedule for ConstantSchedule {
    fn jet(&self, _t: f64, order: usize) -> Taylor {
        Taylor::constant(self.0, order)
    }
}

/// `amplitude·sin(ω t + phase)`.
#[derive(Clone, Copy, Debug)]
pub struct SineSchedule {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Schedule for SineSchedule {
    fn jet(&self, t: f64, order: usize) -> Taylor {
        let arg = self.omega * t + self.phase;
        let mut c = Vec::with_capacity(order + 1);
        let mut fact = 1.0;
        for k in 0..=order {
            if k > 0 {
                fact *= k as f64;
            }
            let d = match k % 4 {
                0 => arg.sin(),
                1 => arg.cos(),
                2 => -arg.sin(),
                _ => -arg.cos(),
            };
            c.push(self.amplitude * self.omega.powi(k as i32) * d / fact);
        }
        Taylor { c }
    }
}

pub type CustomSwitch = Arc<dyn Fn(f64, usize) -> Taylor + Send + Sync>;

#[derive(Clone)]
pub enum SwitchKind {
    /// Polynomial smoothstep with `order` vanishing derivatives at both ends.
    Smoothstep { order: usize },
    /// `σ(x)/(σ(x)+σ(1−x))` with `σ(x) = exp(−1/x)`; C^∞.
    ExpBump,
    /// Jet of a user profile on `[0,1]` at the given point and order.
    Custom(CustomSwitch),
}

impl std::fmt::Debug for SwitchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SwitchKind::Smoothstep { order } => write!(f, "Smoothstep({order})"),
            SwitchKind::ExpBump => write!(f, "ExpBump"),
            SwitchKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Ramp `f` with `f = 0` for `t ≤ 0` and `f = 1` for `t ≥ duration`.
#[derive(Clone, Debug)]
pub struct SwitchingFunction {
    pub kind: SwitchKind,
    pub duration: f64,
    poly: Vec<f64>,
}

fn binom(n: usize, k: usize) -> f64 {
    crate::fock::binomial(n, k) as f64
}

/// Coefficients of the smoothstep polynomial of the given order.
fn smoothstep_coefficients(k: usize) -> Vec<f64> {
    let mut c = vec![0.0; 2 * k + 2];
    for n in 0..=k {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        c[k + 1 + n] += sign * binom(k + n, n) * binom(2 * k + 1, k - n);
    }
    c
}

/// Taylor coefficients of the polynomial `p` around `x0`.
fn poly_shift(p: &[f64], x0: f64, order: usize) -> Vec<f64> {
    let mut d = p.to_vec();
    let mut out = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let v = d.iter().rev().fold(0.0, |acc, &a| acc * x0 + a);
        out.push(v);
        // next: derivative divided by (k+1)
        if d.len() <= 1 {
            d = vec![0.0];
        } else {
            d = (1..d.len()).map(|i| d[i] * i as f64 / (k + 1) as f64).collect();
        }
    }
    out
}

const SIGMA_CUTOFF: f64 = 1.0 / 700.0;

fn sigma_jet(x: &Taylor) -> Taylor {
    if x.value() <= SIGMA_CUTOFF {
        return Taylor::constant(0.0, x.order());
    }
    x.recip().scale(-1.0).exp()
}

impl SwitchingFunction {
    pub fn smoothstep(order: usize, duration: f64) -> Self {
        SwitchingFunction {
            kind: SwitchKind::Smoothstep { order },
            duration,
            poly: smoothstep_coefficients(order),
        }
    }

    pub fn exp_bump(duration: f64) -> Self {
        SwitchingFunction {
            kind: SwitchKind::ExpBump,
            duration,
            poly: Vec::new(),
        }
    }

    pub fn custom(f: CustomSwitch, duration: f64) -> Self {
        SwitchingFunction {
            kind: SwitchKind::Custom(f),
            duration,
            poly: Vec::new(),
        }
    }

    /// Jet of the unit-interval profile at `x`.
    fn unit_jet(&self, x: f64, order: usize) -> Taylor {
        match &self.kind {
            // reflect through S(x) = 1 − S(1−x) to avoid cancellation near 1
            SwitchKind::Smoothstep { .. } if x > 0.5 => {
                let mut c = poly_shift(&self.poly, 1.0 - x, order);
                c[0] = 1.0 - c[0];
                for (k, v) in c.iter_mut().enumerate().skip(1) {
                    if k % 2 == 0 {
                        *v = -*v;
                    }
                }
                Taylor { c }
            }
            SwitchKind::Smoothstep { .. } => Taylor {
                c: poly_shift(&self.poly, x, order),
            },
            SwitchKind::ExpBump => {
                let xv = Taylor::variable(x, 1.0, order);
                let one_minus = Taylor::constant(1.0, order).sub(&xv);
                let a = sigma_jet(&xv);
                let b = sigma_jet(&one_minus);
                a.div(&a.add(&b))
            }
            SwitchKind::Custom(f) => f(x, order),
        }
    }
}

impl Schedule for SwitchingFunction {
    fn jet(&self, t: f64, order: usize) -> Taylor {
        let x = t / self.duration;
        if x <= 0.0 {
            return Taylor::constant(0.0, order);
        }
        if x >= 1.0 {
            return Taylor::constant(1.0, order);
        }
        let u = self.unit_jet(x, order);
        // d/dt = (1/T) d/dx
        let mut s = 1.0;
        Taylor {
            c: u.c
                .iter()
                .map(|&v| {
                    let r = v * s;
                    s /= self.duration;
                    r
                })
                .collect(),
        }
    }
}

/// `H(t) = H_0(t) + V(t) + ε·H_1(t)` on a fixed sector, with `H_0(t)` the
/// unperturbed part whose patch the expansion follows.
pub trait TimeFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn h0(&self, t: f64) -> CMat;
    fn h0_dot(&self, t: f64) -> CMat;
    fn v(&self, t: f64) -> CMat;
    fn h1(&self, t: f64) -> CMat;

    fn hamiltonian(&self, t: f64, epsilon: f64) -> CMat {
        self.h0(t) + self.v(t) + self.h1(t).mapv(|z| z * epsilon)
    }

    /// Whether `H_0` is constant in time.
    fn h0_is_static(&self) -> bool;

    /// Taylor jets of `V` and `H_1` around `t`, when available analytically.
    fn perturbation_jets(&self, t: f64, order: usize) -> Option<(OpJet, OpJet)>;
}

/// `H_0 + g(t)·W_0 + f(t)·(V + εH_1)` with scalar schedules `f` and `g`.
pub struct SwitchedFamily {
    pub h0: CMat,
    pub drive: Option<(CMat, Arc<dyn Schedule>)>,
    pub v: CMat,
    pub h1: CMat,
    pub switching: Arc<dyn Schedule>,
}

impl SwitchedFamily {
    pub fn new(h0: CMat, v: CMat, h1: CMat, switching: Arc<dyn Schedule>) -> Self {
        SwitchedFamily {
            h0,
            drive: None,
            v,
            h1,
            switching,
        }
    }

    /// A family without time dependence.
    pub fn constant(h0: CMat, v: CMat, h1: CMat) -> Self {
        Self::new(h0, v, h1, Arc::new(ConstantSchedule(1.0)))
    }

    pub fn with_drive(mut self, w0: CMat, g: Arc<dyn Schedule>) -> Self {
        self.drive = Some((w0, g));
        self
    }
}

impl TimeFamily for SwitchedFamily {
    fn dim(&self) -> usize {
        self.h0.nrows()
    }

    fn h0(&self, t: f64) -> CMat {
        match &self.drive {
            Some((w, g)) => &self.h0 + &linalg::scale_re(w, g.value(t)),
            None => self.h0.clone(),
        }
    }

    fn h0_dot(&self, t: f64) -> CMat {
        match &self.drive {
            Some((w, g)) => linalg::scale_re(w, g.jet(t, 1).derivative(1)),
            None => linalg::zeros(self.dim()),
        }
    }

    fn v(&self, t: f64) -> CMat {
        linalg::scale_re(&self.v, self.switching.value(t))
    }

    fn h1(&self, t: f64) -> CMat {
        linalg::scale_re(&self.h1, self.switching.value(t))
    }

    fn h0_is_static(&self) -> bool {
        self.drive.is_none()
    }

    fn perturbation_jets(&self, t: f64, order: usize) -> Option<(OpJet, OpJet)> {
        if self.drive.is_some() {
            return None;
        }
        let f = self.switching.jet(t, order);
        Some((OpJet::from_scalar(&f, &self.v), OpJet::from_scalar(&f, &self.h1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_exp_and_recip() {
        let x = Taylor::variable(0.3, 1.0, 5);
        let e = x.exp();
        for k in 0..=5 {
            assert!((e.derivative(k) - 0.3f64.exp()).abs() < 1e-13);
        }
        let r = x.recip();
        // d^k/dx^k 1/x = (-1)^k k! / x^{k+1}
        for k in 0..=5 {
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let want = if k % 2 == 0 { 1.0 } else { -1.0 } * fact / 0.3f64.powi(k as i32 + 1);
            assert!((r.derivative(k) - want).abs() < 1e-9 * want.abs());
        }
    }

    #[test]
    fn smoothstep_endpoints() {
        for k in [1usize, 3, 7] {
            let s = SwitchingFunction::smoothstep(k, 2.0);
            assert_eq!(s.value(-1.0), 0.0);
            assert_eq!(s.value(3.0), 1.0);
            let near0 = s.jet(1e-12, k);
            let near1 = s.jet(2.0 - 1e-12, k);
            for d in 1..=k {
                assert!(near0.derivative(d).abs() < 1e-3, "k={k} d={d}");
                assert!(near1.derivative(d).abs() < 1e-3, "k={k} d={d}");
            }
            assert!((s.value(1.0) - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn switches_are_monotone() {
        let fs = [SwitchingFunction::smoothstep(7, 1.0), SwitchingFunction::exp_bump(1.0)];
        for f in &fs {
            let mut last = 0.0;
            for i in 0..=200 {
                let v = f.value(i as f64 / 200.0);
                assert!(v >= last - 1e-15, "{:?} at {i}: {v} < {last}", f.kind);
                last = v;
            }
        }
    }

    #[test]
    fn bump_jet_matches_finite_differences() {
        let f = SwitchingFunction::exp_bump(1.5);
        let t = 0.6;
        let j = f.jet(t, 3);
        let h = 1e-4;
        let fd1 = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
        let fd2 = (f.value(t + h) - 2.0 * f.value(t) + f.value(t - h)) / (h * h);
        assert!((j.derivative(1) - fd1).abs() < 1e-7);
        assert!((j.derivative(2) - fd2).abs() < 1e-5);
    }

    #[test]
    fn sine_jet() {
        let s = SineSchedule {
            amplitude: 2.0,
            omega: 3.0,
            phase: 0.1,
        };
        let d = s.derivatives(0.4, 2);
        let a = 3.0 * 0.4 + 0.1;
        assert!((d[0] - 2.0 * f64::sin(a)).abs() < 1e-14);
        assert!((d[1] - 6.0 * f64::cos(a)).abs() < 1e-13);
        assert!((d[2] + 18.0 * f64::sin(a)).abs() < 1e-12);
    }
}
