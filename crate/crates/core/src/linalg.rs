//! Dense complex matrix helpers shared by the rest of the crate.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn zeros(n: usize) -> CMat {
    Array2::zeros((n, n))
}

pub fn identity(n: usize) -> CMat {
    Array2::eye(n)
}

pub fn from_real(a: &Array2<f64>) -> CMat {
    a.mapv(|x| C64::new(x, 0.0))
}

pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if max_abs(a) == 0.0 {
        return 0.0;
    }
    match a.svd(false, false) {
        Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
        Err(_) => frobenius(a),
    }
}

/// max |A - A*| entrywise.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// max |A + A*| entrywise.
pub fn anti_hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[(i, j)] + a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn ensure_square(a: &CMat, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn ensure_hermitian(a: &CMat, rel_tol: f64) -> Result<()> {
    ensure_square(a, "operator")?;
    let scale = max_abs(a).max(1.0);
    let dev = hermiticity_defect(a);
    if dev > rel_tol * scale {
        return Err(Error::Adjointness {
            expected: "Hermitian",
            deviation: dev,
        });
    }
    Ok(())
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
pub fn eigh(a: &CMat) -> Result<(Array1<f64>, CMat)> {
    let h = hermitian_part(a);
    // LAPACK sees the row-major buffer as the transpose, i.e. the complex
    // conjugate of a Hermitian matrix, so its eigenvectors come back conjugated.
    let (e, v) = h.eigh(UPLO::Lower)?;
    Ok((e, v.mapv(|z| z.conj())))
}

/// V diag(d) V*
pub fn from_spectrum(vectors: &CMat, d: &Array1<C64>) -> CMat {
    let scaled = vectors * &d.view().insert_axis(Axis(0));
    scaled.dot(&dagger(vectors))
}

/// exp(i·theta·H) for Hermitian H.
pub fn expi(h: &CMat, theta: f64) -> Result<CMat> {
    let (e, v) = eigh(h)?;
    let d = e.mapv(|x| (I * theta * x).exp());
    Ok(from_spectrum(&v, &d))
}

/// U X U*
pub fn conjugate(u: &CMat, x: &CMat) -> CMat {
    u.dot(x).dot(&dagger(u))
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMat) -> Result<f64> {
    let (e, _) = eigh(a)?;
    Ok(e.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Outer product sum over columns: Σ_k v_k v_k*.
pub fn projector_from_columns(v: &CMat, cols: &[usize]) -> CMat {
    let sel = v.select(Axis(1), cols);
    sel.dot(&dagger(&sel))
}

pub fn scale(a: &CMat, z: C64) -> CMat {
    a.mapv(|x| x * z)
}

pub fn scale_re(a: &CMat, r: f64) -> CMat {
    a.mapv(|x| x * r)
}
