//! Small dense helpers on top of nalgebra for Hermitian positive-definite systems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::C64;

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn hpd_factor(a: &DMatrix<C64>) -> Result<Cholesky<C64, Dyn>> {
    if a.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Numerical("non-finite entry in system matrix".into()));
    }
    let fail = || {
        let diag_min = a.diagonal().iter().map(|d| d.re).fold(f64::INFINITY, f64::min);
        Error::Numerical(format!(
            "Cholesky failed on {}x{} system (smallest diagonal {diag_min:e})",
            a.nrows(),
            a.ncols()
        ))
    };
    let ch = Cholesky::new(a.clone()).ok_or_else(fail)?;
    // complex sqrt never fails, so a negative pivot shows up as an imaginary diagonal
    let ok = ch.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.im.abs() <= 1e-8 * d.re);
    if ok {
        Ok(ch)
    } else {
        Err(fail())
    }
}

/// log det of a Cholesky-factored matrix.
pub fn chol_logdet(ch: &Cholesky<C64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Inverse and log-determinant of a Hermitian positive-definite matrix.
pub fn hpd_inverse(a: &DMatrix<C64>) -> Result<(DMatrix<C64>, f64)> {
    let ch = hpd_factor(a)?;
    let logdet = chol_logdet(&ch);
    let mut inv = ch.inverse();
    hermitize(&mut inv);
    Ok((inv, logdet))
}

/// Replaces `m` by (m + mᴴ)/2.
pub fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Real part of bᴴ C b.
pub fn quad_form(c: &DMatrix<C64>, b: &DVector<C64>) -> f64 {
    b.dotc(&(c * b)).re
}

/// Re tr(A·B).
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Squared Euclidean norm.
pub fn norm_sqr(v: &DVector<C64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}
