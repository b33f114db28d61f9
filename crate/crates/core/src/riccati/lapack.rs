//! Thin safe wrappers over the two LAPACK routines the Lyapunov solver needs.

use std::os::raw::{c_char, c_int};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Real Schur form `A = U T U^T`.
pub struct Schur {
    pub t: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub eig_re: Vec<f64>,
}

fn gees(a: &DMatrix<f64>, want_vectors: bool) -> Result<Schur> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Schur needs a square matrix");
    if n == 0 {
        return Ok(Schur {
            t: DMatrix::zeros(0, 0),
            u: DMatrix::zeros(0, 0),
            eig_re: vec![],
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "Schur factorization of a non-finite matrix".into(),
        ));
    }
    let ni = n as c_int;
    let mut t = a.clone();
    let mut u = DMatrix::zeros(
        if want_vectors { n } else { 1 },
        if want_vectors { n } else { 1 },
    );
    let ldvs = u.nrows() as c_int;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut sdim: c_int = 0;
    let mut info: c_int = 0;
    let mut bwork = vec![0 as c_int; n];
    let jobvs = if want_vectors { b'V' } else { b'N' } as c_char;
    let sort = b'N' as c_char;
    let mut query = 0.0;
    let lwork_query: c_int = -1;
    // SAFETY: all buffers are sized per the LAPACK documentation for dgees.
    unsafe {
        lapack_sys::dgees_(
            &jobvs,
            &sort,
            None,
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldvs,
            &mut query,
            &lwork_query,
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = (query as usize).max(3 * n);
    let mut work = vec![0.0; lwork];
    let lwork = lwork as c_int;
    unsafe {
        lapack_sys::dgees_(
            &jobvs,
            &sort,
            None,
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldvs,
            work.as_mut_ptr(),
            &lwork,
            bwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::SingularSystem(format!(
            "dgees failed with info = {info}"
        )));
    }
    Ok(Schur { t, u, eig_re: wr })
}

pub fn schur(a: &DMatrix<f64>) -> Result<Schur> {
    gees(a, true)
}

/// Largest real part of the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(gees(a, false)?
        .eig_re
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Solves `T^T X + X T = C` for quasi-triangular `T`; returns `X`.
pub fn trsyl_transposed(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ni = n as c_int;
    let mut x = c.clone();
    let mut scale = 1.0;
    let mut info: c_int = 0;
    let (ta, tb) = (b'T' as c_char, b'N' as c_char);
    let isgn: c_int = 1;
    // SAFETY: T and X are n x n column-major buffers.
    unsafe {
        lapack_sys::dtrsyl_(
            &ta,
            &tb,
            &isgn,
            &ni,
            &ni,
            t.as_ptr(),
            &ni,
            t.as_ptr(),
            &ni,
            x.as_mut_ptr(),
            &ni,
            &mut scale,
            &mut info,
        );
    }
    match info {
        0 => {}
        1 => return Err(Error::SingularLyapunov),
        _ => {
            return Err(Error::SingularSystem(format!(
                "dtrsyl failed with info = {info}"
            )))
        }
    }
    if scale != 1.0 {
        x /= scale;
    }
    Ok(x)
}
