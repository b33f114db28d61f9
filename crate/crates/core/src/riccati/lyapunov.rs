use nalgebra::DMatrix;

use super::lapack;
use crate::error::{Error, Result};

/// Solves `A^T P + P A + Q = 0` by Bartels-Stewart on the real Schur form of `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::dim(format!(
            "Lyapunov A {:?}, Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let s = lapack::schur(a)?;
    // With A = U T U^T and Y = U^T P U:  T^T Y + Y T = -U^T Q U.
    let rhs = -(s.u.transpose() * q * &s.u);
    let y = lapack::trsyl_transposed(&s.t, &rhs)?;
    let p = &s.u * y * s.u.transpose();
    let p = symmetrize(p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularLyapunov);
    }
    Ok(p)
}

pub(crate) fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}
