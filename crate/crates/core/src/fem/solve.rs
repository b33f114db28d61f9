use nalgebra::{DMatrix, DVector};

use super::CsrMatrix;
use crate::error::{Error, Result};

pub const CG_RTOL: f64 = 1e-12;

/// Jacobi-preconditioned conjugate gradients for SPD `a`.
///
/// Stops when `|r| <= rtol |b|`; the iteration cap is `10 n`.
pub fn cg(
    a: &CsrMatrix,
    b: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    rtol: f64,
) -> Result<DVector<f64>> {
    a.check_square("CG matrix")?;
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::dim(format!(
            "CG rhs has length {} for n = {n}",
            b.len()
        )));
    }
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let inv_diag = a.diagonal().map(|d| if d != 0.0 { 1.0 / d } else { 1.0 });
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut r = b - a.mul_vec(&x);
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    let max_iter = 10 * n.max(1);
    for _ in 0..max_iter {
        let rnorm = r.norm();
        if rnorm <= rtol * bnorm {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SingularSystem(
                "CG breakdown: matrix is not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        p = &z + (rz_new / rz) * &p;
        rz = rz_new;
    }
    let residual = r.norm() / bnorm;
    if residual <= rtol {
        Ok(x)
    } else {
        Err(Error::SolverNonConvergence {
            iterations: max_iter,
            residual,
        })
    }
}

/// Dense LU solve for general square systems.
pub fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::dim(format!(
            "LU system {}x{} with rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let x = a
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularSystem("LU factorization found a zero pivot".into()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem(
            "LU solve produced non-finite values".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_spd_system() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 2.0),
            ],
        );
        let b = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let x = cg(&a, &b, None, 1e-14).unwrap();
        assert!((a.mul_vec(&x) - b).norm() < 1e-13);
    }

    #[test]
    fn cg_rejects_indefinite_matrix() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            cg(&a, &b, None, 1e-12),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn lu_reports_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(lu_solve(a, &DVector::from_vec(vec![1.0, 1.0])).is_err());
    }
}
