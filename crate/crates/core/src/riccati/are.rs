use nalgebra::DMatrix;

use super::lapack::spectral_abscissa;
use super::lyapunov::{solve_lyapunov, symmetrize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreOptions {
    /// Accept when `|res|_F <= tol * max(1, |Q|_F)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AreOptions {
    fn default() -> Self {
        AreOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AreSolution {
    pub pi: DMatrix<f64>,
    /// Newton-Kleinman steps taken (0 when the seed already solved the equation).
    pub iterations: usize,
    /// Frobenius norm of the residual at the returned solution.
    pub residual: f64,
}

/// `Pi X + X^T Pi - Pi G Pi + Q`.
pub fn are_residual(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
    pi: &DMatrix<f64>,
) -> DMatrix<f64> {
    let px = pi * x;
    &px + px.transpose() - pi * g * pi + q
}

/// Solves `Pi X + X^T Pi - Pi R R^T Pi + Q = 0` by Newton-Kleinman.
pub fn solve_are(
    x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q: &DMatrix<f64>,
    seed: Option<&DMatrix<f64>>,
) -> Result<AreSolution> {
    if r.nrows() != x.nrows() {
        return Err(Error::dim(format!(
            "R has {} rows, X is {}x{}",
            r.nrows(),
            x.nrows(),
            x.ncols()
        )));
    }
    solve_are_g(x, &(r * r.transpose()), q, seed, AreOptions::default())
}

/// Newton-Kleinman with `G = R R^T` given directly.
pub fn solve_are_g(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
    seed: Option<&DMatrix<f64>>,
    opts: AreOptions,
) -> Result<AreSolution> {
    let n = x.nrows();
    if x.ncols() != n || g.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::dim(format!(
            "ARE X {:?}, G {:?}, Q {:?}",
            x.shape(),
            g.shape(),
            q.shape()
        )));
    }
    let target = opts.tol * q.norm().max(1.0);

    let mut pi = match seed {
        Some(s) if s.shape() == (n, n) => {
            let residual = are_residual(x, g, q, s).norm();
            if residual <= target {
                return Ok(AreSolution {
                    pi: s.clone(),
                    iterations: 0,
                    residual,
                });
            }
            if spectral_abscissa(&(x - g * s))? < 0.0 {
                s.clone()
            } else {
                stabilizing_seed(x, g)?
            }
        }
        Some(s) => {
            return Err(Error::dim(format!(
                "seed is {:?}, expected {n}x{n}",
                s.shape()
            )))
        }
        None => stabilizing_seed(x, g)?,
    };

    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let a = x - g * &pi;
        let rhs = q + &pi * g * &pi;
        pi = solve_lyapunov(&a, &rhs)?;
        residual = are_residual(x, g, q, &pi).norm();
        if !residual.is_finite() {
            break;
        }
        if residual <= target {
            return Ok(AreSolution {
                pi,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::MaxIterations {
        iterations: opts.max_iter,
        residual,
    })
}

/// An initial `Pi_0` with `X - G Pi_0` Hurwitz.
///
/// Zero if `X` is already stable; `sigma G^{-1}` (`sigma` = abscissa + 1)
/// when `G` is invertible; otherwise Bass's method.
pub fn stabilizing_seed(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let alpha = spectral_abscissa(x)?;
    if alpha < 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let sigma = alpha + 1.0;
    if let Some(chol) = g.clone().cholesky() {
        let seed = symmetrize(chol.inverse() * sigma);
        if spectral_abscissa(&(x - g * &seed))? < 0.0 {
            return Ok(seed);
        }
    }
    // Bass: with beta large enough that -(X + beta I) is Hurwitz, solve
    // (X + beta I) P + P (X + beta I)^T = 2 G and take Pi_0 = P^{-1}.
    let beta = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * n as f64 + 1.0;
    let shifted = (x + DMatrix::identity(n, n) * beta).transpose();
    let p = solve_lyapunov(&shifted, &(g * -2.0)).map_err(|_| Error::NoStabilizingSeed)?;
    let seed = p
        .cholesky()
        .map(|c| symmetrize(c.inverse()))
        .ok_or(Error::NoStabilizingSeed)?;
    if spectral_abscissa(&(x - g * &seed))? < 0.0 {
        Ok(seed)
    } else {
        Err(Error::NoStabilizingSeed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bass_seed_for_rank_deficient_input() {
        // Unstable 2x2 system driven through one channel.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let r = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let g = &r * r.transpose();
        let seed = stabilizing_seed(&x, &g).unwrap();
        assert!(spectral_abscissa(&(&x - &g * &seed)).unwrap() < 0.0);
        let sol = solve_are(&x, &r, &DMatrix::identity(2, 2), None).unwrap();
        assert!(spectral_abscissa(&(&x - &g * &sol.pi)).unwrap() < 0.0);
    }

    #[test]
    fn uncontrollable_unstable_mode_has_no_seed() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(solve_are(&x, &r, &DMatrix::identity(2, 2), None).is_err());
    }
}
