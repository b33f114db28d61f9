//! Algebraic and differential Riccati equations.
//!
//! Conventions: the ARE is `Pi X + X^T Pi - Pi R R^T Pi + Q = 0` and the DRE
//! is `d/dt Pi + Pi X + X^T Pi - Pi R R^T Pi + C^T C = 0`, integrated backward
//! from a final condition.

mod are;
mod lapack;
mod lyapunov;
mod plant;

use nalgebra::DMatrix;

pub use are::{are_residual, solve_are, solve_are_g, stabilizing_seed, AreOptions, AreSolution};
pub use lapack::spectral_abscissa;
pub use lyapunov::solve_lyapunov;
pub use plant::{OutputWeight, Plant, RiccatiDesign};

use crate::error::{Error, Result};

/// `H_tau = (1 - tau)^2 H0 + tau^2 [R 0]`.
pub fn homotopy_matrix(h0: &DMatrix<f64>, r: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut h = h0 * (1.0 - tau).powi(2);
    let w = tau * tau;
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            h[(i, j)] += w * r[(i, j)];
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct HomotopyResult {
    pub pi: DMatrix<f64>,
    /// Number of homotopy steps that succeeded.
    pub steps: usize,
    pub newton_iterations: usize,
}

/// Solves the ARE for `R = r_target` by continuation from `R = h0`.
///
/// Starts with `steps` uniform steps in `tau` and doubles the count on failure,
/// up to 64.
pub fn homotopy_init(
    x_t: &DMatrix<f64>,
    r_target: &DMatrix<f64>,
    c: &DMatrix<f64>,
    h0: &DMatrix<f64>,
    steps: usize,
) -> Result<HomotopyResult> {
    let n = x_t.nrows();
    if h0.shape() != (n, n) || r_target.nrows() != n || r_target.ncols() > n || c.ncols() != n {
        return Err(Error::dim(format!(
            "homotopy X {:?}, R {:?}, C {:?}, H0 {:?}",
            x_t.shape(),
            r_target.shape(),
            c.shape(),
            h0.shape()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "homotopy needs at least one step".into(),
        ));
    }
    let q = c.transpose() * c;
    let mut n_h = steps;
    loop {
        match homotopy_chain(x_t, r_target, &q, h0, n_h) {
            Ok(r) => return Ok(r),
            Err(e) if n_h * 2 <= 64.max(steps) => {
                log::warn!(
                    "homotopy with {n_h} steps failed ({e}); retrying with {}",
                    2 * n_h
                );
                n_h *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

fn homotopy_chain(
    x_t: &DMatrix<f64>,
    r_target: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h0: &DMatrix<f64>,
    n_h: usize,
) -> Result<HomotopyResult> {
    let mut pi: Option<DMatrix<f64>> = None;
    let mut iterations = 0;
    for m in 0..=n_h {
        let tau = m as f64 / n_h as f64;
        let h = homotopy_matrix(h0, r_target, tau);
        let sol = solve_are_g(
            x_t,
            &(&h * h.transpose()),
            q,
            pi.as_ref(),
            AreOptions::default(),
        )
        .map_err(|e| Error::Homotopy {
            tau,
            source: Box::new(e),
        })?;
        iterations += sol.iterations;
        pi = Some(sol.pi);
    }
    Ok(HomotopyResult {
        pi: pi.expect("at least one step"),
        steps: n_h,
        newton_iterations: iterations,
    })
}

/// Data of a differential Riccati equation on the uniform grid `t_j = j k`.
pub struct RiccatiProblem<'a> {
    /// State matrix at grid index `j`.
    pub x: Box<dyn Fn(usize) -> DMatrix<f64> + Send + Sync + 'a>,
    pub r: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
enum PathStorage {
    Constant(DMatrix<f64>),
    Steps(Vec<DMatrix<f64>>),
}

/// Feedback matrices `Pi^j`, `j = 0..=n_t`.
#[derive(Debug, Clone)]
pub struct RiccatiPath {
    storage: PathStorage,
    n_t: usize,
    pub stats: Vec<StepStats>,
}

impl RiccatiPath {
    /// The same matrix at every time node (stationary problems).
    pub fn constant(pi: DMatrix<f64>, n_t: usize) -> RiccatiPath {
        RiccatiPath {
            storage: PathStorage::Constant(pi),
            n_t,
            stats: vec![],
        }
    }

    pub fn from_steps(pis: Vec<DMatrix<f64>>) -> RiccatiPath {
        assert!(!pis.is_empty(), "path needs at least one matrix");
        RiccatiPath {
            n_t: pis.len() - 1,
            storage: PathStorage::Steps(pis),
            stats: vec![],
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dim(&self) -> usize {
        self.at(0).nrows()
    }

    pub fn at(&self, j: usize) -> &DMatrix<f64> {
        assert!(j <= self.n_t, "path index {j} beyond n_t = {}", self.n_t);
        match &self.storage {
            PathStorage::Constant(p) => p,
            PathStorage::Steps(v) => &v[j],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.storage, PathStorage::Constant(_))
    }
}

/// `true` if `p` is symmetric to `1e-9 |p|` and Cholesky succeeds.
pub fn is_spd(p: &DMatrix<f64>) -> bool {
    let asym = (p - p.transpose()).norm();
    asym <= 1e-9 * p.norm().max(f64::MIN_POSITIVE) && p.clone().cholesky().is_some()
}

/// Symmetric with no eigenvalue below `-1e-12 |p|`; admits a zero final condition.
fn is_psd(p: &DMatrix<f64>) -> bool {
    let scale = p.norm().max(f64::MIN_POSITIVE);
    let asym = (p - p.transpose()).norm();
    asym <= 1e-9 * scale && p.clone().symmetric_eigenvalues().min() >= -1e-12 * scale
}

/// Backward Crank-Nicolson sweep; each step is reduced to an ARE in `Pi^j`
/// with `A = X^j - I/k` and
/// `Q = 2 C^T C + (2/k) Pi^{j+1} + Pi^{j+1} X^{j+1} + X^{j+1,T} Pi^{j+1} - Pi^{j+1} R R^T Pi^{j+1}`.
pub fn solve_dre_backward(
    problem: &RiccatiProblem<'_>,
    pi_t: &DMatrix<f64>,
) -> Result<RiccatiPath> {
    let n = pi_t.nrows();
    if problem.k <= 0.0 || problem.n_t == 0 {
        return Err(Error::InvalidArgument(
            "time grid needs k > 0 and n_t >= 1".into(),
        ));
    }
    if problem.r.nrows() != n || problem.c.ncols() != n || pi_t.ncols() != n {
        return Err(Error::dim("DRE data dimensions disagree with Pi_T"));
    }
    if !is_psd(pi_t) {
        return Err(Error::LossOfPositivity(problem.n_t));
    }
    let g = &problem.r * problem.r.transpose();
    let q2 = problem.c.transpose() * &problem.c * 2.0;
    let inv_k = 1.0 / problem.k;
    let mut pis = vec![DMatrix::zeros(0, 0); problem.n_t + 1];
    let mut stats = vec![
        StepStats {
            iterations: 0,
            residual: 0.0
        };
        problem.n_t + 1
    ];
    pis[problem.n_t] = pi_t.clone();
    let mut x_next = (problem.x)(problem.n_t);
    for j in (0..problem.n_t).rev() {
        let x_j = (problem.x)(j);
        let p1 = &pis[j + 1];
        let p1x = p1 * &x_next;
        let q = &q2 + p1 * (2.0 * inv_k) + &p1x + p1x.transpose() - p1 * &g * p1;
        let q = lyapunov::symmetrize(q);
        let mut a = x_j.clone();
        for i in 0..n {
            a[(i, i)] -= inv_k;
        }
        let sol = solve_are_g(&a, &g, &q, Some(p1), AreOptions::default()).map_err(|e| {
            Error::RiccatiStep {
                step: j,
                source: Box::new(e),
            }
        })?;
        if !is_spd(&sol.pi) {
            return Err(Error::LossOfPositivity(j));
        }
        stats[j] = StepStats {
            iterations: sol.iterations,
            residual: sol.residual,
        };
        pis[j] = sol.pi;
        x_next = x_j;
    }
    let mut path = RiccatiPath::from_steps(pis);
    path.stats = stats;
    Ok(path)
}

/// Internal feedback evaluation matrix `R R^T Pi`.
pub fn internal_feedback(pi: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    r * (r.transpose() * pi)
}

/// Row-selected boundary feedback `[0 I] R R^T Pi [I, -E; 0, I]`, an
/// `M x (n + M)` matrix acting on `[z_i; kappa]`; `E` is the interior lift
/// of the extended state.
pub fn boundary_feedback(
    pi: &DMatrix<f64>,
    r_bo: &DMatrix<f64>,
    lift: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = lift.nrows();
    let m = lift.ncols();
    // The last M rows of R_bo are the identity, so [0 I] R_bo = I.
    let rt_pi = r_bo.transpose() * pi;
    let mut f = DMatrix::zeros(m, n + m);
    f.view_mut((0, 0), (m, n))
        .copy_from(&rt_pi.view((0, 0), (m, n)));
    let corr = rt_pi.view((0, n), (m, m)) - rt_pi.view((0, 0), (m, n)) * lift;
    f.view_mut((0, n), (m, m)).copy_from(&corr);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homotopy_weights_at_midpoint() {
        let h0 = DMatrix::identity(2, 2) * 4.0;
        let r = DMatrix::from_row_slice(2, 1, &[8.0, 0.0]);
        let h = homotopy_matrix(&h0, &r, 0.5);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn constant_path_indexes_everywhere() {
        let p = RiccatiPath::constant(DMatrix::identity(2, 2), 5);
        assert_eq!(p.at(5), p.at(0));
        assert!(p.is_constant());
    }
}
