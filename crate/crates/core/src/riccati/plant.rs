//! Discretized linear plants: the matrices `X`, `R`, `C`, `H0` the Riccati
//! solvers need for internal and boundary feedback design.

use nalgebra::DMatrix;

use super::{homotopy_init, solve_dre_backward, RiccatiPath, RiccatiProblem};
use crate::actuators::{BoundaryActuatorSet, BoundaryModel};
use crate::error::{Error, Result};
use crate::fem::{CoefficientField, FemOperators};

/// State weight in the Riccati cost: `nu S_ii` (the default) or `M_ii`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputWeight {
    #[default]
    Stiffness,
    Mass,
}

/// Result of a feedback design: the path plus homotopy diagnostics.
#[derive(Debug, Clone)]
pub struct RiccatiDesign {
    pub path: RiccatiPath,
    pub homotopy_steps: usize,
    pub homotopy_newton_iterations: usize,
}

/// Linearized plant `d/dt z = nu Lap z - (a - lambda/2) z - div(b z)` on the
/// interior unknowns.
pub struct Plant<'a> {
    ops: &'a FemOperators,
    coeff: CoefficientField,
    pub nu: f64,
    pub lambda: f64,
    minv_s: DMatrix<f64>,
    /// Interior rows of `M^{-1} G1` and `M^{-1} G2`.
    p1: DMatrix<f64>,
    p2: DMatrix<f64>,
    /// Lower Cholesky factor of `M_ii`.
    l_m: DMatrix<f64>,
    c: DMatrix<f64>,
}

fn cholesky_lower(a: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    a.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::SingularSystem(format!("{what} is not positive definite")))
}

impl<'a> Plant<'a> {
    pub fn new(
        ops: &'a FemOperators,
        coeff: CoefficientField,
        nu: f64,
        lambda: f64,
        weight: OutputWeight,
    ) -> Result<Plant<'a>> {
        if nu <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "viscosity nu = {nu} must be positive"
            )));
        }
        let ni = ops.n_interior();
        let m_full = ops.mass.full.to_dense();
        let m_chol = m_full
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("mass matrix is not positive definite".into()))?;
        let np = ops.n_points();
        let p1 = m_chol
            .solve(&ops.g1.full.to_dense())
            .view((0, 0), (ni, np))
            .into_owned();
        let p2 = m_chol
            .solve(&ops.g2.full.to_dense())
            .view((0, 0), (ni, np))
            .into_owned();
        let m_ii = ops.mass_ii_dense();
        let l_m = cholesky_lower(m_ii.clone(), "M_ii")?;
        let s_ii = ops.stiffness.ii.to_dense();
        let minv_s = m_ii.cholesky().expect("M_ii factored above").solve(&s_ii);
        let c = match weight {
            OutputWeight::Stiffness => cholesky_lower(s_ii, "S_ii")?.transpose() * nu.sqrt(),
            OutputWeight::Mass => l_m.transpose(),
        };
        Ok(Plant {
            ops,
            coeff,
            nu,
            lambda,
            minv_s,
            p1,
            p2,
            l_m,
            c,
        })
    }

    pub fn ops(&self) -> &FemOperators {
        self.ops
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeff
    }

    pub fn n_interior(&self) -> usize {
        self.ops.n_interior()
    }

    /// `K_{r,ii}(t) = [M^{-1}(G1 D_b1 + G2 D_b2)]_ii + D_{a - r/2}`.
    pub fn k_ii(&self, t: f64, r: f64) -> DMatrix<f64> {
        let ni = self.n_interior();
        let (a, b1, b2) = self.coeff.nodal(self.ops, t);
        let mut k = DMatrix::from_fn(ni, ni, |i, j| {
            self.p1[(i, j)] * b1[j] + self.p2[(i, j)] * b2[j]
        });
        for i in 0..ni {
            k[(i, i)] += a[i] - 0.5 * r;
        }
        k
    }

    /// Interior rows of `K_r(t) v` for a full nodal matrix `v` (points x M).
    fn k_rows(&self, t: f64, r: f64, v: &DMatrix<f64>) -> DMatrix<f64> {
        let ni = self.n_interior();
        let (a, b1, b2) = self.coeff.nodal(self.ops, t);
        let mut out = &self.p1 * DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| b1[i] * v[(i, j)])
            + &self.p2 * DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| b2[i] * v[(i, j)]);
        for j in 0..v.ncols() {
            for i in 0..ni {
                out[(i, j)] += (a[i] - 0.5 * r) * v[(i, j)];
            }
        }
        out
    }

    /// `X^in_lambda(t) = -nu M_ii^{-1} S_ii - K_{lambda,ii}(t)`.
    pub fn x_internal(&self, t: f64) -> DMatrix<f64> {
        -(&self.minv_s * self.nu) - self.k_ii(t, self.lambda)
    }

    /// State matrix of the extended boundary system.
    ///
    /// `Paper`: `[[X^in_lambda, -K_{0,ii} [B_Psi~]_i], [0, -varsigma I]]`.
    /// `Consistent`: `[[X^in_lambda, (2 varsigma - lambda/2) B_bar - [K_lambda B_Psi~]_i], [0, -varsigma_lambda I]]`,
    /// obtained by substituting `z_i = y + [B_Psi~]_i kappa` into the
    /// discrete dynamics and using `(nu S + varsigma M) B_Psi~ = 0` on the interior rows.
    pub fn x_boundary(&self, t: f64, set: &BoundaryActuatorSet) -> DMatrix<f64> {
        let ni = self.n_interior();
        let m = set.count();
        let mut x = DMatrix::zeros(ni + m, ni + m);
        x.view_mut((0, 0), (ni, ni)).copy_from(&self.x_internal(t));
        let (coupling, decay) = match set.model {
            BoundaryModel::Paper => (
                -(self.k_ii(t, 0.0) * set.extensions_interior()),
                set.varsigma,
            ),
            BoundaryModel::Consistent => {
                let sigma_l = set.varsigma - 0.5 * self.lambda;
                (
                    &set.b_bar * (set.varsigma + sigma_l)
                        - self.k_rows(t, self.lambda, &set.extensions),
                    sigma_l,
                )
            }
        };
        x.view_mut((0, ni), (ni, m)).copy_from(&coupling);
        for i in 0..m {
            x[(ni + i, ni + i)] = -decay;
        }
        x
    }

    /// Output matrix for internal control (`C^T C` is the state weight).
    pub fn c_internal(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `blockdiag(C_in, I_M)`.
    pub fn c_boundary(&self, m: usize) -> DMatrix<f64> {
        block_diag_identity(&self.c, m)
    }

    /// Homotopy start `H0` with `H0 H0^T = M_ii^{-1}`.
    pub fn h0_internal(&self) -> DMatrix<f64> {
        let ni = self.n_interior();
        self.l_m
            .clone()
            .solve_lower_triangular(&DMatrix::identity(ni, ni))
            .expect("Cholesky factor has a positive diagonal")
            .transpose()
    }

    pub fn h0_boundary(&self, m: usize) -> DMatrix<f64> {
        block_diag_identity(&self.h0_internal(), m)
    }

    fn design(
        &self,
        x_at: impl Fn(f64) -> DMatrix<f64> + Send + Sync,
        r: &DMatrix<f64>,
        c: &DMatrix<f64>,
        h0: &DMatrix<f64>,
        t_final: f64,
        n_t: usize,
        homotopy_steps: usize,
    ) -> Result<RiccatiDesign> {
        if n_t == 0 || t_final <= 0.0 {
            return Err(Error::InvalidArgument(
                "time grid needs T > 0 and N_t >= 1".into(),
            ));
        }
        let k = t_final / n_t as f64;
        let x_t = x_at(t_final);
        let init = homotopy_init(&x_t, r, c, h0, homotopy_steps)?;
        let path = if self.coeff.is_stationary() {
            RiccatiPath::constant(init.pi, n_t)
        } else {
            let problem = RiccatiProblem {
                x: Box::new(move |j| x_at(j as f64 * k)),
                r: r.clone(),
                c: c.clone(),
                k,
                n_t,
            };
            solve_dre_backward(&problem, &init.pi)?
        };
        Ok(RiccatiDesign {
            path,
            homotopy_steps: init.steps,
            homotopy_newton_iterations: init.newton_iterations,
        })
    }

    /// Feedback path for internal actuators with input matrix `r_in`.
    pub fn design_internal(
        &self,
        r_in: &DMatrix<f64>,
        t_final: f64,
        n_t: usize,
        homotopy_steps: usize,
    ) -> Result<RiccatiDesign> {
        self.design(
            |t| self.x_internal(t),
            r_in,
            &self.c,
            &self.h0_internal(),
            t_final,
            n_t,
            homotopy_steps,
        )
    }

    /// Feedback path for the extended boundary system.
    pub fn design_boundary(
        &self,
        set: &BoundaryActuatorSet,
        t_final: f64,
        n_t: usize,
        homotopy_steps: usize,
    ) -> Result<RiccatiDesign> {
        let m = set.count();
        self.design(
            |t| self.x_boundary(t, set),
            &set.r_bo,
            &self.c_boundary(m),
            &self.h0_boundary(m),
            t_final,
            n_t,
            homotopy_steps,
        )
    }
}

fn block_diag_identity(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r + m, c + m);
    out.view_mut((0, 0), (r, c)).copy_from(a);
    out.view_mut((r, c), (m, m)).fill_with_identity();
    out
}
