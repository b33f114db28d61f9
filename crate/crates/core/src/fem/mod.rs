//! Piecewise-linear finite elements: assembly, operators, elliptic solves and
//! discrete norms. All nodal vectors are in solver order (interior first).

mod solve;
mod sparse;

use nalgebra::{DMatrix, DVector};

pub use solve::{cg, lu_solve, CG_RTOL};
pub use sparse::CsrMatrix;

use crate::config::Expr;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Exact element matrices of the three hat functions on one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMatrices {
    pub mass: [[f64; 3]; 3],
    pub stiffness: [[f64; 3]; 3],
    /// `(phi_i, d/dx1 phi_j)`
    pub g1: [[f64; 3]; 3],
    /// `(phi_i, d/dx2 phi_j)`
    pub g2: [[f64; 3]; 3],
}

pub fn local_matrices(p: [[f64; 2]; 3]) -> LocalMatrices {
    let [[x1, y1], [x2, y2], [x3, y3]] = p;
    let area = 0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1));
    // Gradient of hat i is (b_i, c_i) / (2 area).
    let b = [y2 - y3, y3 - y1, y1 - y2];
    let c = [x3 - x2, x1 - x3, x2 - x1];
    let mut out = LocalMatrices {
        mass: [[0.0; 3]; 3],
        stiffness: [[0.0; 3]; 3],
        g1: [[0.0; 3]; 3],
        g2: [[0.0; 3]; 3],
    };
    for i in 0..3 {
        for j in 0..3 {
            out.mass[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
            out.stiffness[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
            out.g1[i][j] = b[j] / 6.0;
            out.g2[i][j] = c[j] / 6.0;
        }
    }
    out
}

/// A matrix together with its interior/boundary blocks.
#[derive(Debug, Clone)]
pub struct Blocked {
    pub full: CsrMatrix,
    pub ii: CsrMatrix,
    pub ib: CsrMatrix,
    pub bi: CsrMatrix,
    pub bb: CsrMatrix,
}

impl Blocked {
    fn split(full: CsrMatrix, ni: usize) -> Blocked {
        let n = full.nrows();
        Blocked {
            ii: full.block(0..ni, 0..ni),
            ib: full.block(0..ni, ni..n),
            bi: full.block(ni..n, 0..ni),
            bb: full.block(ni..n, ni..n),
            full,
        }
    }
}

/// Which block of a reaction/convection operator to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Full,
    II,
    IB,
}

#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mass: Blocked,
    pub stiffness: Blocked,
    pub g1: Blocked,
    pub g2: Blocked,
    points: Vec<[f64; 2]>,
    n_interior: usize,
}

impl FemOperators {
    pub fn assemble(mesh: &Mesh) -> FemOperators {
        let n = mesh.n_points();
        let ni = mesh.n_interior();
        let points = mesh.ordered_points();
        let tris = mesh.ordered_triangles();
        let cap = 9 * tris.len();
        let (mut tm, mut ts, mut t1, mut t2) = (
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
        );
        for t in &tris {
            let loc = local_matrices([points[t[0]], points[t[1]], points[t[2]]]);
            for a in 0..3 {
                for b in 0..3 {
                    let (i, j) = (t[a], t[b]);
                    tm.push((i, j, loc.mass[a][b]));
                    ts.push((i, j, loc.stiffness[a][b]));
                    t1.push((i, j, loc.g1[a][b]));
                    t2.push((i, j, loc.g2[a][b]));
                }
            }
        }
        let build =
            |t: &[(usize, usize, f64)]| Blocked::split(CsrMatrix::from_triplets(n, n, t), ni);
        FemOperators {
            mass: build(&tm),
            stiffness: build(&ts),
            g1: build(&t1),
            g2: build(&t2),
            points,
            n_interior: ni,
        }
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }
    pub fn n_boundary(&self) -> usize {
        self.points.len() - self.n_interior
    }
    /// Node coordinates in solver order.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Nodal values of `e` at time `t`.
    pub fn eval(&self, e: &Expr, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| e.eval(t, p[0], p[1])),
        )
    }

    fn check_len(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.n_points() {
            return Err(Error::dim(format!(
                "{what} has length {}, expected {}",
                v.len(),
                self.n_points()
            )));
        }
        Ok(())
    }

    /// `1/2 (M D_a + D_a M)`.
    pub fn reaction_matrix(&self, a: &DVector<f64>) -> Result<CsrMatrix> {
        self.check_len(a, "reaction coefficient")?;
        Ok(self
            .mass
            .full
            .map_entries(|i, j, m| 0.5 * m * (a[i] + a[j])))
    }

    /// `G1 D_b1 + G2 D_b2`.
    pub fn convection_matrix(&self, b1: &DVector<f64>, b2: &DVector<f64>) -> Result<CsrMatrix> {
        self.check_len(b1, "convection coefficient b1")?;
        self.check_len(b2, "convection coefficient b2")?;
        Ok(self
            .g1
            .full
            .combine3(&self.g1.full, &self.g2.full, |_, j, g1, _, g2| {
                g1 * b1[j] + g2 * b2[j]
            }))
    }

    /// One block of `1/2 (M D_a + D_a M) + G1 D_b1 + G2 D_b2`.
    pub fn reaction_convection(
        &self,
        a: &DVector<f64>,
        b1: &DVector<f64>,
        b2: &DVector<f64>,
        block: Block,
    ) -> CsrMatrix {
        let ni = self.n_interior;
        let (m, g1, g2, col_off) = match block {
            Block::Full => (&self.mass.full, &self.g1.full, &self.g2.full, 0),
            Block::II => (&self.mass.ii, &self.g1.ii, &self.g2.ii, 0),
            Block::IB => (&self.mass.ib, &self.g1.ib, &self.g2.ib, ni),
        };
        m.combine3(g1, g2, |i, j, m, g1, g2| {
            let j = j + col_off;
            0.5 * m * (a[i] + a[j]) + g1 * b1[j] + g2 * b2[j]
        })
    }

    /// Dense `M_ii`.
    pub fn mass_ii_dense(&self) -> DMatrix<f64> {
        self.mass.ii.to_dense()
    }

    /// Restriction of a full nodal vector to interior nodes.
    pub fn interior(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.n_interior).into_owned()
    }

    /// Restriction of a full nodal vector to boundary nodes.
    pub fn boundary(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.n_interior, self.n_boundary()).into_owned()
    }

    /// Concatenates interior and boundary values into a full nodal vector.
    pub fn join(&self, interior: &DVector<f64>, boundary: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_points());
        v.rows_mut(0, self.n_interior).copy_from(interior);
        v.rows_mut(self.n_interior, self.n_boundary())
            .copy_from(boundary);
        v
    }

    /// `|v|_H^2 = v^T M v` for a full nodal vector.
    pub fn norm_h2(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mass.full.mul_vec(v))
    }

    /// `|v|_H^2` for an interior vector extended by zero.
    pub fn norm_h2_interior(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mass.ii.mul_vec(v))
    }

    /// Solves `-mu Lap v + beta_r v + div(beta_c v) + h = 0` with Dirichlet data.
    ///
    /// Symmetric problems (`beta == 0`) use CG, others a dense LU.
    pub fn solve_elliptic(
        &self,
        mu: f64,
        beta_r: &DVector<f64>,
        beta_c1: &DVector<f64>,
        beta_c2: &DVector<f64>,
        h: &DVector<f64>,
        boundary_values: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if mu <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "diffusion mu = {mu} must be positive"
            )));
        }
        for (v, what) in [
            (beta_r, "beta_r"),
            (beta_c1, "beta_c1"),
            (beta_c2, "beta_c2"),
            (h, "h"),
        ] {
            self.check_len(v, what)?;
        }
        if boundary_values.len() != self.n_boundary() {
            return Err(Error::dim(format!(
                "boundary data has length {}, expected {}",
                boundary_values.len(),
                self.n_boundary()
            )));
        }
        let l_ii = self.reaction_convection(beta_r, beta_c1, beta_c2, Block::II);
        let l_ib = self.reaction_convection(beta_r, beta_c1, beta_c2, Block::IB);
        let a_ii = self.stiffness.ii.lin_comb_same_pattern(mu, &l_ii, 1.0);
        let a_ib = self.stiffness.ib.lin_comb_same_pattern(mu, &l_ib, 1.0);
        let mh = self.mass.full.mul_vec(h);
        let rhs = -(a_ib.mul_vec(boundary_values) + mh.rows(0, self.n_interior));
        let symmetric = beta_c1.iter().chain(beta_c2.iter()).all(|&b| b == 0.0);
        let vi = if symmetric && beta_r.iter().all(|&b| b >= 0.0) {
            cg(&a_ii, &rhs, None, CG_RTOL)?
        } else {
            lu_solve(a_ii.to_dense(), &rhs)?
        };
        Ok(self.join(&vi, boundary_values))
    }
}

/// Time-dependent reaction `a` and convection `(b1, b2)` fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub a: Expr,
    pub b1: Expr,
    pub b2: Expr,
}

impl CoefficientField {
    pub fn new(a: Expr, b1: Expr, b2: Expr) -> CoefficientField {
        CoefficientField { a, b1, b2 }
    }

    pub fn zero() -> CoefficientField {
        CoefficientField::new(Expr::zero(), Expr::zero(), Expr::zero())
    }

    pub fn is_stationary(&self) -> bool {
        use crate::config::Var;
        ![&self.a, &self.b1, &self.b2]
            .iter()
            .any(|e| e.depends_on(Var::T))
    }

    /// Nodal values `(a, b1, b2)` at time `t`.
    pub fn nodal(&self, ops: &FemOperators, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            ops.eval(&self.a, t),
            ops.eval(&self.b1, t),
            ops.eval(&self.b2, t),
        )
    }
}

/// Tridiagonal time mass matrix applied as a quadratic form: `u^T M_t u`.
pub fn time_mass_quadratic(u: &[f64], k: f64) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::dim("space-time norm needs at least two time nodes"));
    }
    let n = u.len();
    let mut acc = 0.0;
    for j in 0..n {
        let diag = if j == 0 || j == n - 1 { 2.0 } else { 4.0 };
        acc += diag * u[j] * u[j];
        if j + 1 < n {
            acc += 2.0 * u[j] * u[j + 1];
        }
    }
    Ok(k / 6.0 * acc)
}

/// Squared space-time norm from per-node squared H norms `|v(t_j)|_H^2`.
pub fn spacetime_norm2(norms_h2: &[f64], k: f64) -> Result<f64> {
    let u: Vec<f64> = norms_h2.iter().map(|v| v.max(0.0).sqrt()).collect();
    time_mass_quadratic(&u, k)
}
