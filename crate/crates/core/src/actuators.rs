//! Internal (piecewise-constant) and boundary (sinusoidal arc) actuators.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{cg, FemOperators, CG_RTOL};

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Rect {
        Rect { x0, x1, y0, y1 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Orthonormalizes `vectors` in the inner product `<u, v> = u^T M v`
/// (modified Gram-Schmidt).
///
/// Returns the orthonormal vectors and the upper-triangular `R` with
/// `[v_1 .. v_m] = [q_1 .. q_m] R`.
pub fn gram_schmidt_m(
    vectors: &[DVector<f64>],
    m: &DMatrix<f64>,
) -> Result<(Vec<DVector<f64>>, DMatrix<f64>)> {
    let k = vectors.len();
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut r = DMatrix::zeros(k, k);
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != m.nrows() {
            return Err(Error::dim(format!(
                "vector {} has length {}",
                i + 1,
                v.len()
            )));
        }
        let input_norm = v.dot(&(m * v)).sqrt();
        let mut w = v.clone();
        for (j, qj) in q.iter().enumerate() {
            let c = qj.dot(&(m * &w));
            r[(j, i)] = c;
            w.axpy(-c, qj, 1.0);
        }
        let norm = w.dot(&(m * &w)).max(0.0).sqrt();
        if input_norm == 0.0 || norm < 1e-12 * input_norm {
            return Err(Error::RankDeficient(i + 1));
        }
        r[(i, i)] = norm;
        q.push(w / norm);
    }
    Ok((q, r))
}

/// Piecewise-constant actuators on rectangles, restricted to interior nodes.
#[derive(Debug, Clone)]
pub struct InternalActuatorSet {
    pub cells: Vec<Rect>,
    /// Interior nodal 0/1 vectors, one per actuator.
    pub indicators: Vec<DVector<f64>>,
    /// Interior nodal values of `chi 1_omega`.
    pub chi_mask: DVector<f64>,
    /// `M_ii`-orthonormal actuator basis, one column per actuator.
    pub s_m: DMatrix<f64>,
    /// Gram-Schmidt factor: `[indicators] = S_M * gs_r`.
    pub gs_r: DMatrix<f64>,
    /// Riccati input matrix `D_chi S_M`.
    pub r_in: DMatrix<f64>,
}

impl InternalActuatorSet {
    /// Regular `m x n` partition of `omega`. Cells are half-open
    /// `[lo, hi)` except the last in each direction, which is closed.
    /// `chi` defaults to the indicator of `omega`.
    pub fn grid(
        ops: &FemOperators,
        omega: Rect,
        m: usize,
        n: usize,
        chi: Option<&DVector<f64>>,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "actuator grid ({m}, {n}) must be positive"
            )));
        }
        let (dx, dy) = (
            (omega.x1 - omega.x0) / m as f64,
            (omega.y1 - omega.y0) / n as f64,
        );
        let ni = ops.n_interior();
        // Column-major cell numbering over (l1, l2), l1 fastest.
        let mut indicators = vec![DVector::zeros(ni); m * n];
        let mut in_omega = DVector::zeros(ni);
        for (i, p) in ops.points()[..ni].iter().enumerate() {
            if !omega.contains(*p) {
                continue;
            }
            let l1 = (((p[0] - omega.x0) / dx).floor() as usize).min(m - 1);
            let l2 = (((p[1] - omega.y0) / dy).floor() as usize).min(n - 1);
            indicators[l1 + m * l2][i] = 1.0;
            in_omega[i] = 1.0;
        }
        let cells = (0..n)
            .flat_map(|l2| (0..m).map(move |l1| (l1, l2)))
            .map(|(l1, l2)| {
                Rect::new(
                    omega.x0 + l1 as f64 * dx,
                    omega.x0 + (l1 + 1) as f64 * dx,
                    omega.y0 + l2 as f64 * dy,
                    omega.y0 + (l2 + 1) as f64 * dy,
                )
            })
            .collect();
        Self::finish(ops, cells, indicators, chi.cloned().unwrap_or(in_omega))
    }

    /// One actuator per rectangle; a node shared by several rectangles goes
    /// to the first. `chi` defaults to the indicator of the union.
    pub fn from_cells(
        ops: &FemOperators,
        cells: Vec<Rect>,
        chi: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let ni = ops.n_interior();
        let mut indicators = vec![DVector::zeros(ni); cells.len()];
        let mut in_union = DVector::zeros(ni);
        for (i, p) in ops.points()[..ni].iter().enumerate() {
            if let Some(c) = cells.iter().position(|c| c.contains(*p)) {
                indicators[c][i] = 1.0;
                in_union[i] = 1.0;
            }
        }
        Self::finish(ops, cells, indicators, chi.cloned().unwrap_or(in_union))
    }

    fn finish(
        ops: &FemOperators,
        cells: Vec<Rect>,
        indicators: Vec<DVector<f64>>,
        chi_mask: DVector<f64>,
    ) -> Result<Self> {
        if chi_mask.len() != ops.n_interior() {
            return Err(Error::dim(format!(
                "chi mask has length {}",
                chi_mask.len()
            )));
        }
        if let Some(c) = indicators.iter().position(|v| v.iter().all(|&x| x == 0.0)) {
            return Err(Error::EmptyCell(c));
        }
        let m_ii = ops.mass_ii_dense();
        let (q, gs_r) = gram_schmidt_m(&indicators, &m_ii)?;
        let s_m = DMatrix::from_columns(&q);
        let r_in = DMatrix::from_diagonal(&chi_mask) * &s_m;
        Ok(InternalActuatorSet {
            cells,
            indicators,
            chi_mask,
            s_m,
            gs_r,
            r_in,
        })
    }

    /// No restriction on the number of actuators (`P_M = 1`): the input
    /// matrix is `D_chi`, stored compressed to its nonzero columns.
    pub fn unrestricted(
        ops: &FemOperators,
        omega: Rect,
        chi: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let ni = ops.n_interior();
        let chi_mask = match chi {
            Some(c) => c.clone(),
            None => DVector::from_iterator(
                ni,
                ops.points()[..ni]
                    .iter()
                    .map(|p| f64::from(omega.contains(*p) as u8)),
            ),
        };
        let support: Vec<usize> = (0..ni).filter(|&i| chi_mask[i] != 0.0).collect();
        if support.is_empty() {
            return Err(Error::EmptyCell(0));
        }
        let mut r_in = DMatrix::zeros(ni, support.len());
        for (c, &i) in support.iter().enumerate() {
            r_in[(i, c)] = chi_mask[i];
        }
        Ok(InternalActuatorSet {
            cells: vec![omega],
            indicators: vec![],
            chi_mask,
            s_m: r_in.clone(),
            gs_r: DMatrix::identity(support.len(), support.len()),
            r_in,
        })
    }

    pub fn count(&self) -> usize {
        self.r_in.ncols()
    }

    /// Evaluation matrix of the projection `P_M = S_M S_M^T M_ii`.
    pub fn projector(&self, ops: &FemOperators) -> DMatrix<f64> {
        &self.s_m * (self.s_m.transpose() * ops.mass_ii_dense())
    }

    /// Coefficients w.r.t. the raw indicators of a control given in the
    /// orthonormal basis.
    pub fn raw_coefficients(&self, u: &DVector<f64>) -> DVector<f64> {
        self.gs_r
            .clone()
            .solve_upper_triangular(u)
            .unwrap_or_else(|| u.clone())
    }
}

/// One boundary actuator: `sin(freq * s)` on the arc `(theta0, theta1)`,
/// `s = (theta - theta0) / (theta1 - theta0)`, and zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub theta0: f64,
    pub theta1: f64,
    pub freq: u32,
}

impl Arc {
    /// With `scaled_pi` the argument is `freq * pi * s`, which vanishes at both ends.
    pub fn eval(&self, theta: f64, scaled_pi: bool) -> f64 {
        let len = self.theta1 - self.theta0;
        let rel = (theta - self.theta0).rem_euclid(2.0 * PI);
        if rel <= 0.0 || rel >= len {
            return 0.0;
        }
        let s = rel / len;
        let arg = self.freq as f64 * s * if scaled_pi { PI } else { 1.0 };
        arg.sin()
    }
}

/// State and input convention of the extended boundary system used for the
/// Riccati design.
///
/// `Consistent` uses the state `(z_i - Psi~_i kappa, kappa)` and input
/// `[-B_bar; I]`, which is what the discrete boundary dynamics give for the
/// particular extension. `Paper` uses the state `(z_i - B_bar kappa, kappa)`
/// and input `[B_bar; I]` as written in the source derivation, whose input
/// sign and `kappa` coupling disagree with the simulated dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryModel {
    #[default]
    Consistent,
    Paper,
}

#[derive(Debug, Clone)]
pub struct BoundaryActuatorSet {
    pub arcs: Vec<Arc>,
    pub scaled_pi: bool,
    pub varsigma: f64,
    pub nu: f64,
    /// Boundary traces `B^Gamma`: boundary nodes x M.
    pub traces: DMatrix<f64>,
    /// Extensions on all nodes: points x M.
    pub extensions: DMatrix<f64>,
    /// `Psi~_i + M_ii^{-1} M_ib Psi~_b`: interior nodes x M.
    pub b_bar: DMatrix<f64>,
    pub model: BoundaryModel,
    /// Input matrix of the extended system, `[+-B_bar; I_M]`.
    pub r_bo: DMatrix<f64>,
    /// Interior lift `E` in the extended state `(z_i - E kappa, kappa)`.
    pub lift: DMatrix<f64>,
}

impl BoundaryActuatorSet {
    /// `count` actuators with frequencies `1..=count` on one arc.
    pub fn standard(
        ops: &FemOperators,
        boundary_theta: &[f64],
        theta0: f64,
        theta1: f64,
        count: usize,
        varsigma: f64,
        nu: f64,
        scaled_pi: bool,
    ) -> Result<Self> {
        if !(0.0..2.0 * PI).contains(&theta0) || theta1 <= theta0 || theta1 > 2.0 * PI + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "arc ({theta0}, {theta1}) must satisfy 0 <= theta0 < theta1 <= 2 pi"
            )));
        }
        let arcs = (1..=count as u32)
            .map(|freq| Arc {
                theta0,
                theta1,
                freq,
            })
            .collect();
        Self::from_arcs(ops, boundary_theta, arcs, varsigma, nu, scaled_pi)
    }

    pub fn from_arcs(
        ops: &FemOperators,
        boundary_theta: &[f64],
        arcs: Vec<Arc>,
        varsigma: f64,
        nu: f64,
        scaled_pi: bool,
    ) -> Result<Self> {
        let m = arcs.len();
        if m == 0 {
            return Err(Error::InvalidArgument(
                "need at least one boundary actuator".into(),
            ));
        }
        if nu <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "viscosity nu = {nu} must be positive"
            )));
        }
        let nb = ops.n_boundary();
        if boundary_theta.len() != nb {
            return Err(Error::dim(format!(
                "{} boundary parameters for {nb} boundary nodes",
                boundary_theta.len()
            )));
        }
        let ni = ops.n_interior();
        let traces = DMatrix::from_fn(nb, m, |b, i| arcs[i].eval(boundary_theta[b], scaled_pi));
        // Too few boundary nodes on an arc make the traces dependent.
        let scale = traces.amax().max(f64::MIN_POSITIVE);
        for i in 0..m {
            let sv = traces.columns(0, i + 1).into_owned().singular_values();
            if sv.min() <= 1e-10 * scale {
                return Err(Error::RankDeficient(i));
            }
        }

        // (nu S_ii + sigma M_ii) Psi~_i = -(nu S_ib + sigma M_ib) Psi_b
        let a_ii = ops
            .stiffness
            .ii
            .lin_comb_same_pattern(nu, &ops.mass.ii, varsigma);
        let a_ib = ops
            .stiffness
            .ib
            .lin_comb_same_pattern(nu, &ops.mass.ib, varsigma);
        let mut extensions = DMatrix::zeros(ni + nb, m);
        let mut b_bar = DMatrix::zeros(ni, m);
        for i in 0..m {
            let psi_b = traces.column(i).into_owned();
            let rhs = -a_ib.mul_vec(&psi_b);
            let ext_i = cg(&a_ii, &rhs, None, CG_RTOL)?;
            let corr = cg(&ops.mass.ii, &ops.mass.ib.mul_vec(&psi_b), None, CG_RTOL)?;
            extensions.view_mut((0, i), (ni, 1)).copy_from(&ext_i);
            extensions.view_mut((ni, i), (nb, 1)).copy_from(&psi_b);
            b_bar.set_column(i, &(ext_i + corr));
        }
        let set = BoundaryActuatorSet {
            arcs,
            scaled_pi,
            varsigma,
            nu,
            traces,
            extensions,
            b_bar,
            model: BoundaryModel::Consistent,
            r_bo: DMatrix::zeros(0, 0),
            lift: DMatrix::zeros(0, 0),
        };
        Ok(set.with_model(BoundaryModel::Consistent))
    }

    pub fn with_model(mut self, model: BoundaryModel) -> Self {
        let (ni, m) = self.b_bar.shape();
        let (sign, lift) = match model {
            BoundaryModel::Consistent => (-1.0, self.extensions.rows(0, ni).into_owned()),
            BoundaryModel::Paper => (1.0, self.b_bar.clone()),
        };
        let mut r_bo = DMatrix::zeros(ni + m, m);
        r_bo.view_mut((0, 0), (ni, m))
            .copy_from(&(&self.b_bar * sign));
        r_bo.view_mut((ni, 0), (m, m)).fill_with_identity();
        self.model = model;
        self.r_bo = r_bo;
        self.lift = lift;
        self
    }

    pub fn count(&self) -> usize {
        self.arcs.len()
    }

    /// Interior block `[B_Psi~]_i` of the extensions.
    pub fn extensions_interior(&self) -> DMatrix<f64> {
        let ni = self.b_bar.nrows();
        self.extensions.rows(0, ni).into_owned()
    }
}
