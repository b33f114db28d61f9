//! Semilinear problem `y_t - nu Lap y + c3 y^3 + c2 y^2 + c1 y + 1/2 div(y^2, y^2) + f0 = 0`
//! with manufactured data, integrated by Crank-Nicolson with one of three
//! treatments of the nonlinear term, optionally under Riccati feedback acting
//! on the deviation from the reference trajectory.

use nalgebra::{DMatrix, DVector};

use crate::actuators::{BoundaryActuatorSet, InternalActuatorSet};
use crate::config::expr::{add, mul, neg, pow, sub};
use crate::config::{Expr, Var};
use crate::error::{Error, Result};
use crate::fem::{
    cg, lu_solve, spacetime_norm2, CoefficientField, CsrMatrix, FemOperators, CG_RTOL,
};
use crate::riccati::{boundary_feedback, RiccatiPath};
use crate::sim_linear::{check_compatibility, ControlSchedule, TimeGrid};

/// `f0 = -(y_t - nu Lap y + c3 y^3 + c2 y^2 + c1 y + 1/2 div(y^2, y^2))` and
/// `g = y` (to be restricted to the boundary), both symbolic.
pub fn manufactured_forcing(
    yhat: &Expr,
    nu: f64,
    c1: f64,
    c2: f64,
    c3: f64,
) -> Result<(Expr, Expr)> {
    let num = Expr::Num;
    let yt = yhat.differentiate(Var::T)?;
    let lap = add(
        yhat.differentiate(Var::X1)?.differentiate(Var::X1)?,
        yhat.differentiate(Var::X2)?.differentiate(Var::X2)?,
    );
    let sq = pow(yhat.clone(), 2);
    let conv = mul(
        num(0.5),
        add(sq.differentiate(Var::X1)?, sq.differentiate(Var::X2)?),
    );
    let reaction = add(
        add(mul(num(c3), pow(yhat.clone(), 3)), mul(num(c2), sq)),
        mul(num(c1), yhat.clone()),
    );
    let f0 = neg(add(add(sub(yt, mul(num(nu), lap)), reaction), conv));
    Ok((f0, yhat.clone()))
}

/// `M (c3 y^3 + c2 y^2 + c1 y) + 1/2 (G1 y^2 + G2 y^2)`, powers entrywise.
pub fn nonlinear_term(
    ops: &FemOperators,
    y: &DVector<f64>,
    c1: f64,
    c2: f64,
    c3: f64,
) -> DVector<f64> {
    let poly = y.map(|v| ((c3 * v + c2) * v + c1) * v);
    let sq = y.map(|v| v * v);
    let mut out = ops.mass.full.mul_vec(&poly);
    out.axpy(
        0.5,
        &(ops.g1.full.mul_vec(&sq) + ops.g2.full.mul_vec(&sq)),
        1.0,
    );
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearProblem {
    pub nu: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub yhat: Expr,
    f0: Expr,
}

impl NonlinearProblem {
    pub fn new(yhat: Expr, nu: f64, c1: f64, c2: f64, c3: f64) -> Result<NonlinearProblem> {
        if nu <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "viscosity nu = {nu} must be positive"
            )));
        }
        let (f0, _) = manufactured_forcing(&yhat, nu, c1, c2, c3)?;
        Ok(NonlinearProblem {
            nu,
            c1,
            c2,
            c3,
            yhat,
            f0,
        })
    }

    pub fn f0(&self) -> &Expr {
        &self.f0
    }

    /// Coefficients of the linearization around `yhat`:
    /// `a = 3 c3 yhat^2 + 2 c2 yhat + c1`, `b = (yhat, yhat)`.
    pub fn linearization(&self) -> CoefficientField {
        let y = &self.yhat;
        let a = add(
            add(
                mul(Expr::Num(3.0 * self.c3), pow(y.clone(), 2)),
                mul(Expr::Num(2.0 * self.c2), y.clone()),
            ),
            Expr::Num(self.c1),
        );
        CoefficientField::new(a, y.clone(), y.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Linear extrapolation of the nonlinear term; one CG solve per step.
    Extrapolation,
    /// Explicit Euler predictor for the nonlinear term.
    Heun,
    /// Newton iteration on the fully implicit Crank-Nicolson step.
    Newton,
}

/// Jacobian used by the Newton scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// `G_ii diag(w)` for the convection part.
    #[default]
    Exact,
    /// The convection part taken as `diag(G_ii w)`.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian: JacobianMode,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 50,
            jacobian: JacobianMode::Exact,
        }
    }
}

/// Feedback acting on the deviation from the reference trajectory.
pub enum NonlinearFeedback<'a> {
    Internal {
        set: &'a InternalActuatorSet,
        path: &'a RiccatiPath,
    },
    Boundary {
        set: &'a BoundaryActuatorSet,
        path: &'a RiccatiPath,
        kappa0: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct NonlinearTrajectory {
    pub grid: TimeGrid,
    /// Full nodal states, `s_p x (N_t + 1)`.
    pub y: DMatrix<f64>,
    pub kappa: Option<DMatrix<f64>>,
    /// `|y(t_j)|_H^2`.
    pub norms: Vec<f64>,
    /// `|y(t_j) - yhat(t_j)|_H^2`.
    pub deviation: Vec<f64>,
    /// Newton iterations per step (zeros for the other schemes).
    pub newton_iterations: Vec<usize>,
    /// `|F(w)|_inf` at each accepted Newton step.
    pub newton_residuals: Vec<f64>,
    pub blow_up: Option<usize>,
}

impl NonlinearTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn ensure_completed(&self) -> Result<()> {
        match self.blow_up {
            Some(j) => Err(Error::BlowUp(j)),
            None => Ok(()),
        }
    }

    /// Space-time norm of `y - yhat` over the grid.
    pub fn error_spacetime(&self) -> Result<f64> {
        Ok(spacetime_norm2(&self.deviation, self.grid.k())?.sqrt())
    }

    /// `e^{lambda t_j} |y - yhat|_H^2 / |y_0 - yhat_0|_H^2`.
    pub fn weighted_deviation(&self, lambda: f64) -> Vec<f64> {
        let d0 = self.deviation[0];
        self.deviation
            .iter()
            .enumerate()
            .map(|(j, d)| (lambda * self.grid.t(j)).exp() * d / d0)
            .collect()
    }

    pub fn mean_newton_iterations(&self) -> f64 {
        let n = self.newton_iterations.len().saturating_sub(1).max(1);
        self.newton_iterations[1..].iter().sum::<usize>() as f64 / n as f64
    }
}

/// Options of a nonlinear run.
#[derive(Debug, Clone)]
pub struct NonlinearRun {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    pub newton: NewtonOptions,
    pub schedule: ControlSchedule,
    /// Blow-up when `|y|_H^2 > blow_up_factor * max(|y_0|_H^2, 1)`.
    pub blow_up_factor: f64,
}

impl NonlinearRun {
    pub fn new(grid: TimeGrid, scheme: Scheme) -> NonlinearRun {
        NonlinearRun {
            grid,
            scheme,
            newton: NewtonOptions::default(),
            schedule: ControlSchedule::always(),
            blow_up_factor: 1e10,
        }
    }
}

struct Matrices {
    a_plus: CsrMatrix,
    a_minus: CsrMatrix,
    aib_plus: CsrMatrix,
    aib_minus: CsrMatrix,
    /// `M - k nu S`, interior rows.
    e_ii: CsrMatrix,
    e_ib: CsrMatrix,
}

/// Integrates the problem from the full nodal initial state `y0`. For
/// internal feedback and free runs the boundary values of `y0` are replaced
/// by the boundary data.
pub fn simulate_nonlinear(
    ops: &FemOperators,
    problem: &NonlinearProblem,
    run: &NonlinearRun,
    feedback: Option<&NonlinearFeedback<'_>>,
    y0: &DVector<f64>,
) -> Result<NonlinearTrajectory> {
    let (ni, np, nb) = (ops.n_interior(), ops.n_points(), ops.n_boundary());
    if y0.len() != np {
        return Err(Error::dim(format!(
            "initial state has length {}, expected {np}",
            y0.len()
        )));
    }
    let grid = run.grid;
    let (k, n_t, nu) = (grid.k(), grid.n_t, problem.nu);
    let (c1, c2, c3) = (problem.c1, problem.c2, problem.c3);
    let kn = k * nu;
    let (m, s) = (&ops.mass, &ops.stiffness);
    let mats = Matrices {
        a_plus: m.ii.lin_comb_same_pattern(2.0, &s.ii, kn),
        a_minus: m.ii.lin_comb_same_pattern(2.0, &s.ii, -kn),
        aib_plus: m.ib.lin_comb_same_pattern(2.0, &s.ib, kn),
        aib_minus: m.ib.lin_comb_same_pattern(2.0, &s.ib, -kn),
        e_ii: m.ii.lin_comb_same_pattern(1.0, &s.ii, -kn),
        e_ib: m.ib.lin_comb_same_pattern(1.0, &s.ib, -kn),
    };

    let yhat_at = |j: usize| ops.eval(&problem.yhat, grid.t(j));
    let f0_at = |j: usize| ops.eval(problem.f0(), grid.t(j));
    let n_of = |y: &DVector<f64>| -> DVector<f64> {
        nonlinear_term(ops, y, c1, c2, c3).rows(0, ni).into_owned()
    };
    let mass_rows = |f: &DVector<f64>| -> DVector<f64> {
        m.ii.mul_vec(&f.rows(0, ni).into_owned()) + m.ib.mul_vec(&f.rows(ni, nb).into_owned())
    };

    let (m_ctrl, boundary_set) = match feedback {
        None => (0, None),
        Some(NonlinearFeedback::Internal { set, path }) => {
            if path.n_t() != n_t || path.dim() != ni {
                return Err(Error::dim("feedback path does not match the grid or mesh"));
            }
            (set.count(), None)
        }
        Some(NonlinearFeedback::Boundary { set, path, kappa0 }) => {
            let m = set.count();
            if path.n_t() != n_t || path.dim() != ni + m || kappa0.len() != m {
                return Err(Error::dim(
                    "feedback path does not match the grid, mesh or actuators",
                ));
            }
            (m, Some(*set))
        }
    };

    // Initial state and boundary data.
    let yhat0 = yhat_at(0);
    let mut kappa = match feedback {
        Some(NonlinearFeedback::Boundary { kappa0, .. }) => kappa0.clone(),
        _ => DVector::zeros(m_ctrl),
    };
    let lift = |kappa: &DVector<f64>| -> DVector<f64> {
        match boundary_set {
            Some(set) => &set.traces * kappa,
            None => DVector::zeros(nb),
        }
    };
    let mut y = y0.clone();
    if let Some(set) = boundary_set {
        check_compatibility(ops, set, &(y0 - &yhat0), &kappa)?;
    } else {
        y.rows_mut(ni, nb).copy_from(&yhat0.rows(ni, nb));
    }

    let mut out_y = DMatrix::zeros(np, n_t + 1);
    let mut out_kappa = DMatrix::zeros(m_ctrl, n_t + 1);
    let mut norms = vec![0.0; n_t + 1];
    let mut deviation = vec![0.0; n_t + 1];
    let mut newton_iterations = vec![0; n_t + 1];
    let mut newton_residuals = vec![0.0; n_t + 1];
    out_y.set_column(0, &y);
    out_kappa.set_column(0, &kappa);
    norms[0] = ops.norm_h2(&y);
    deviation[0] = ops.norm_h2(&(&y - &yhat0));
    let threshold = run.blow_up_factor * norms[0].max(1.0);

    // Feedback contributions: internal F^j d^j (interior vector) or boundary
    // F_b^j [d_i^j; kappa^j] (M vector).
    let feedback_at =
        |j: usize, d_i: &DVector<f64>, kappa: &DVector<f64>| -> Option<DVector<f64>> {
            match feedback? {
                NonlinearFeedback::Internal { set, path } => {
                    Some(&set.r_in * (set.r_in.transpose() * (path.at(j) * d_i)))
                }
                NonlinearFeedback::Boundary { set, path, .. } => {
                    let f = boundary_feedback(path.at(j), &set.r_bo, &set.lift);
                    Some(f.columns(0, ni) * d_i + f.columns(ni, m_ctrl) * kappa)
                }
            }
        };

    let mut yhat_j = yhat0;
    let mut f0_j = f0_at(0);
    let mut n_j = n_of(&y);
    let mut n_prev = n_j.clone();
    let mut fb_prev = feedback_at(0, &(&y - &yhat_j).rows(0, ni).into_owned(), &kappa);
    let mut blow_up = None;

    for j in 0..n_t {
        let yhat_next = yhat_at(j + 1);
        let f0_next = f0_at(j + 1);
        let yi = y.rows(0, ni).into_owned();
        let g_j = y.rows(ni, nb).into_owned();
        let d_i = &yi - yhat_j.rows(0, ni);
        let fb_j = if j == 0 {
            fb_prev.clone()
        } else {
            feedback_at(j, &d_i, &kappa)
        };
        let on = run.schedule.is_on_step(j, k);

        // Boundary coefficients first; they fix the boundary data at t_{j+1}.
        let mut g_next = yhat_next.rows(ni, nb).into_owned();
        if let Some(set) = boundary_set {
            let mut rhs = &kappa * (2.0 - k * set.varsigma);
            if let (true, Some(f), Some(fp)) = (on, &fb_j, &fb_prev) {
                rhs.axpy(-k, &(f * 3.0 - fp), 1.0);
            }
            kappa = rhs / (2.0 + k * set.varsigma);
            g_next += lift(&kappa);
        }

        // Terms common to all schemes.
        let mut common = mats.a_minus.mul_vec(&yi);
        common -= mats.aib_plus.mul_vec(&g_next);
        common += mats.aib_minus.mul_vec(&g_j);
        common.axpy(-k, &mass_rows(&(&f0_next + &f0_j)), 1.0);
        let mut fb_force = DVector::zeros(ni);
        if boundary_set.is_none() {
            if let (true, Some(f), Some(fp)) = (on, &fb_j, &fb_prev) {
                fb_force = m.ii.mul_vec(&(f * 3.0 - fp)) * k;
            }
        }
        common -= &fb_force;

        let euler_guess = || -> Result<DVector<f64>> {
            let mut rhs = mats.e_ii.mul_vec(&yi) + mats.e_ib.mul_vec(&g_j) - m.ib.mul_vec(&g_next);
            rhs.axpy(-k, &mass_rows(&f0_j), 1.0);
            rhs.axpy(-k, &n_j, 1.0);
            if boundary_set.is_none() {
                if let (true, Some(f)) = (on, &fb_j) {
                    rhs.axpy(-k, &m.ii.mul_vec(f), 1.0);
                }
            }
            cg(&m.ii, &rhs, Some(&yi), CG_RTOL)
        };

        let yi_next = match run.scheme {
            Scheme::Extrapolation => {
                let mut rhs = common;
                rhs.axpy(-k, &(&n_j * 3.0 - &n_prev), 1.0);
                cg(&mats.a_plus, &rhs, Some(&yi), CG_RTOL)?
            }
            Scheme::Heun => {
                let guess = euler_guess()?;
                let y_g = ops.join(&guess, &g_next);
                let mut rhs = common;
                rhs.axpy(-k, &(n_of(&y_g) + &n_j), 1.0);
                if guess.iter().all(|v| v.is_finite()) {
                    cg(&mats.a_plus, &rhs, Some(&yi), CG_RTOL)?
                } else {
                    DVector::from_element(ni, f64::NAN)
                }
            }
            Scheme::Newton => {
                let mut h = common;
                h.axpy(-k, &n_j, 1.0);
                let w0 = euler_guess()?;
                let (w, its, res) = newton_solve(
                    ops,
                    problem,
                    &mats.a_plus,
                    &h,
                    &g_next,
                    w0,
                    k,
                    &run.newton,
                    j + 1,
                )?;
                newton_iterations[j + 1] = its;
                newton_residuals[j + 1] = res;
                w
            }
        };

        y = ops.join(&yi_next, &g_next);
        n_prev = n_j;
        n_j = n_of(&y);
        fb_prev = fb_j;
        yhat_j = yhat_next;
        f0_j = f0_next;

        let norm = ops.norm_h2(&y);
        if !norm.is_finite() || norm > threshold || kappa.iter().any(|v| !v.is_finite()) {
            blow_up = Some(j + 1);
            for c in j + 1..=n_t {
                out_y.column_mut(c).fill(f64::NAN);
                out_kappa.column_mut(c).fill(f64::NAN);
                norms[c] = f64::INFINITY;
                deviation[c] = f64::INFINITY;
            }
            break;
        }
        out_y.set_column(j + 1, &y);
        out_kappa.set_column(j + 1, &kappa);
        norms[j + 1] = norm;
        deviation[j + 1] = ops.norm_h2(&(&y - &yhat_j));
    }
    Ok(NonlinearTrajectory {
        grid,
        y: out_y,
        kappa: boundary_set.map(|_| out_kappa),
        norms,
        deviation,
        newton_iterations,
        newton_residuals,
        blow_up,
    })
}

/// Solves `F(w) = -A+ w - k N([w; g])_i + h = 0`. Returns the iterate, the
/// iteration count and `|F|_inf` at the returned iterate.
#[allow(clippy::too_many_arguments)]
fn newton_solve(
    ops: &FemOperators,
    problem: &NonlinearProblem,
    a_plus: &CsrMatrix,
    h: &DVector<f64>,
    g: &DVector<f64>,
    mut w: DVector<f64>,
    k: f64,
    opts: &NewtonOptions,
    step: usize,
) -> Result<(DVector<f64>, usize, f64)> {
    let ni = ops.n_interior();
    let (c1, c2, c3) = (problem.c1, problem.c2, problem.c3);
    let residual = |w: &DVector<f64>| -> DVector<f64> {
        let full = ops.join(w, g);
        let n = nonlinear_term(ops, &full, c1, c2, c3);
        -a_plus.mul_vec(w) - n.rows(0, ni) * k + h
    };
    let mut f = residual(&w);
    for it in 1..=opts.max_iter {
        if w.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NewtonDivergence(step));
        }
        let dphi = w.map(|v| (3.0 * c3 * v + 2.0 * c2) * v + c1);
        let jac = match opts.jacobian {
            JacobianMode::Exact => {
                ops.mass
                    .ii
                    .combine3(&ops.g1.ii, &ops.g2.ii, |_, j, m, g1, g2| {
                        m * dphi[j] + (g1 + g2) * w[j]
                    })
            }
            JacobianMode::Verbatim => {
                let gw = ops.g1.ii.mul_vec(&w) + ops.g2.ii.mul_vec(&w);
                ops.mass
                    .ii
                    .combine3(&ops.g1.ii, &ops.g2.ii, |i, j, m, _, _| {
                        m * dphi[j] + if i == j { gw[i] } else { 0.0 }
                    })
            }
        };
        // dF = -A+ - k J_N
        let df = a_plus.lin_comb_same_pattern(-1.0, &jac, -k);
        let delta = lu_solve(df.to_dense(), &f)?;
        let w_next = &w - &delta;
        let step_inf = delta.amax();
        let w_inf = w.amax();
        f = residual(&w_next);
        w = w_next;
        let f_inf = f.amax();
        if step_inf < opts.tol || (w_inf > 0.0 && step_inf / w_inf < opts.tol) || f_inf < opts.tol {
            return Ok((w, it, f_inf));
        }
    }
    let f_inf = f.amax();
    let scale = h.amax().max(1.0);
    if f_inf.is_finite() && f_inf <= 1e-6 * scale {
        log::warn!("Newton hit the iteration cap at step {step} with |F| = {f_inf:e}; accepting");
        Ok((w, opts.max_iter, f_inf))
    } else {
        Err(Error::NewtonDivergence(step))
    }
}
