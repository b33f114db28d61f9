//! Closed-loop Crank-Nicolson simulation of the linearized systems with
//! internal or boundary actuators, control schedules and open-loop replay.
//!
//! The simulated state is the `lambda`-shifted one, `z_lambda = e^{lambda t / 2} z`;
//! time-dependent terms are linearly extrapolated, with a ghost step at `t = -k`
//! equal to the `t = 0` value.

use nalgebra::{DMatrix, DVector};

use crate::actuators::{BoundaryActuatorSet, InternalActuatorSet};
use crate::error::{Error, Result};
use crate::fem::{cg, Block, CoefficientField, CsrMatrix, FemOperators, CG_RTOL};
use crate::riccati::{boundary_feedback, RiccatiPath};

/// Uniform grid `t_j = j T / N_t`, `j = 0..=N_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_t: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_t: usize) -> Result<TimeGrid> {
        if !(t_final > 0.0) || n_t == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid T = {t_final}, N_t = {n_t}"
            )));
        }
        Ok(TimeGrid { t_final, n_t })
    }

    pub fn k(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.k()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|j| self.t(j)).collect()
    }
}

/// Time intervals `[a, b)` during which feedback is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    on: Vec<(f64, f64)>,
}

impl ControlSchedule {
    pub fn always() -> ControlSchedule {
        ControlSchedule {
            on: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn never() -> ControlSchedule {
        ControlSchedule { on: vec![] }
    }

    /// Intervals must be nonempty, sorted and pairwise disjoint.
    pub fn new(on: Vec<(f64, f64)>) -> Result<ControlSchedule> {
        for (i, &(a, b)) in on.iter().enumerate() {
            if !(a < b) {
                return Err(Error::InvalidArgument(format!(
                    "schedule interval [{a}, {b}) is empty"
                )));
            }
            if i > 0 && a < on[i - 1].1 {
                return Err(Error::InvalidArgument(format!(
                    "schedule intervals must be sorted and disjoint, [{a}, {b}) overlaps its predecessor"
                )));
            }
        }
        Ok(ControlSchedule { on })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.on
    }

    pub fn is_on(&self, t: f64) -> bool {
        self.on.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Whether feedback acts on the step `t_j -> t_{j+1}` (midpoint rule).
    pub fn is_on_step(&self, j: usize, k: f64) -> bool {
        self.is_on((j as f64 + 0.5) * k)
    }
}

/// Nodal solution history of a simulation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub lambda: f64,
    pub n_interior: usize,
    /// `s_p x (N_t + 1)`, solver node order, shifted state.
    pub z: DMatrix<f64>,
    /// Boundary coefficients, `M x (N_t + 1)` (boundary runs only).
    pub kappa: Option<DMatrix<f64>>,
    /// `|z_lambda(t_j)|_H^2`.
    pub norms: Vec<f64>,
    /// Feedback inputs per node, `M x (N_t + 1)`: actuator coefficients in the
    /// orthonormal basis (internal) or `d/dt kappa` inputs (boundary).
    pub controls: DMatrix<f64>,
    /// Internal runs: control coefficients w.r.t. the raw indicators.
    pub raw_controls: Option<DMatrix<f64>>,
    /// First time index whose state was non-finite, if any.
    pub blow_up: Option<usize>,
}

impl Trajectory {
    pub fn k(&self) -> f64 {
        self.grid.k()
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    /// `|z(t_j)|_H^2` of the unshifted state.
    pub fn norm_h2(&self) -> Vec<f64> {
        self.norms
            .iter()
            .enumerate()
            .map(|(j, n)| (-self.lambda * self.grid.t(j)).exp() * n)
            .collect()
    }

    /// `e^{lambda t_j} |z(t_j)|_H^2 = |z_lambda(t_j)|_H^2`.
    pub fn weighted_norm_h2(&self) -> &[f64] {
        &self.norms
    }

    /// `sup_j |z_lambda(t_j)|_H^2 / |z(0)|_H^2`; infinite after a blow-up.
    pub fn weighted_sup(&self) -> f64 {
        if self.blow_up.is_some() {
            return f64::INFINITY;
        }
        let n0 = self.norms[0];
        self.norms.iter().fold(0.0_f64, |m, &v| m.max(v / n0))
    }

    pub fn is_finite(&self) -> bool {
        self.blow_up.is_none()
    }

    /// Converts a blow-up into an error.
    pub fn ensure_completed(&self) -> Result<()> {
        match self.blow_up {
            Some(j) => Err(Error::BlowUp(j)),
            None => Ok(()),
        }
    }

    /// Interior part of node `j`.
    pub fn interior(&self, j: usize) -> DVector<f64> {
        self.z.column(j).rows(0, self.n_interior).into_owned()
    }

    /// Boundary rows at node `j`.
    pub fn boundary(&self, j: usize) -> DVector<f64> {
        let nb = self.z.nrows() - self.n_interior;
        self.z.column(j).rows(self.n_interior, nb).into_owned()
    }
}

/// Data shared by every linear run.
#[derive(Clone)]
pub struct LinearSetup<'a> {
    pub ops: &'a FemOperators,
    pub coeff: &'a CoefficientField,
    pub nu: f64,
    pub lambda: f64,
    pub grid: TimeGrid,
}

/// `L_{lambda}` blocks at a time instant.
struct Operators {
    ii: CsrMatrix,
    ib: CsrMatrix,
}

impl<'a> LinearSetup<'a> {
    fn l_blocks(&self, t: f64) -> Operators {
        let (mut a, b1, b2) = self.coeff.nodal(self.ops, t);
        a.add_scalar_mut(-0.5 * self.lambda);
        Operators {
            ii: self.ops.reaction_convection(&a, &b1, &b2, Block::II),
            ib: self.ops.reaction_convection(&a, &b1, &b2, Block::IB),
        }
    }

    /// Operator blocks on the grid, reusing one copy when coefficients are
    /// time independent.
    fn l_at(&self) -> impl Fn(usize) -> std::rc::Rc<Operators> + '_ {
        let stationary = self
            .coeff
            .is_stationary()
            .then(|| std::rc::Rc::new(self.l_blocks(0.0)));
        let cache: std::cell::RefCell<Option<(usize, std::rc::Rc<Operators>)>> = Default::default();
        move |j| {
            if let Some(s) = &stationary {
                return s.clone();
            }
            if let Some((cj, op)) = &*cache.borrow() {
                if *cj == j {
                    return op.clone();
                }
            }
            let op = std::rc::Rc::new(self.l_blocks(self.grid.t(j)));
            *cache.borrow_mut() = Some((j, op.clone()));
            op
        }
    }

    fn a_plus_minus(&self) -> (CsrMatrix, CsrMatrix, CsrMatrix, CsrMatrix) {
        let (m, s) = (&self.ops.mass, &self.ops.stiffness);
        let kn = self.grid.k() * self.nu;
        (
            m.ii.lin_comb_same_pattern(2.0, &s.ii, kn),
            m.ii.lin_comb_same_pattern(2.0, &s.ii, -kn),
            m.ib.lin_comb_same_pattern(2.0, &s.ib, kn),
            m.ib.lin_comb_same_pattern(2.0, &s.ib, -kn),
        )
    }

    fn check_path(&self, path: &RiccatiPath, n: usize) -> Result<()> {
        if path.n_t() != self.grid.n_t || path.dim() != n {
            return Err(Error::dim(format!(
                "feedback path has N_t = {} and size {}, expected N_t = {} and size {n}",
                path.n_t(),
                path.dim(),
                self.grid.n_t
            )));
        }
        Ok(())
    }
}

fn check_len(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn mark_blow_up(z: &mut DMatrix<f64>, norms: &mut [f64], from: usize) {
    for j in from..z.ncols() {
        z.column_mut(j).fill(f64::NAN);
        norms[j] = f64::INFINITY;
    }
}

/// Internal actuators with feedback `u = -R^T Pi z`.
pub struct InternalFeedback<'a> {
    pub set: &'a InternalActuatorSet,
    pub path: &'a RiccatiPath,
    pub schedule: ControlSchedule,
}

/// Closed-loop (or free, with `feedback = None`) internal run.
///
/// `z0` is a full nodal vector; its boundary values must vanish.
pub fn simulate_internal(
    setup: &LinearSetup<'_>,
    feedback: Option<&InternalFeedback<'_>>,
    z0: &DVector<f64>,
) -> Result<Trajectory> {
    let ops = setup.ops;
    let (ni, np) = (ops.n_interior(), ops.n_points());
    check_len(z0, np, "initial condition")?;
    let trace = ops.boundary(z0).amax();
    if trace > 1e-12 * z0.amax().max(1.0) {
        return Err(Error::CompatibilityViolation(trace));
    }
    if let Some(fb) = feedback {
        setup.check_path(fb.path, ni)?;
        if fb.set.r_in.nrows() != ni {
            return Err(Error::dim("actuator set built on a different mesh"));
        }
    }
    let grid = setup.grid;
    let (k, n_t) = (grid.k(), grid.n_t);
    let n_ctrl = feedback.map_or(0, |f| f.set.count());
    let (a_plus, a_minus, _, _) = setup.a_plus_minus();
    let l_at = setup.l_at();

    let mut z = DMatrix::zeros(np, n_t + 1);
    let mut norms = vec![0.0; n_t + 1];
    let mut controls = DMatrix::zeros(n_ctrl, n_t + 1);
    let mut zi = ops.interior(z0);
    z.set_column(0, z0);
    norms[0] = ops.norm_h2_interior(&zi);

    // u^j = R^T Pi^j z^j and F^j z^j = R u^j.
    let feedback_at = |j: usize, zi: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        feedback.map(|fb| {
            let u = fb.set.r_in.transpose() * (fb.path.at(j) * zi);
            let fz = &fb.set.r_in * &u;
            (u, fz)
        })
    };

    let mut lz_prev = l_at(0).ii.mul_vec(&zi);
    let mut fz_prev = feedback_at(0, &zi);
    let mut blow_up = None;
    for j in 0..n_t {
        let lz = l_at(j).ii.mul_vec(&zi);
        let fz = if j == 0 {
            fz_prev.clone()
        } else {
            feedback_at(j, &zi)
        };
        if let Some((u, _)) = &fz {
            controls.set_column(j, &(-u));
        }
        let mut rhs = a_minus.mul_vec(&zi);
        rhs.axpy(-k, &(&lz * 3.0 - &lz_prev), 1.0);
        if let (Some(fb), Some((_, f)), Some((_, fp))) = (feedback, &fz, &fz_prev) {
            if fb.schedule.is_on_step(j, k) {
                let ext = f * 3.0 - fp;
                rhs.axpy(-k, &ops.mass.ii.mul_vec(&ext), 1.0);
            }
        }
        let next = cg(&a_plus, &rhs, Some(&zi), CG_RTOL)?;
        lz_prev = lz;
        fz_prev = fz;
        zi = next;
        let n = ops.norm_h2_interior(&zi);
        if !n.is_finite() || zi.iter().any(|v| !v.is_finite()) {
            blow_up = Some(j + 1);
            mark_blow_up(&mut z, &mut norms, j + 1);
            break;
        }
        z.view_mut((0, j + 1), (ni, 1)).copy_from(&zi);
        norms[j + 1] = n;
    }
    if blow_up.is_none() {
        if let Some((u, _)) = feedback_at(n_t, &zi) {
            controls.set_column(n_t, &(-u));
        }
    }
    let raw_controls = feedback
        .filter(|fb| !fb.set.indicators.is_empty())
        .map(|fb| {
            let mut raw = controls.clone();
            for j in 0..=n_t {
                raw.set_column(
                    j,
                    &fb.set.raw_coefficients(&controls.column(j).into_owned()),
                );
            }
            raw
        });
    Ok(Trajectory {
        grid,
        lambda: setup.lambda,
        n_interior: ni,
        z,
        kappa: None,
        norms,
        controls,
        raw_controls,
        blow_up,
    })
}

/// Boundary feedback through the extended system `(z, kappa)`.
pub struct BoundaryFeedback<'a> {
    pub path: &'a RiccatiPath,
    pub schedule: ControlSchedule,
}

/// Closed-loop (or free) boundary run. The trace of `z0` must equal
/// `B^Gamma kappa0`.
pub fn simulate_boundary(
    setup: &LinearSetup<'_>,
    set: &BoundaryActuatorSet,
    feedback: Option<&BoundaryFeedback<'_>>,
    z0: &DVector<f64>,
    kappa0: &DVector<f64>,
) -> Result<Trajectory> {
    boundary_run(setup, set, BoundaryInput::Feedback(feedback), z0, kappa0)
}

/// Integrates the boundary system with a prescribed coefficient history
/// `kappa` (`M x (N_t + 1)`), without evaluating any feedback.
pub fn replay_open_loop(
    setup: &LinearSetup<'_>,
    set: &BoundaryActuatorSet,
    kappa: &DMatrix<f64>,
    z0: &DVector<f64>,
) -> Result<Trajectory> {
    if kappa.shape() != (set.count(), setup.grid.n_t + 1) {
        return Err(Error::dim(format!(
            "kappa history is {:?}, expected ({}, {})",
            kappa.shape(),
            set.count(),
            setup.grid.n_t + 1
        )));
    }
    let kappa0 = kappa.column(0).into_owned();
    boundary_run(setup, set, BoundaryInput::Prescribed(kappa), z0, &kappa0)
}

enum BoundaryInput<'a, 'b> {
    Feedback(Option<&'b BoundaryFeedback<'a>>),
    Prescribed(&'b DMatrix<f64>),
}

/// Checks `max |z0_b - B^Gamma kappa0| <= 1e-10 max(1, |z0|_inf)`.
pub(crate) fn check_compatibility(
    ops: &FemOperators,
    set: &BoundaryActuatorSet,
    z0: &DVector<f64>,
    kappa0: &DVector<f64>,
) -> Result<()> {
    let gap = (ops.boundary(z0) - &set.traces * kappa0).amax();
    if gap > 1e-10 * z0.amax().max(1.0) {
        return Err(Error::CompatibilityViolation(gap));
    }
    Ok(())
}

fn boundary_run(
    setup: &LinearSetup<'_>,
    set: &BoundaryActuatorSet,
    input: BoundaryInput<'_, '_>,
    z0: &DVector<f64>,
    kappa0: &DVector<f64>,
) -> Result<Trajectory> {
    let ops = setup.ops;
    let (ni, np, m) = (ops.n_interior(), ops.n_points(), set.count());
    check_len(z0, np, "initial condition")?;
    check_len(kappa0, m, "initial boundary coefficients")?;
    if set.traces.nrows() != ops.n_boundary() {
        return Err(Error::dim("actuator set built on a different mesh"));
    }
    check_compatibility(ops, set, z0, kappa0)?;
    let feedback = match &input {
        BoundaryInput::Feedback(f) => *f,
        BoundaryInput::Prescribed(_) => None,
    };
    if let Some(fb) = feedback {
        setup.check_path(fb.path, ni + m)?;
    }
    let grid = setup.grid;
    let (k, n_t) = (grid.k(), grid.n_t);
    let sigma_l = set.varsigma - 0.5 * setup.lambda;
    let (a_plus, a_minus, aib_plus, aib_minus) = setup.a_plus_minus();
    let l_at = setup.l_at();

    let mut z = DMatrix::zeros(np, n_t + 1);
    let mut kap = DMatrix::zeros(m, n_t + 1);
    let mut norms = vec![0.0; n_t + 1];
    let mut controls = DMatrix::zeros(m, n_t + 1);
    let mut zi = ops.interior(z0);
    let mut kappa = kappa0.clone();
    z.set_column(0, z0);
    kap.set_column(0, &kappa);
    norms[0] = ops.norm_h2(z0);

    // F_b^j [z_i; kappa].
    let fb_at = |j: usize, zi: &DVector<f64>, kappa: &DVector<f64>| -> Option<DVector<f64>> {
        feedback.map(|fb| {
            let f = boundary_feedback(fb.path.at(j), &set.r_bo, &set.lift);
            f.columns(0, ni) * zi + f.columns(ni, m) * kappa
        })
    };

    let mut zb = &set.traces * &kappa;
    let mut lz_prev = l_at(0).ii.mul_vec(&zi);
    let mut fb_prev = fb_at(0, &zi, &kappa);
    let mut blow_up = None;
    for j in 0..n_t {
        let fb_j = if j == 0 {
            fb_prev.clone()
        } else {
            fb_at(j, &zi, &kappa)
        };
        if let Some(f) = &fb_j {
            controls.set_column(j, &(-f));
        }
        let kappa_next = match &input {
            BoundaryInput::Prescribed(hist) => hist.column(j + 1).into_owned(),
            BoundaryInput::Feedback(_) => {
                let mut rhs = &kappa * (2.0 - k * sigma_l);
                if let (Some(fb), Some(f), Some(fp)) = (feedback, &fb_j, &fb_prev) {
                    if fb.schedule.is_on_step(j, k) {
                        rhs.axpy(-k, &(f * 3.0 - fp), 1.0);
                    }
                }
                rhs / (2.0 + k * sigma_l)
            }
        };
        let zb_next = &set.traces * &kappa_next;

        let l_j = l_at(j);
        let lz = l_j.ii.mul_vec(&zi);
        let mut rhs = a_minus.mul_vec(&zi);
        let l_next = l_at(j + 1);
        let lift_next = aib_plus
            .lin_comb_same_pattern(1.0, &l_next.ib, k)
            .mul_vec(&zb_next);
        let lift_now = aib_minus
            .lin_comb_same_pattern(1.0, &l_j.ib, -k)
            .mul_vec(&zb);
        rhs -= lift_next;
        rhs += lift_now;
        rhs.axpy(-3.0 * k, &lz, 1.0);
        rhs.axpy(k, &lz_prev, 1.0);
        let next = cg(&a_plus, &rhs, Some(&zi), CG_RTOL)?;

        lz_prev = lz;
        fb_prev = fb_j;
        zi = next;
        kappa = kappa_next;
        zb = zb_next;
        let full = ops.join(&zi, &zb);
        let n = ops.norm_h2(&full);
        if !n.is_finite() || full.iter().chain(kappa.iter()).any(|v| !v.is_finite()) {
            blow_up = Some(j + 1);
            mark_blow_up(&mut z, &mut norms, j + 1);
            for c in j + 1..=n_t {
                kap.column_mut(c).fill(f64::NAN);
            }
            break;
        }
        z.set_column(j + 1, &full);
        kap.set_column(j + 1, &kappa);
        norms[j + 1] = n;
    }
    if blow_up.is_none() {
        if let Some(f) = fb_at(n_t, &zi, &kappa) {
            controls.set_column(n_t, &(-f));
        }
    }
    Ok(Trajectory {
        grid,
        lambda: setup.lambda,
        n_interior: ni,
        z,
        kappa: Some(kap),
        norms,
        controls,
        raw_controls: None,
        blow_up,
    })
}
