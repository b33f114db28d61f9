//! Post-processing: decay metrics, the transient-bound probe `m_lambda`,
//! Riccati costs along trajectories and convergence ratios.

use nalgebra::DVector;

use crate::actuators::BoundaryActuatorSet;
use crate::error::{Error, Result};
use crate::riccati::RiccatiPath;
use crate::sim_linear::Trajectory;

/// Default ceiling on the weighted sup for a run to count as stabilized.
pub const DECAY_CEILING: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayMetrics {
    /// `sup_j e^{lambda t_j} |z_j|^2 / |z_0|^2`, infinite after a blow-up.
    pub weighted_sup: f64,
    /// Same ratio at the final node.
    pub final_ratio: f64,
    pub stabilized: bool,
}

/// Decay metrics from unshifted squared norms `|z(t_j)|_H^2`.
pub fn decay_metrics_series(
    norms_h2: &[f64],
    times: &[f64],
    lambda: f64,
    ceiling: f64,
) -> Result<DecayMetrics> {
    if norms_h2.len() != times.len() || norms_h2.is_empty() {
        return Err(Error::dim("norm series and time nodes differ in length"));
    }
    let n0 = norms_h2[0];
    if !(n0 > 0.0) {
        return Err(Error::ZeroInitialNorm);
    }
    let mut sup = 0.0_f64;
    let mut finite = true;
    for (n, t) in norms_h2.iter().zip(times) {
        let w = (lambda * t).exp() * n / n0;
        if !w.is_finite() {
            finite = false;
            sup = f64::INFINITY;
        } else {
            sup = sup.max(w);
        }
    }
    let last = norms_h2.len() - 1;
    let final_ratio = (lambda * times[last]).exp() * norms_h2[last] / n0;
    let final_ratio = if final_ratio.is_finite() {
        final_ratio
    } else {
        f64::INFINITY
    };
    Ok(DecayMetrics {
        weighted_sup: sup,
        final_ratio,
        stabilized: finite && sup <= ceiling,
    })
}

pub fn decay_metrics(traj: &Trajectory, lambda: f64, ceiling: f64) -> Result<DecayMetrics> {
    let mut m = decay_metrics_series(&traj.norm_h2(), &traj.times(), lambda, ceiling)?;
    if traj.blow_up.is_some() {
        m.weighted_sup = f64::INFINITY;
        m.final_ratio = f64::INFINITY;
        m.stabilized = false;
    }
    Ok(m)
}

/// `max_{i <= j} (r_j - r_i)` with `r_j = lambda t_j + log(|z_j|^2 / |z_0|^2)`,
/// from unshifted squared norms on the grid `t_j = j k`.
pub fn m_lambda(norms_h2: &[f64], lambda: f64, k: f64) -> Result<f64> {
    if norms_h2.is_empty() {
        return Err(Error::dim("empty norm series"));
    }
    if let Some((index, &value)) = norms_h2
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
    {
        return Err(Error::NonPositiveEntry { index, value });
    }
    let log0 = norms_h2[0].ln();
    let mut min_prefix = f64::INFINITY;
    let mut best = 0.0_f64;
    for (j, n) in norms_h2.iter().enumerate() {
        let r = lambda * j as f64 * k + (n.ln() - log0);
        min_prefix = min_prefix.min(r);
        best = best.max(r - min_prefix);
    }
    Ok(best)
}

/// `zeta^T Pi^j zeta` per node, where `zeta` is the Riccati state: the interior
/// part for internal runs, `[z_i - E kappa; kappa]` for boundary runs.
pub fn cost_series(
    path: &RiccatiPath,
    traj: &Trajectory,
    boundary: Option<&BoundaryActuatorSet>,
) -> Result<Vec<f64>> {
    let n_t = traj.grid.n_t;
    if path.n_t() != n_t {
        return Err(Error::dim(format!(
            "path has {} steps, trajectory {n_t}",
            path.n_t()
        )));
    }
    let ni = traj.n_interior;
    let expected = ni + boundary.map_or(0, |s| s.count());
    if path.dim() != expected {
        return Err(Error::dim(format!(
            "path dimension {} but state dimension {expected}",
            path.dim()
        )));
    }
    let state = |j: usize| -> Result<DVector<f64>> {
        let zi = traj.interior(j);
        match boundary {
            None => Ok(zi),
            Some(set) => {
                let kappa = traj
                    .kappa
                    .as_ref()
                    .ok_or_else(|| Error::dim("boundary cost needs a boundary trajectory"))?
                    .column(j)
                    .into_owned();
                let mut zeta = DVector::zeros(expected);
                zeta.rows_mut(0, ni).copy_from(&(zi - &set.lift * &kappa));
                zeta.rows_mut(ni, set.count()).copy_from(&kappa);
                Ok(zeta)
            }
        }
    };
    (0..=n_t)
        .map(|j| {
            let zeta = state(j)?;
            Ok(zeta.dot(&(path.at(j) * &zeta)))
        })
        .collect()
}

/// `errors[i] / errors[i + 1]`.
pub fn convergence_ratios(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::dim("need at least two errors"));
    }
    if let Some((index, &value)) = errors.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveEntry { index, value });
    }
    Ok(errors.windows(2).map(|w| w[0] / w[1]).collect())
}

/// Bisection for the boundary of a stable region: `stable(good)` holds and
/// `stable(bad)` fails. Returns the last stable value once the bracket is
/// narrower than `tol`.
pub fn bisect_threshold(
    mut good: f64,
    mut bad: f64,
    tol: f64,
    mut stable: impl FnMut(f64) -> Result<bool>,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "bisection tolerance must be positive".into(),
        ));
    }
    while (bad - good).abs() > tol {
        let mid = 0.5 * (good + bad);
        if stable(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}
