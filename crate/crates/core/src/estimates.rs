//! Closed-form stabilizability constants and actuator-count bounds.
//!
//! `D_rc`, `D_hat` and `|iota|` are domain-dependent existence constants that
//! cannot be computed here; they are inputs and default to 1.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `Theta(r, th1, th2, d) = 1 + th1^2 + d th2^2 + 1/r + r (th1 + d th2^2)`.
pub fn theta(r: f64, th1: f64, th2: f64, d: u32) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window length r = {r} must be positive"
        )));
    }
    let d = f64::from(d);
    Ok(1.0 + th1 * th1 + d * th2 * th2 + 1.0 / r + r * (th1 + d * th2 * th2))
}

/// `Theta_bar(xi1, xi2, xi3, d) = D (1 + xi1^2 + d xi2^2) + 2 sqrt(D) sqrt(D_rc xi3^2 + D (xi1 + d xi2^2))`.
pub fn theta_bar(d_hat: f64, d_rc: f64, xi1: f64, xi2: f64, xi3: f64, d: u32) -> f64 {
    let d = f64::from(d);
    d_hat * (1.0 + xi1 * xi1 + d * xi2 * xi2)
        + 2.0 * d_hat.sqrt() * (d_rc * xi3 * xi3 + d_hat * (xi1 + d * xi2 * xi2)).sqrt()
}

/// Volume of the unit ball in `R^d`, `pi^{d/2} / Gamma(d/2 + 1)`.
pub fn ball_volume(d: u32) -> f64 {
    // Recurrence |B_d| = 2 pi / d |B_{d-2}| avoids a gamma function.
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / f64::from(d) * ball_volume(d - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub d: u32,
    /// Reaction norm proxy `|a - lambda/2|`.
    pub n_a: f64,
    /// Convection norm proxy `|b|`.
    pub n_b: f64,
    /// Combined norm `|(a - lambda/2, b)|_W`.
    pub n_w: f64,
    pub d_rc: f64,
    pub d_hat: f64,
    pub iota: f64,
    pub chi_norm: f64,
    /// `|Omega|`.
    pub domain_volume: f64,
    /// `|w_R|`, volume of the actuated region.
    pub actuated_volume: f64,
    /// Largest cell side of the actuator partition.
    pub l_bar: f64,
}

impl Default for TheoryParams {
    fn default() -> Self {
        TheoryParams {
            d: 2,
            n_a: 1.0,
            n_b: 0.0,
            n_w: 1.0,
            d_rc: 1.0,
            d_hat: 1.0,
            iota: 1.0,
            chi_norm: 1.0,
            domain_volume: PI,
            actuated_volume: 1.0 / 6.0,
            l_bar: 0.25,
        }
    }
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument(
                "dimension d must be at least 1".into(),
            ));
        }
        let fields = [
            ("n_a", self.n_a),
            ("n_b", self.n_b),
            ("n_w", self.n_w),
            ("iota", self.iota),
            ("chi_norm", self.chi_norm),
            ("l_bar", self.l_bar),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        let positive = [
            ("d_rc", self.d_rc),
            ("d_hat", self.d_hat),
            ("domain_volume", self.domain_volume),
            ("actuated_volume", self.actuated_volume),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} must be finite and positive"
                )));
            }
        }
        Ok(())
    }
}

/// `(T*, Upsilon)`; `T* = inf` when all norms vanish.
pub fn t_star_upsilon(p: &TheoryParams) -> Result<(f64, f64)> {
    p.validate()?;
    let d = f64::from(p.d);
    let denom = p.d_rc * p.n_w * p.n_w + p.d_hat * (p.n_a + d * p.n_b * p.n_b);
    if denom == 0.0 {
        return Ok((f64::INFINITY, 2.0 * p.iota * p.iota * p.d_hat.exp()));
    }
    let t_star = (p.d_hat / denom).sqrt();
    let tb = theta_bar(p.d_hat, p.d_rc, p.n_a, p.n_b, p.n_w, p.d);
    Ok((t_star, 2.0 * p.iota * p.iota * tb.exp()))
}

/// A lower bound on the number of actuators: raw value and its ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub raw: f64,
    pub ceil: f64,
}

impl Bound {
    fn new(raw: f64) -> Bound {
        Bound {
            raw,
            ceil: raw.ceil(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorBounds {
    pub m_eig: Bound,
    pub m_pc: Bound,
    pub m_simple: Bound,
    /// Optimal horizon `1 / (2 D_rc n_W^2)` of the simple bound.
    pub t_star_part: f64,
    pub d_d: f64,
    pub ball_volume: f64,
    pub t_star: f64,
    pub upsilon: f64,
}

pub fn actuator_bounds(p: &TheoryParams) -> Result<ActuatorBounds> {
    let (t_star, upsilon) = t_star_upsilon(p)?;
    let d = f64::from(p.d);
    let bd = ball_volume(p.d);
    let d_d = 4.0 * d * PI * PI / ((d + 2.0) * p.actuated_volume.powf(2.0 / d) * bd.powf(2.0 / d));
    let half = d / 2.0;
    let m_eig = d_d.powf(-half) * (4.0 * p.chi_norm * p.chi_norm * upsilon).powf(half);
    let m_pc = (p.l_bar * p.l_bar * upsilon / (PI * PI)).powf(half);
    let m_simple = (p.d_rc * std::f64::consts::E * (d + 2.0) / (d * PI * PI)).powf(half)
        * p.domain_volume
        * bd
        * p.n_w.powi(p.d as i32);
    Ok(ActuatorBounds {
        m_eig: Bound::new(m_eig),
        m_pc: Bound::new(m_pc),
        m_simple: Bound::new(m_simple),
        t_star_part: 1.0 / (2.0 * p.d_rc * p.n_w * p.n_w),
        d_d,
        ball_volume: bd,
        t_star,
        upsilon,
    })
}
