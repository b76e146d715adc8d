//! Point-mass longitudinal dynamics and the friction-ellipse limit, in both
//! the speed form and the kinetic-energy form.
//!
//! The two derivative evaluators describe the same physics in different state
//! variables; the chain-rule identity tying them together is property-tested.
//! Total mass M is passed per call because it depends on the battery build.

use serde::Serialize;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Chassis and tire constants plus speed-domain logistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleParams {
    /// Chassis mass without the battery [kg].
    pub m_v: f64,
    /// Wheel radius [m].
    pub r_w: f64,
    /// Aerodynamic drag coefficient [N s^2/m^2].
    pub c_drag: f64,
    /// Downforce coefficient [N s^2/m^2].
    pub c_down: f64,
    /// Rolling-resistance coefficient.
    pub c_roll: f64,
    /// Longitudinal friction peak.
    pub mu_x: f64,
    /// Lateral friction peak.
    pub mu_y: f64,
    /// Gravity [m/s^2].
    pub g: f64,
    /// Initial speed [m/s].
    pub v0: f64,
    /// Minimum admissible speed [m/s]; guards the 1/v singularity of the
    /// spatial formulation.
    pub v_floor: f64,
    /// Speed cap [m/s] used as a variable bound and as the straight-line
    /// cornering-speed fallback.
    pub v_cap: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m_v: 426.0,
            r_w: 0.3454,
            c_drag: 0.3927,
            c_down: 0.9526,
            c_roll: 0.015,
            mu_x: 1.2,
            mu_y: 1.2,
            g: 9.81,
            v0: 1.0,
            v_floor: 1.0,
            v_cap: 100.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            (self.m_v, "m_v"),
            (self.r_w, "r_w"),
            (self.c_drag, "c_drag"),
            (self.c_down, "c_down"),
            (self.c_roll, "c_roll"),
            (self.g, "g"),
        ];
        for (x, name) in pos {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Validation(format!("vehicle {name} must be positive, got {x}")));
            }
        }
        for (mu, name) in [(self.mu_x, "mu_x"), (self.mu_y, "mu_y")] {
            if !(mu > 0.0 && mu <= 3.0) {
                return Err(Error::Validation(format!("vehicle {name} must lie in (0, 3], got {mu}")));
            }
        }
        if !(self.v_floor > 0.0) {
            return Err(Error::Validation(format!("v_floor must be positive, got {}", self.v_floor)));
        }
        if self.v0 < self.v_floor {
            return Err(Error::Validation(format!(
                "v0 = {} below the speed floor {}",
                self.v0, self.v_floor
            )));
        }
        if self.v_cap <= self.v0 {
            return Err(Error::Validation(format!(
                "v_cap = {} must exceed v0 = {}",
                self.v_cap, self.v0
            )));
        }
        Ok(())
    }

    /// Grouped quadratic-resistance coefficient C_drag + C_roll * C_down.
    #[inline]
    pub fn c_quad(&self) -> f64 {
        self.c_drag + self.c_roll * self.c_down
    }

    /// Gravity-resistance force component M g (sin theta + C_roll cos theta).
    #[inline]
    pub fn grav_force(&self, m: f64, theta: f64) -> f64 {
        m * self.g * (theta.sin() + self.c_roll * theta.cos())
    }
}

/// dv/ds of the speed-form state equation.
///
/// No floor check; callers integrating through stages enforce the speed floor
/// themselves and attach position information to violations.
#[inline]
pub fn speed_derivative_unguarded<R: Real>(
    v: R,
    t_w: R,
    theta: f64,
    m: f64,
    p: &VehicleParams,
) -> R {
    let force = t_w / R::constant(p.r_w)
        - R::constant(p.c_quad()) * v * v
        - R::constant(p.grav_force(m, theta));
    force / (R::constant(m) * v)
}

/// dv/ds with the speed-floor domain check.
pub fn speed_derivative(v: f64, t_w: f64, theta: f64, m: f64, p: &VehicleParams) -> Result<f64> {
    if v < p.v_floor {
        return Err(Error::Domain(format!(
            "speed {v} below the floor {}; 1/v is not evaluated there",
            p.v_floor
        )));
    }
    Ok(speed_derivative_unguarded(v, t_w, theta, m, p))
}

/// dE_kin/ds of the energy-form state equation; affine in (E_kin, T_w).
#[inline]
pub fn kinetic_derivative<R: Real>(e_kin: R, t_w: R, theta: f64, m: f64, p: &VehicleParams) -> R {
    t_w / R::constant(p.r_w)
        - R::constant(2.0 / m * p.c_quad()) * e_kin
        - R::constant(p.grav_force(m, theta))
}

/// Friction-ellipse residual in squared-force units [N^2]; feasible iff <= 0.
///
/// (T_w/(mu_x R_w))^2 + (M rho v^2 / mu_y)^2 - (M g cos theta + C_down v^2)^2.
/// The right-hand side enters unsquared in the underlying norm constraint;
/// squaring both sides here is exact because the vertical load is positive,
/// and it keeps the residual smooth at zero lateral force.
#[inline]
pub fn friction_ellipse_residual<R: Real>(
    t_w: R,
    v: R,
    rho: f64,
    theta: f64,
    m: f64,
    p: &VehicleParams,
) -> R {
    let fx = t_w / R::constant(p.mu_x * p.r_w);
    let fy = R::constant(m * rho / p.mu_y) * v * v;
    let fz = R::constant(m * p.g * theta.cos()) + R::constant(p.c_down) * v * v;
    fx * fx + fy * fy - fz * fz
}

/// Zero-torque speed limit of the ellipse, or the speed cap on straights.
///
/// Solves (M |rho| v^2 / mu_y) = M g cos theta + C_down v^2 when the lateral
/// demand outgrows downforce, else returns the cap.
pub fn max_cornering_speed(rho: f64, theta: f64, m: f64, p: &VehicleParams) -> f64 {
    let lateral = m * rho.abs() / p.mu_y;
    let denom = lateral - p.c_down;
    if denom <= 0.0 {
        return p.v_cap;
    }
    (m * p.g * theta.cos() / denom).sqrt().min(p.v_cap)
}
