//! Battery-to-wheel power coupling.
//!
//! The non-convex formulation uses a smoothed bidirectional efficiency so the
//! traction/regeneration switch is differentiable; the convex formulation
//! relaxes the same coupling into two linear inequalities and recovers the
//! mechanical brake torque afterwards.

use serde::Serialize;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowertrainParams {
    /// Average battery-to-wheel efficiency, in (0, 1).
    pub eta: f64,
    /// Smoothing slope of the efficiency switch [1/A].
    pub beta_eta: f64,
    /// Optional lower bound on brake torque [N m] for power-limited brakes.
    /// Applied in the non-convex path only; None leaves brakes unbounded.
    pub t_br_min: Option<f64>,
}

impl Default for PowertrainParams {
    fn default() -> Self {
        // beta_eta = 5 finishes the traction/charge transition within a few
        // amps, negligible against operating currents of order 100 A.
        Self { eta: 0.87, beta_eta: 5.0, t_br_min: None }
    }
}

impl PowertrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Validation(format!(
                "efficiency must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if !(self.beta_eta > 0.0) {
            return Err(Error::Validation(format!(
                "smoothing slope must be positive, got {}",
                self.beta_eta
            )));
        }
        if let Some(t) = self.t_br_min {
            if !(t < 0.0) {
                return Err(Error::Validation(format!(
                    "brake torque bound must be negative, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Motor/brake torque split at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueSplit {
    pub t_m: f64,
    pub t_br: f64,
    pub t_w: f64,
}

impl TorqueSplit {
    pub fn validate(&self, tol: f64) -> Result<()> {
        if (self.t_w - self.t_m - self.t_br).abs() > tol {
            return Err(Error::Validation(format!(
                "torque split must sum: {} != {} + {}",
                self.t_w, self.t_m, self.t_br
            )));
        }
        if self.t_br > tol {
            return Err(Error::Validation(format!(
                "brake torque must be non-positive, got {}",
                self.t_br
            )));
        }
        Ok(())
    }
}

/// Smoothed bidirectional efficiency: eta on discharge, 1/eta on charge,
/// blended by tanh(-beta I). Strictly decreasing, range (eta, 1/eta).
#[inline]
pub fn smoothed_efficiency<R: Real>(i_b: R, p: &PowertrainParams) -> R {
    let inv = 1.0 / p.eta;
    let center = R::constant(0.5 * (inv + p.eta));
    let half_span = R::constant(0.5 * (inv - p.eta));
    center + half_span * (-(R::constant(p.beta_eta) * i_b)).tanh()
}

/// Residual of the power coupling T_m v / R_w = V_b I_b eta~(I_b), in watts.
#[inline]
pub fn coupling_residual<R: Real>(
    t_m: R,
    v: R,
    v_b: R,
    i_b: R,
    p: &PowertrainParams,
    r_w: f64,
) -> R {
    t_m * v / R::constant(r_w) - v_b * i_b * smoothed_efficiency(i_b, p)
}

/// The two convex coupling inequalities, as signed residuals in newtons;
/// feasible iff both are <= 0. F_b is the distance-scaled battery power.
#[inline]
pub fn convex_coupling_residuals(
    t_w: f64,
    f_b: f64,
    p: &PowertrainParams,
    r_w: f64,
) -> (f64, f64) {
    let wheel = t_w / r_w;
    (wheel - p.eta * f_b, wheel - f_b / p.eta)
}

/// Mechanical brake torque implied by a convex solution point:
/// T_br* = T_w - (R_w / eta) F_b. Non-positive wherever the charge-side
/// coupling inequality holds.
#[inline]
pub fn recover_brake_torque(t_w: f64, f_b: f64, p: &PowertrainParams, r_w: f64) -> f64 {
    t_w - r_w / p.eta * f_b
}
