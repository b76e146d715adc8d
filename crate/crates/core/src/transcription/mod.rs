//! Space-domain transcription of the race problem.
//!
//! Both formulations share the same skeleton: states live on a uniform node
//! grid over [0, S], controls are piecewise constant per interval, and the
//! dynamics are advanced by one explicit RK4 step per interval. The convex
//! assembly emits only linear rows and second-order cones; the non-convex
//! assembly emits the smooth residual blocks the successive-convexification
//! solver linearizes.

mod convex;
mod layout;
mod nonconvex;
mod problem;

pub use convex::assemble_convex;
pub use layout::{DecisionLayout, Formulation, VarKind};
pub use nonconvex::assemble_nonconvex;
pub use problem::{
    AssembledProblem, Block, BlockTag, ConeBlock, EvalContext, LinRow, LinearBlock, Objective,
    ProblemStats, SmoothBlock, SmoothKind, ViolationReport,
};

use serde::Serialize;
use crate::error::{Error, Result};
use crate::track::TrackProfile;

/// Races start fully charged.
pub const INITIAL_SOC: f64 = 1.0;

/// Characteristic magnitude for RC branch voltage residuals [V].
pub(crate) const V1_SCALE: f64 = 100.0;

/// Grid settings; the integrator (explicit RK4) and the objective quadrature
/// (left-Riemann) are fixed by design and not configurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscretizationConfig {
    /// Node spacing [m]. Must divide the lap length.
    pub ds: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self { ds: 15.0 }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self, track: &TrackProfile) -> Result<()> {
        if !(self.ds > 0.0) {
            return Err(Error::Config(format!("step {} must be positive", self.ds)));
        }
        let lap = track.lap_length();
        let per_lap = lap / self.ds;
        if (per_lap - per_lap.round()).abs() > 1e-9 * per_lap.max(1.0) {
            return Err(Error::Config(format!(
                "step {} does not divide the lap length {lap}",
                self.ds
            )));
        }
        Ok(())
    }
}

/// Track data sampled on the transcription grid.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grid {
    pub s: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    /// Slope at the RK4 stage abscissae (s_k, s_k + ds/2, s_k + ds) per interval.
    pub stage_theta: Vec<[f64; 3]>,
    pub ds: f64,
}

impl Grid {
    pub fn n_nodes(&self) -> usize {
        self.s.len()
    }
}

pub(crate) fn build_grid(track: &TrackProfile, disc: &DiscretizationConfig) -> Result<Grid> {
    disc.validate(track)?;
    let ds = disc.ds;
    let total = track.total_length();
    let n_intervals = (total / ds).round() as usize;
    let n_nodes = n_intervals + 1;
    let mut s = Vec::with_capacity(n_nodes);
    let mut rho = Vec::with_capacity(n_nodes);
    let mut theta = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let sk = if k == n_intervals { total } else { k as f64 * ds };
        let (r, t) = track.sample(sk);
        s.push(sk);
        rho.push(r);
        theta.push(t);
    }
    let stage_theta = (0..n_intervals)
        .map(|k| {
            let sk = s[k];
            [theta[k], track.sample(sk + 0.5 * ds).1, theta[k + 1]]
        })
        .collect();
    Ok(Grid { s, rho, theta, stage_theta, ds })
}

/// Adapts an (s, state) derivative to the counter-based stage convention:
/// RK4 evaluates at s, s+h/2, s+h/2, s+h, so stage slopes are read off a
/// 3-entry table instead of re-sampling the track inside the hot loop.
pub(crate) fn stage_indexer() -> impl FnMut() -> usize {
    let mut call = 0usize;
    move || {
        let idx = match call {
            0 => 0,
            1 | 2 => 1,
            _ => 2,
        };
        call = (call + 1) % 4;
        idx
    }
}
