//! Interior-point and sequential-linearization solvers.

mod conic;
mod init;
mod scp;

pub use conic::solve_conic;
pub use init::initialize_from_convex;
pub use scp::solve_nlp;

use serde::Serialize;

use crate::battery::BatteryModelKind;
use crate::transcription::Formulation;

/// Outcome classification shared by both solve paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    /// Converged to the requested tolerance.
    Optimal,
    /// Converged at reduced accuracy.
    AlmostOptimal,
    /// The constraints admit no point.
    Infeasible,
    /// The objective is unbounded below.
    Unbounded,
    /// Stopped at the iteration or time limit.
    IterationLimit,
    /// Lost numerical traction before meeting any other criterion.
    NumericalTrouble,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::AlmostOptimal => "almost-optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::NumericalTrouble => "numerical-trouble",
        }
    }

    /// Whether the returned point is a usable optimum.
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

/// Knobs for both solve paths; the defaults suit race-scale problems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSettings {
    /// Interior-point gap and feasibility tolerance.
    pub conic_tol: f64,
    /// Scaled constraint-violation target for the smooth formulation.
    pub nlp_tol: f64,
    pub max_conic_iterations: u32,
    pub max_scp_iterations: usize,
    /// L1 weight on linearization slack in the merit function.
    pub penalty: f64,
    /// Initial trust radius as a fraction of each variable's scale.
    pub trust_initial: f64,
    pub trust_min: f64,
    pub trust_max: f64,
    pub verbose: bool,
    /// Wall-clock budget in seconds for one solve call.
    pub time_limit: Option<f64>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            conic_tol: 1e-8,
            nlp_tol: 1e-6,
            max_conic_iterations: 200,
            max_scp_iterations: 80,
            // Must dominate the dynamics multipliers (a few seconds of race
            // time per unit scaled defect) without freezing the trust region:
            // the accepted step length shrinks like 1/penalty once the
            // curvature term owns the predicted-vs-actual gap.
            penalty: 50.0,
            trust_initial: 0.1,
            trust_min: 1e-10,
            trust_max: 2.0,
            verbose: false,
            time_limit: None,
        }
    }
}

/// What a solve call reports alongside the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub formulation: Formulation,
    pub model: BatteryModelKind,
    /// Race time [s] at the returned point.
    pub objective: f64,
    /// Worst scaled constraint violation at the returned point.
    pub max_violation: f64,
    /// Interior-point iterations, summed over subproblems.
    pub conic_iterations: u64,
    /// Outer linearization iterations; zero for a direct conic solve.
    pub scp_iterations: usize,
    pub wall_time_s: f64,
    /// Primal and dual residuals of the last interior-point solve.
    pub r_prim: f64,
    pub r_dual: f64,
}
