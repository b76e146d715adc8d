//! Solved trajectories in physical columns.

use serde::Serialize;

use crate::battery::BatteryModelKind;
use crate::transcription::{AssembledProblem, Formulation, VarKind};

/// A race trajectory unpacked from the stacked decision vector. Columns a
/// formulation does not carry are left empty rather than zero-filled so
/// writers can tell "absent" from "zero".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceSolution {
    pub formulation: Formulation,
    pub model: BatteryModelKind,
    /// Race time [s].
    pub objective: f64,
    /// Node positions [m].
    pub s: Vec<f64>,
    /// Lethargy dt/ds [s/m] (conic only).
    pub dtds: Vec<f64>,
    pub v: Vec<f64>,
    /// Kinetic energy [J] (conic only).
    pub e_kin: Vec<f64>,
    pub t_w: Vec<f64>,
    /// Remaining pack energy [J] (conic only).
    pub e_b: Vec<f64>,
    /// Open-circuit force [N] (conic only).
    pub f_oc: Vec<f64>,
    /// Battery force at the terminals [N] (conic only).
    pub f_b: Vec<f64>,
    /// State of charge (smooth formulation only).
    pub soc: Vec<f64>,
    /// RC branch voltage [V] (RC battery model only).
    pub v1: Vec<f64>,
    /// Motor torque [N m] (smooth formulation only).
    pub t_m: Vec<f64>,
    /// Brake torque [N m] (smooth formulation only).
    pub t_br: Vec<f64>,
    /// Battery current [A] (smooth formulation only).
    pub i_b: Vec<f64>,
    /// The raw stacked vector the columns were read from.
    pub x: Vec<f64>,
}

impl RaceSolution {
    /// Unpacks `x` against the problem's layout.
    pub fn extract(problem: &AssembledProblem, x: Vec<f64>) -> Self {
        let layout = &problem.layout;
        let n = layout.n_nodes();
        let column = |kind: VarKind| -> Vec<f64> {
            if layout.has(kind) {
                (0..n).map(|k| x[layout.at(k, kind)]).collect()
            } else {
                Vec::new()
            }
        };
        RaceSolution {
            formulation: problem.formulation(),
            model: problem.model(),
            objective: problem.eval_objective(&x),
            s: problem.ctx.s.clone(),
            dtds: column(VarKind::Lethargy),
            v: column(VarKind::Speed),
            e_kin: column(VarKind::KineticEnergy),
            t_w: column(VarKind::WheelTorque),
            e_b: column(VarKind::PackEnergy),
            f_oc: column(VarKind::OpenCircuitForce),
            f_b: column(VarKind::BatteryForce),
            soc: column(VarKind::Soc),
            v1: column(VarKind::RcVoltage),
            t_m: column(VarKind::MotorTorque),
            t_br: column(VarKind::BrakeTorque),
            i_b: column(VarKind::Current),
            x,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.s.len()
    }

    /// Race time in seconds; alias for the objective.
    pub fn race_time(&self) -> f64 {
        self.objective
    }

    /// Terminal state of charge, whichever formulation produced the run.
    pub fn terminal_soc(&self, e_b_max: f64) -> Option<f64> {
        if let Some(&z) = self.soc.last() {
            Some(z)
        } else {
            self.e_b.last().map(|&e| e / e_b_max)
        }
    }
}
