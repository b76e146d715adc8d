//! Warm start for the smooth formulation from a conic solution.

use crate::error::{Error, Result};
use crate::solution::RaceSolution;
use crate::transcription::{AssembledProblem, Formulation, VarKind, INITIAL_SOC};

/// Maps a conic trajectory onto the smooth formulation's variables.
///
/// Speed and state of charge transfer through their defining relations
/// (v from the kinetic relaxation is already a column, SoC is pack energy
/// over capacity, current is open-circuit force times speed over nominal
/// voltage). The torque split picks the efficiency branch from the sign of
/// the battery force, then clamps so every linear row of the target problem
/// holds exactly; the linearizing solver only has to close the smooth rows.
pub fn initialize_from_convex(
    sol: &RaceSolution,
    problem: &AssembledProblem,
) -> Result<Vec<f64>> {
    if sol.formulation != Formulation::Convex {
        return Err(Error::Validation("warm start needs a conic source solution".into()));
    }
    if problem.formulation() != Formulation::NonConvex {
        return Err(Error::Validation("warm start targets the smooth formulation".into()));
    }
    let layout = &problem.layout;
    let n = layout.n_nodes();
    if sol.n_nodes() != n {
        return Err(Error::Validation(format!(
            "node counts differ: source {}, target {}",
            sol.n_nodes(),
            n
        )));
    }
    let ctx = &problem.ctx;
    let (vehicle, pack, powertrain) = (&ctx.vehicle, &ctx.pack, &ctx.powertrain);
    let mut x = vec![0.0; layout.n_vars()];
    for k in 0..n {
        let at = |kind: VarKind| layout.at(k, kind);
        let v = sol.v[k].clamp(vehicle.v_floor, vehicle.v_cap);
        x[at(VarKind::Speed)] = v;
        x[at(VarKind::Soc)] = (sol.e_b[k] / pack.e_b_max).clamp(0.0, 1.0);
        if layout.has(VarKind::RcVoltage) {
            x[at(VarKind::RcVoltage)] = 0.0;
        }
        if k == n - 1 {
            // Controls at the padded terminal node are pinned to zero.
            break;
        }
        let t_w = sol.t_w[k];
        let f_b = sol.f_b[k];
        x[at(VarKind::WheelTorque)] = t_w;
        x[at(VarKind::Current)] =
            (sol.f_oc[k] * v / pack.v_n).clamp(pack.i_min_pack, pack.i_max_pack);
        // Efficiency branch by power direction, then force the split to add up.
        let mut t_m = if f_b >= 0.0 {
            vehicle.r_w * powertrain.eta * f_b
        } else {
            vehicle.r_w * f_b / powertrain.eta
        };
        let mut t_br = t_w - t_m;
        if t_br > 0.0 {
            t_br = 0.0;
            t_m = t_w;
        }
        if let Some(floor) = powertrain.t_br_min {
            if t_br < floor {
                t_br = floor;
                t_m = t_w - t_br;
            }
        }
        x[at(VarKind::MotorTorque)] = t_m;
        x[at(VarKind::BrakeTorque)] = t_br;
    }
    // The source satisfies its launch pins only to solver tolerance; the
    // target pins the same values exactly.
    x[layout.at(0, VarKind::Speed)] = vehicle.v0;
    x[layout.at(0, VarKind::Soc)] = INITIAL_SOC;
    // Nothing prices the terminal node in the source, so its speed column is
    // degenerate there; the kinetic-energy column is what the dynamics pin.
    if let Some(&e_term) = sol.e_kin.last() {
        x[layout.at(n - 1, VarKind::Speed)] =
            (2.0 * e_term / ctx.m_total).sqrt().clamp(vehicle.v_floor, vehicle.v_cap);
    }
    // Relax the RC branch along the trajectory instead of leaving it at zero.
    if layout.has(VarKind::RcVoltage) {
        if let Some(rc) = &pack.rc {
            let tau = rc.r1 * rc.c1;
            let mut v1 = 0.0;
            for k in 0..n - 1 {
                let decay = (-ctx.ds * sol.dtds[k] / tau).exp();
                let i_b = x[layout.at(k, VarKind::Current)];
                v1 = decay * v1 + rc.r1 * i_b * (1.0 - decay);
                x[layout.at(k + 1, VarKind::RcVoltage)] = v1;
            }
        }
    }
    Ok(x)
}
