//! Trust-region sequential linearization for the smooth formulation.
//!
//! Each outer iteration solves a cone subproblem: the reciprocal-speed
//! objective is kept exact through epigraph cones, linear rows and bounds
//! pass through verbatim, and every smooth row is linearized at the current
//! iterate with an L1 slack so the subproblem can never go infeasible. A
//! merit function (race time plus the penalty-weighted scaled violations)
//! accepts or rejects steps and drives the trust radius.

use std::time::Instant;

use log::debug;

use crate::error::{Error, Result};
use crate::solution::RaceSolution;
use crate::solver::conic::{ConicBuilder, ConicOptions};
use crate::solver::{SolveReport, SolveSettings, SolveStatus};
use crate::transcription::{
    AssembledProblem, Block, LinRow, Objective, VarKind, INITIAL_SOC, V1_SCALE,
};

/// Trust-region scale per decision variable, by physical kind.
pub(crate) fn var_scale(problem: &AssembledProblem, j: usize) -> f64 {
    let ctx = &problem.ctx;
    let m_g = ctx.m_total * ctx.vehicle.g;
    match problem.layout.var_info(j).1 {
        VarKind::Speed => ctx.vehicle.v_cap,
        VarKind::Soc => 1.0,
        VarKind::RcVoltage => V1_SCALE,
        VarKind::WheelTorque | VarKind::MotorTorque | VarKind::BrakeTorque => {
            m_g * ctx.vehicle.r_w
        }
        VarKind::Current => ctx.pack.i_max_pack,
        VarKind::Lethargy => 1.0 / ctx.vehicle.v_floor,
        VarKind::KineticEnergy => 0.5 * ctx.m_total * ctx.vehicle.v_cap * ctx.vehicle.v_cap,
        VarKind::PackEnergy => ctx.pack.e_b_max,
        VarKind::OpenCircuitForce | VarKind::BatteryForce => m_g,
    }
}

/// Sum and maximum of the scaled smooth-row violations at `x`.
fn smooth_violation(problem: &AssembledProblem, x: &[f64]) -> (f64, f64) {
    let (mut sum, mut max) = (0.0f64, 0.0f64);
    for block in &problem.blocks {
        if let Block::Smooth(b) = block {
            let rows = problem.smooth_values(b, x);
            for (i, &r) in rows.iter().enumerate() {
                let v = if b.equality { r.abs() } else { r.max(0.0) } / b.scales[i];
                sum += v;
                max = max.max(v);
            }
        }
    }
    (sum, max)
}

/// Standstill-ish start that satisfies every linear row and bound.
fn cold_start(problem: &AssembledProblem) -> Vec<f64> {
    let layout = &problem.layout;
    let vehicle = &problem.ctx.vehicle;
    let mut x = vec![0.0; layout.n_vars()];
    for k in 0..layout.n_nodes() {
        if layout.has(VarKind::Speed) {
            x[layout.at(k, VarKind::Speed)] = vehicle.v0.max(vehicle.v_floor);
        }
        if layout.has(VarKind::Soc) {
            x[layout.at(k, VarKind::Soc)] = INITIAL_SOC;
        }
    }
    x
}

fn clamp_to_bounds(problem: &AssembledProblem, x: &mut [f64]) {
    for j in 0..x.len() {
        x[j] = x[j].clamp(problem.lower[j], problem.upper[j]);
    }
}

/// Builds the cone subproblem around `x`; returns the builder and its
/// objective vector (original variables, then epigraph, then slacks).
///
/// With `value_point` set, the smooth rows keep the Jacobian at `x` but take
/// their residual values (and expansion point) there instead: the
/// second-order-correction subproblem of the outer loop.
fn build_subproblem(
    problem: &AssembledProblem,
    x: &[f64],
    value_point: Option<&[f64]>,
    trust: f64,
    scales: &[f64],
    settings: &SolveSettings,
) -> (ConicBuilder, Vec<f64>) {
    let n = problem.n_vars();
    let mut builder = ConicBuilder::scaled(scales.to_vec());
    let mut q = vec![0.0; n];

    // Exact epigraph of step/v: t v >= 1 as a rotated cone, cost step on t.
    if let Objective::InverseSpeedSum { speed_vars, step } = &problem.objective {
        for &vj in speed_vars {
            let t = builder.add_var();
            q.push(*step);
            builder.soc(
                &LinRow::new(vec![(vj, 1.0), (t, 1.0)], 0.0),
                &[LinRow::new(vec![], 2.0), LinRow::new(vec![(vj, 1.0), (t, -1.0)], 0.0)],
            );
        }
    }

    for block in &problem.blocks {
        match block {
            Block::Linear(b) => {
                for row in &b.rows {
                    if b.equality {
                        builder.eq_row(&row.coeffs, row.offset);
                    } else {
                        builder.le_row(&row.coeffs, row.offset);
                    }
                }
            }
            Block::Cone(b) => builder.soc(&b.scalar, &b.vector),
            Block::Smooth(b) => {
                let (mut vals, jac) = problem.smooth_jacobian(b, x);
                let expansion = value_point.unwrap_or(x);
                if let Some(vp) = value_point {
                    vals = problem.smooth_values(b, vp);
                }
                for (i, row) in jac.iter().enumerate() {
                    let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(row.len() + 2);
                    let mut offset = vals[i];
                    for (c, &vj) in row.iter().zip(&b.vars) {
                        if *c != 0.0 {
                            coeffs.push((vj, *c));
                            offset -= c * expansion[vj];
                        }
                    }
                    let weight = settings.penalty / b.scales[i];
                    if b.equality {
                        let sp = builder.add_var();
                        q.push(weight);
                        let sn = builder.add_var();
                        q.push(weight);
                        coeffs.push((sp, 1.0));
                        coeffs.push((sn, -1.0));
                        builder.eq_row(&coeffs, offset);
                        builder.le_row(&[(sp, -1.0)], 0.0);
                        builder.le_row(&[(sn, -1.0)], 0.0);
                    } else {
                        let s = builder.add_var();
                        q.push(weight);
                        coeffs.push((s, -1.0));
                        builder.le_row(&coeffs, offset);
                        builder.le_row(&[(s, -1.0)], 0.0);
                    }
                }
            }
        }
    }

    // Bounds intersected with the trust box around x.
    for j in 0..n {
        let lo = problem.lower[j].max(x[j] - trust * scales[j]);
        let hi = problem.upper[j].min(x[j] + trust * scales[j]);
        builder.le_row(&[(j, -1.0)], lo);
        builder.le_row(&[(j, 1.0)], -hi);
    }
    debug_assert_eq!(q.len(), builder.n_vars());
    (builder, q)
}

/// Solves the smooth formulation by sequential cone programming.
///
/// `warm_start` is a full-length decision vector, typically from
/// `initialize_from_convex`; without one the solve starts near standstill
/// and needs many more iterations.
pub fn solve_nlp(
    problem: &AssembledProblem,
    warm_start: Option<Vec<f64>>,
    settings: &SolveSettings,
) -> Result<(RaceSolution, SolveReport)> {
    let started = Instant::now();
    if !matches!(problem.objective, Objective::InverseSpeedSum { .. }) {
        return Err(Error::Validation(
            "the smooth solve needs the reciprocal-speed objective".into(),
        ));
    }
    let n = problem.n_vars();
    let mut x = warm_start.unwrap_or_else(|| cold_start(problem));
    if x.len() != n {
        return Err(Error::Validation(format!(
            "warm start has {} entries, problem has {n} variables",
            x.len()
        )));
    }
    clamp_to_bounds(problem, &mut x);
    let scales: Vec<f64> = (0..n).map(|j| var_scale(problem, j)).collect();
    let conic_opts = ConicOptions::from_settings(settings);

    let mut trust = settings.trust_initial;
    let (mut viol_sum, mut viol_max) = smooth_violation(problem, &x);
    let mut merit = problem.eval_objective(&x) + settings.penalty * viol_sum;
    let mut status = SolveStatus::IterationLimit;
    let mut conic_iterations = 0u64;
    let mut iterations = 0usize;
    let (mut r_prim, mut r_dual) = (f64::NAN, f64::NAN);

    for iter in 1..=settings.max_scp_iterations {
        iterations = iter;
        if let Some(limit) = settings.time_limit {
            if started.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        let (builder, q) = build_subproblem(problem, &x, None, trust, &scales, settings);
        let outcome = builder.solve(&q, &conic_opts)?;
        conic_iterations += u64::from(outcome.iterations);
        if !outcome.status.is_usable() {
            trust *= 0.25;
            debug!("scp iter {iter}: subproblem {:?}, trust -> {trust:.3e}", outcome.status);
            if trust < settings.trust_min {
                status = if viol_max <= settings.nlp_tol {
                    SolveStatus::AlmostOptimal
                } else {
                    SolveStatus::NumericalTrouble
                };
                break;
            }
            continue;
        }
        r_prim = outcome.r_prim;
        r_dual = outcome.r_dual;
        let mut cand = outcome.x[..n].to_vec();
        clamp_to_bounds(problem, &mut cand);
        let (cand_sum, cand_max) = smooth_violation(problem, &cand);
        let cand_merit = problem.eval_objective(&cand) + settings.penalty * cand_sum;
        let predicted = merit - outcome.obj;
        let actual = merit - cand_merit;
        if predicted <= 1e-9 * (1.0 + merit.abs()) {
            // The linearization sees nothing better inside the box.
            if viol_max <= settings.nlp_tol {
                status = SolveStatus::Optimal;
                break;
            }
            trust *= 0.25;
            if trust < settings.trust_min {
                status = SolveStatus::NumericalTrouble;
                break;
            }
            continue;
        }
        let ratio = actual / predicted;
        debug!(
            "scp iter {iter}: merit {merit:.6e} -> {cand_merit:.6e}, pred {predicted:.3e}, \
             ratio {ratio:.3}, viol {cand_max:.3e}, trust {trust:.3e}"
        );
        if ratio >= 0.1 {
            let step = (0..n)
                .map(|j| (cand[j] - x[j]).abs() / scales[j])
                .fold(0.0f64, f64::max);
            x = cand;
            viol_sum = cand_sum;
            viol_max = cand_max;
            merit = cand_merit;
            let _ = viol_sum;
            if ratio >= 0.7 && step >= 0.8 * trust {
                trust = (trust * 2.0).min(settings.trust_max);
            }
            if viol_max <= settings.nlp_tol && predicted <= 1e-7 * (1.0 + merit.abs()) {
                status = SolveStatus::Optimal;
                break;
            }
        } else {
            trust *= 0.25;
            if trust < settings.trust_min {
                status = if viol_max <= settings.nlp_tol {
                    SolveStatus::AlmostOptimal
                } else {
                    SolveStatus::NumericalTrouble
                };
                break;
            }
        }
    }

    let report = SolveReport {
        status,
        formulation: problem.formulation(),
        model: problem.model(),
        objective: problem.eval_objective(&x),
        max_violation: problem.violations(&x).max_scaled,
        conic_iterations,
        scp_iterations: iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        r_prim,
        r_dual,
    };
    Ok((RaceSolution::extract(problem, x), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{derive_pack, BatteryModelKind, CellParams, PackConfig, PowerLimits};
    use crate::powertrain::PowertrainParams;
    use crate::solver::{initialize_from_convex, solve_conic};
    use crate::track::{synth_track, SynthSegment, TrackProfile};
    use crate::transcription::{assemble_convex, assemble_nonconvex, DiscretizationConfig};
    use crate::vehicle::VehicleParams;

    fn pack24() -> crate::battery::PackParams {
        derive_pack(
            &CellParams::default(),
            &PackConfig { n_s: 209, n_p: 24, alpha: 0.8 },
            PowerLimits::default(),
        )
        .unwrap()
    }

    fn straight() -> TrackProfile {
        synth_track(&[SynthSegment::Straight { length: 300.0 }])
            .unwrap()
            .resample(15.0)
            .unwrap()
    }

    fn lap() -> TrackProfile {
        synth_track(&[
            SynthSegment::Straight { length: 300.0 },
            SynthSegment::Arc { length: 150.0, radius: 60.0 },
            SynthSegment::Straight { length: 450.0 },
        ])
        .unwrap()
        .resample(15.0)
        .unwrap()
    }

    fn solve_pair(
        track: &TrackProfile,
        model: BatteryModelKind,
        warm: bool,
    ) -> ((f64, SolveStatus), (f64, SolveStatus, f64)) {
        let pack = pack24();
        // Rolling start: one 15 m RK4 step on the speed-form dynamics is
        // meaningless at crawl speed, so agreement between the forms is only
        // defined for launches the grid actually resolves.
        let vehicle = VehicleParams { v0: 20.0, ..VehicleParams::default() };
        let powertrain = PowertrainParams::default();
        let disc = DiscretizationConfig { ds: 15.0 };
        let settings = SolveSettings::default();
        let convex = assemble_convex(
            track,
            &vehicle,
            &pack,
            BatteryModelKind::VnR,
            &powertrain,
            &disc,
        )
        .unwrap();
        let (conic_sol, conic_rep) = solve_conic(&convex, &settings).unwrap();
        let smooth =
            assemble_nonconvex(track, &vehicle, &pack, model, &powertrain, &disc).unwrap();
        let start = if warm {
            Some(initialize_from_convex(&conic_sol, &smooth).unwrap())
        } else {
            None
        };
        let (_, rep) = solve_nlp(&smooth, start, &settings).unwrap();
        (
            (conic_rep.objective, conic_rep.status),
            (rep.objective, rep.status, rep.max_violation),
        )
    }

    #[test]
    fn straight_line_smooth_agrees_with_conic() {
        let track = straight();
        let ((t_conic, s_conic), (t_nlp, s_nlp, viol)) =
            solve_pair(&track, BatteryModelKind::VnR, true);
        assert!(s_conic.is_usable());
        assert_eq!(s_nlp, SolveStatus::Optimal);
        assert!(viol < 1e-5, "violation {viol}");
        let gap = (t_nlp - t_conic).abs() / t_conic;
        assert!(gap < 5e-3, "conic {t_conic}, smooth {t_nlp}, gap {gap}");
    }

    #[test]
    fn lap_smooth_agrees_with_conic_after_warm_start() {
        let track = lap();
        let ((t_conic, _), (t_nlp, s_nlp, viol)) =
            solve_pair(&track, BatteryModelKind::VnR, true);
        assert!(s_nlp.is_usable(), "{s_nlp:?}");
        assert!(viol < 1e-5, "violation {viol}");
        let gap = (t_nlp - t_conic).abs() / t_conic;
        assert!(gap < 5e-3, "conic {t_conic}, smooth {t_nlp}, gap {gap}");
    }

    #[test]
    fn rc_model_solves_and_charges_the_branch() {
        let track = lap();
        let pack = pack24();
        let vehicle = VehicleParams { v0: 20.0, ..VehicleParams::default() };
        let powertrain = PowertrainParams::default();
        let disc = DiscretizationConfig { ds: 15.0 };
        let settings = SolveSettings::default();
        let convex = assemble_convex(
            &track,
            &vehicle,
            &pack,
            BatteryModelKind::VnR,
            &powertrain,
            &disc,
        )
        .unwrap();
        let (conic_sol, _) = solve_conic(&convex, &settings).unwrap();
        let smooth = assemble_nonconvex(
            &track,
            &vehicle,
            &pack,
            BatteryModelKind::VSocRc,
            &powertrain,
            &disc,
        )
        .unwrap();
        let start = initialize_from_convex(&conic_sol, &smooth).unwrap();
        let (sol, rep) = solve_nlp(&smooth, Some(start), &settings).unwrap();
        assert!(rep.status.is_usable(), "{:?}", rep.status);
        assert!(rep.max_violation < 1e-5, "violation {}", rep.max_violation);
        let v1_peak = sol.v1.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(v1_peak > 1.0, "RC branch stayed at {v1_peak} V");
        // Discharge happened.
        assert!(sol.soc.last().unwrap() < &1.0);
    }

    #[test]
    fn iteration_cap_reports_the_limit() {
        let track = lap();
        let pack = pack24();
        let smooth = assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            &pack,
            BatteryModelKind::VnR,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap();
        let settings = SolveSettings { max_scp_iterations: 1, ..SolveSettings::default() };
        let (_, rep) = solve_nlp(&smooth, None, &settings).unwrap();
        assert_eq!(rep.status, SolveStatus::IterationLimit);
        assert_eq!(rep.scp_iterations, 1);
    }

    #[test]
    fn repeat_smooth_solves_are_bitwise_identical() {
        let track = straight();
        let pack = pack24();
        let smooth = assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            &pack,
            BatteryModelKind::VnR,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap();
        let settings = SolveSettings::default();
        let (a, _) = solve_nlp(&smooth, None, &settings).unwrap();
        let (b, _) = solve_nlp(&smooth, None, &settings).unwrap();
        assert_eq!(a.x, b.x);
    }
}
