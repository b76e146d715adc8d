//! Smooth (non-convex) assembly of the race problem.
//!
//! Decision variables per node: speed v, state of charge, the RC branch
//! voltage when that battery model is active, wheel torque T_w, motor torque
//! T_m, brake torque T_br, and battery current I_b. Dynamics, tire limits,
//! battery boxes, and the motor power balance are kept in their natural
//! nonlinear form; the linearizing solver consumes their residuals and
//! dual-number Jacobians.

use crate::battery::{BatteryModelKind, PackParams};
use crate::error::{Error, Result};
use crate::powertrain::PowertrainParams;
use crate::track::TrackProfile;
use crate::transcription::layout::{DecisionLayout, Formulation, VarKind};
use crate::transcription::problem::{
    AssembledProblem, Block, EvalContext, LinRow, LinearBlock, Objective, SmoothBlock, SmoothKind,
};
use crate::transcription::{build_grid, DiscretizationConfig, INITIAL_SOC, V1_SCALE};
use crate::vehicle::VehicleParams;

fn check_pack(pack: &PackParams, model: BatteryModelKind) -> Result<()> {
    if !(pack.v_n > 0.0 && pack.r0 > 0.0 && pack.q_b > 0.0 && pack.e_b_max > 0.0) {
        return Err(Error::Validation("pack parameters must be positive".into()));
    }
    if !(pack.p_b_min < 0.0 && pack.p_b_max > 0.0) {
        return Err(Error::Validation("pack power limits must bracket zero".into()));
    }
    if model == BatteryModelKind::VSocRc && pack.rc.is_none() {
        return Err(Error::Validation(
            "the RC battery model needs a pack RC pair".into(),
        ));
    }
    Ok(())
}

/// Assembles the smooth minimum-race-time problem for any battery model.
pub fn assemble_nonconvex(
    track: &TrackProfile,
    vehicle: &VehicleParams,
    pack: &PackParams,
    model: BatteryModelKind,
    powertrain: &PowertrainParams,
    disc: &DiscretizationConfig,
) -> Result<AssembledProblem> {
    vehicle.validate()?;
    powertrain.validate()?;
    check_pack(pack, model)?;
    let grid = build_grid(track, disc)?;
    let n = grid.n_nodes();
    let ds = grid.ds;
    let m = vehicle.m_v + pack.m_b;
    let layout = DecisionLayout::new(Formulation::NonConvex, model, n);
    let rc = model == BatteryModelKind::VSocRc;

    let force_scale = m * vehicle.g;
    let torque_scale = force_scale * vehicle.r_w;
    let p_scale = pack.p_b_max.abs().max(pack.p_b_min.abs());

    let at = |k: usize, kind: VarKind| layout.at(k, kind);
    let mut blocks: Vec<Block> = Vec::with_capacity(7 * n);

    let objective = Objective::InverseSpeedSum {
        speed_vars: (0..n - 1).map(|k| at(k, VarKind::Speed)).collect(),
        step: ds,
    };

    for k in 0..n - 1 {
        // State defects over the interval: speed, SoC, and the RC voltage.
        let mut vars = vec![at(k, VarKind::Speed), at(k, VarKind::Soc)];
        let mut scales = vec![vehicle.v_cap, 1.0];
        if rc {
            vars.push(at(k, VarKind::RcVoltage));
            scales.push(V1_SCALE);
        }
        vars.extend([at(k, VarKind::WheelTorque), at(k, VarKind::Current)]);
        vars.extend([at(k + 1, VarKind::Speed), at(k + 1, VarKind::Soc)]);
        if rc {
            vars.push(at(k + 1, VarKind::RcVoltage));
        }
        blocks.push(Block::Smooth(SmoothBlock {
            name: "state-dynamics",
            node: k,
            equality: true,
            vars,
            scales,
            kind: SmoothKind::DynamicsDefect { interval: k },
        }));

        blocks.push(Block::Smooth(SmoothBlock {
            name: "friction-ellipse",
            node: k,
            equality: false,
            vars: vec![at(k, VarKind::WheelTorque), at(k, VarKind::Speed)],
            // The residual is written in squared-force units.
            scales: vec![force_scale * force_scale],
            kind: SmoothKind::FrictionEllipse { node: k },
        }));

        // Gather order [soc, (V1), I_b] shared by the battery boxes.
        let mut batt = vec![at(k, VarKind::Soc)];
        if rc {
            batt.push(at(k, VarKind::RcVoltage));
        }
        batt.push(at(k, VarKind::Current));

        if model == BatteryModelKind::VnR {
            // Constant open-circuit voltage keeps the box linear:
            // V_min <= V_n - R0 I <= V_max.
            blocks.push(Block::Linear(LinearBlock {
                name: "battery-voltage-box",
                node: k,
                equality: false,
                rows: vec![
                    LinRow::new(
                        vec![(at(k, VarKind::Current), pack.r0)],
                        pack.v_min_pack - pack.v_n,
                    ),
                    LinRow::new(
                        vec![(at(k, VarKind::Current), -pack.r0)],
                        pack.v_n - pack.v_max_pack,
                    ),
                ],
                scale: pack.v_n,
            }));
        } else {
            blocks.push(Block::Smooth(SmoothBlock {
                name: "battery-voltage-box",
                node: k,
                equality: false,
                vars: batt.clone(),
                scales: vec![pack.v_n; 2],
                kind: SmoothKind::VoltageBox { node: k },
            }));
        }

        blocks.push(Block::Smooth(SmoothBlock {
            name: "battery-power-box",
            node: k,
            equality: false,
            vars: batt.clone(),
            scales: vec![p_scale; 2],
            kind: SmoothKind::PowerBox { node: k },
        }));

        // T_m v / R_w = V_b I_b eta(I_b), electrical-to-mechanical balance.
        let mut coupling = vec![at(k, VarKind::MotorTorque), at(k, VarKind::Speed)];
        coupling.extend(batt);
        blocks.push(Block::Smooth(SmoothBlock {
            name: "power-coupling",
            node: k,
            equality: true,
            vars: coupling,
            scales: vec![p_scale],
            kind: SmoothKind::PowerCoupling { node: k },
        }));

        blocks.push(Block::Linear(LinearBlock {
            name: "torque-split",
            node: k,
            equality: true,
            rows: vec![LinRow::new(
                vec![
                    (at(k, VarKind::WheelTorque), 1.0),
                    (at(k, VarKind::MotorTorque), -1.0),
                    (at(k, VarKind::BrakeTorque), -1.0),
                ],
                0.0,
            )],
            scale: torque_scale,
        }));
    }

    // Launch state: given speed, full charge, relaxed RC branch.
    blocks.push(Block::Linear(LinearBlock {
        name: "initial-state",
        node: 0,
        equality: true,
        rows: vec![LinRow::new(vec![(at(0, VarKind::Speed), 1.0)], -vehicle.v0)],
        scale: 1.0,
    }));
    blocks.push(Block::Linear(LinearBlock {
        name: "initial-state",
        node: 0,
        equality: true,
        rows: vec![LinRow::new(vec![(at(0, VarKind::Soc), 1.0)], -INITIAL_SOC)],
        scale: 1.0,
    }));
    if rc {
        blocks.push(Block::Linear(LinearBlock {
            name: "initial-state",
            node: 0,
            equality: true,
            rows: vec![LinRow::new(vec![(at(0, VarKind::RcVoltage), 1.0)], 0.0)],
            scale: V1_SCALE,
        }));
    }

    // The terminal node carries no interval, so its controls are pinned.
    blocks.push(Block::Linear(LinearBlock {
        name: "terminal-padding",
        node: n - 1,
        equality: true,
        rows: [
            VarKind::WheelTorque,
            VarKind::MotorTorque,
            VarKind::BrakeTorque,
            VarKind::Current,
        ]
        .iter()
        .map(|&kind| LinRow::new(vec![(at(n - 1, kind), 1.0)], 0.0))
        .collect(),
        scale: 1.0,
    }));

    let n_vars = layout.n_vars();
    let mut lower = vec![f64::NEG_INFINITY; n_vars];
    let mut upper = vec![f64::INFINITY; n_vars];
    for k in 0..n {
        lower[at(k, VarKind::Speed)] = vehicle.v_floor;
        upper[at(k, VarKind::Speed)] = vehicle.v_cap;
        lower[at(k, VarKind::Soc)] = 0.0;
        upper[at(k, VarKind::Soc)] = 1.0;
        lower[at(k, VarKind::Current)] = pack.i_min_pack;
        upper[at(k, VarKind::Current)] = pack.i_max_pack;
        // Brakes only ever retard; a finite floor models actuator limits.
        lower[at(k, VarKind::BrakeTorque)] = powertrain.t_br_min.unwrap_or(f64::NEG_INFINITY);
        upper[at(k, VarKind::BrakeTorque)] = 0.0;
    }

    let ctx = EvalContext {
        vehicle: vehicle.clone(),
        pack: pack.clone(),
        powertrain: *powertrain,
        model,
        m_total: m,
        ds,
        s: grid.s,
        rho: grid.rho,
        theta: grid.theta,
        stage_theta: grid.stage_theta,
    };
    Ok(AssembledProblem { layout, objective, blocks, lower, upper, ctx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{derive_pack, CellParams, OcvCurve, PackConfig, PowerLimits};
    use crate::track::{synth_track, SynthSegment, TrackNode};
    use crate::transcription::problem::BlockTag;

    fn pack24() -> PackParams {
        derive_pack(
            &CellParams::default(),
            &PackConfig { n_s: 209, n_p: 24, alpha: 0.8 },
            PowerLimits::default(),
        )
        .unwrap()
    }

    fn lap900() -> TrackProfile {
        synth_track(&[
            SynthSegment::Straight { length: 300.0 },
            SynthSegment::Arc { length: 150.0, radius: 60.0 },
            SynthSegment::Straight { length: 450.0 },
        ])
        .unwrap()
    }

    fn assemble(model: BatteryModelKind, pack: &PackParams) -> AssembledProblem {
        let track = lap900().resample(15.0).unwrap();
        assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            pack,
            model,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap()
    }

    #[test]
    fn per_node_widths_follow_the_model() {
        let pack = pack24();
        for (model, width) in [
            (BatteryModelKind::VnR, 6),
            (BatteryModelKind::VSocR, 6),
            (BatteryModelKind::VSocRc, 7),
        ] {
            let p = assemble(model, &pack);
            assert_eq!(p.n_nodes(), 61);
            assert_eq!(p.layout.per_node(), width);
            assert_eq!(p.n_vars(), 61 * width);
        }
    }

    #[test]
    fn row_counts_and_audits() {
        let pack = pack24();
        let p = assemble(BatteryModelKind::VSocRc, &pack);
        let stats = p.stats();
        assert_eq!(stats.rows_by_family["state-dynamics"], 60 * 3);
        assert_eq!(stats.rows_by_family["torque-split"], 60);
        assert_eq!(stats.rows_by_family["battery-voltage-box"], 120);
        assert_eq!(stats.rows_by_family["terminal-padding"], 4);
        assert_eq!(stats.rows_by_family["initial-state"], 3);
        assert_eq!(stats.cone_blocks, 0);
        assert!(p.audit_convex().is_err());
        p.audit_sparsity().unwrap();

        let q = assemble(BatteryModelKind::VnR, &pack);
        assert_eq!(q.stats().rows_by_family["state-dynamics"], 60 * 2);
        assert_eq!(q.stats().smooth_rows, 60 * (2 + 1 + 2 + 1));
        // The constant-voltage box stays linear.
        let voltage_blocks: Vec<_> =
            q.blocks.iter().filter(|b| b.name() == "battery-voltage-box").collect();
        assert!(voltage_blocks.iter().all(|b| b.tag() == BlockTag::LinearInequality));
    }

    #[test]
    fn rc_model_requires_an_rc_pair() {
        let mut pack = pack24();
        pack.rc = None;
        let track = lap900().resample(15.0).unwrap();
        let err = assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            &pack,
            BatteryModelKind::VSocRc,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        // The resistive models do not need it.
        pack.rc = None;
        assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            &pack,
            BatteryModelKind::VSocR,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap();
    }

    /// The interval defect must vanish against a dense reference integration
    /// with exact slope lookup, confirming the RK4 stages read the slope at
    /// the interval start, midpoint, and end.
    #[test]
    fn state_defect_tracks_varying_slope() {
        let nodes = vec![
            TrackNode { s: 0.0, rho: 0.0, theta: 0.0 },
            TrackNode { s: 450.0, rho: 0.0, theta: 0.15 },
            TrackNode { s: 900.0, rho: 0.0, theta: 0.3 },
        ];
        let track = TrackProfile::new(nodes, 900.0, 1).unwrap();
        let pack = pack24();
        let vehicle = VehicleParams::default();
        let p = assemble_nonconvex(
            &track,
            &vehicle,
            &pack,
            BatteryModelKind::VSocR,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap();
        let m = p.ctx.m_total;
        for k in [0usize, 17, 41] {
            let block = p
                .blocks
                .iter()
                .find_map(|b| match b {
                    Block::Smooth(s)
                        if s.name == "state-dynamics" && s.node == k =>
                    {
                        Some(s.clone())
                    }
                    _ => None,
                })
                .unwrap();
            let (v0, z0, t_w, i_b) = (24.0, 0.9, 420.0, 130.0);
            // Dense Heun reference with exact slope lookup.
            let steps = 40_000;
            let h = p.ctx.ds / steps as f64;
            let (mut v, mut z) = (v0, z0);
            for i in 0..steps {
                let s = p.ctx.s[k] + i as f64 * h;
                let th = track.sample(s).1;
                let th2 = track.sample(s + h).1;
                let dv = crate::vehicle::speed_derivative_unguarded(v, t_w, th, m, &vehicle);
                let dz = crate::battery::soc_derivative_unguarded(i_b, v, pack.q_b);
                let vt = v + h * dv;
                let zt = z + h * dz;
                let dv2 =
                    crate::vehicle::speed_derivative_unguarded(vt, t_w, th2, m, &vehicle);
                let dz2 = crate::battery::soc_derivative_unguarded(i_b, vt, pack.q_b);
                v += 0.5 * h * (dv + dv2);
                z += 0.5 * h * (dz + dz2);
                let _ = zt;
            }
            let mut x = vec![0.0; p.n_vars()];
            let at = |node, kind| p.layout.at(node, kind);
            x[at(k, VarKind::Speed)] = v0;
            x[at(k, VarKind::Soc)] = z0;
            x[at(k, VarKind::WheelTorque)] = t_w;
            x[at(k, VarKind::Current)] = i_b;
            x[at(k + 1, VarKind::Speed)] = v;
            x[at(k + 1, VarKind::Soc)] = z;
            let rows = p.smooth_values(&block, &x);
            assert!(rows[0].abs() <= 1e-6 * v, "interval {k}: speed defect {}", rows[0]);
            assert!(rows[1].abs() <= 1e-9, "interval {k}: soc defect {}", rows[1]);
        }
    }

    /// With a flat open-circuit table pinned at the nominal cell voltage the
    /// SoC-dependent model must agree with the nominal-voltage model
    /// everywhere the two share blocks.
    #[test]
    fn flat_ocv_reduces_to_nominal_voltage_model() {
        let pack_vn = pack24();
        let mut pack_flat = pack24();
        pack_flat.ocv = OcvCurve::Table(vec![(0.0, 3.6), (0.5, 3.6), (1.0, 3.6)]);
        let p_vn = assemble(BatteryModelKind::VnR, &pack_vn);
        let p_flat = assemble(BatteryModelKind::VSocR, &pack_flat);
        assert_eq!(p_vn.n_vars(), p_flat.n_vars());

        // A deliberately stressed point: fast, deep discharge, heavy torque.
        let mut x = vec![0.0; p_vn.n_vars()];
        for k in 0..p_vn.n_nodes() {
            let at = |kind| p_vn.layout.at(k, kind);
            let f = k as f64;
            x[at(VarKind::Speed)] = 20.0 + 10.0 * (f * 0.37).sin().abs();
            x[at(VarKind::Soc)] = 1.0 - 0.004 * f;
            x[at(VarKind::WheelTorque)] = 500.0 * (f * 0.23).cos();
            x[at(VarKind::MotorTorque)] = x[at(VarKind::WheelTorque)];
            x[at(VarKind::Current)] = 400.0 * (f * 0.11).sin();
        }
        let rep_vn = p_vn.violations(&x);
        let rep_flat = p_flat.violations(&x);
        for family in
            ["battery-voltage-box", "battery-power-box", "power-coupling", "state-dynamics"]
        {
            assert!(
                (rep_vn.family(family) - rep_flat.family(family)).abs() <= 1e-9,
                "{family}: {} vs {}",
                rep_vn.family(family),
                rep_flat.family(family)
            );
        }
    }

    #[test]
    fn brake_bounds_and_objective_shape() {
        let pack = pack24();
        let mut powertrain = PowertrainParams::default();
        powertrain.t_br_min = Some(-2000.0);
        let track = lap900().resample(15.0).unwrap();
        let p = assemble_nonconvex(
            &track,
            &VehicleParams::default(),
            &pack,
            BatteryModelKind::VnR,
            &powertrain,
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap();
        let j = p.layout.at(5, VarKind::BrakeTorque);
        assert_eq!(p.lower[j], -2000.0);
        assert_eq!(p.upper[j], 0.0);
        match &p.objective {
            Objective::InverseSpeedSum { speed_vars, step } => {
                assert_eq!(speed_vars.len(), p.n_nodes() - 1);
                assert_eq!(*step, 15.0);
            }
            _ => panic!("expected the inverse-speed objective"),
        }
        // Equality coupling row, inequality boxes.
        let coupling = p
            .blocks
            .iter()
            .find(|b| b.name() == "power-coupling")
            .unwrap();
        assert_eq!(coupling.tag(), BlockTag::SmoothNonlinear);
        if let Block::Smooth(s) = coupling {
            assert!(s.equality);
        }
    }
}
