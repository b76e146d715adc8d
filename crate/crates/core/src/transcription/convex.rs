//! Second-order-cone assembly of the race problem.
//!
//! Decision variables per node: lethargy dt/ds, speed v, kinetic energy
//! E_kin, wheel torque T_w, pack energy E_b, open-circuit force F_oc, and
//! battery force F_b. The lethargy and speed/energy relaxations plus the
//! battery loss relaxation turn every nonlinearity into a cone; the dynamics
//! are exactly linear because the kinetic-energy ODE is affine in state and
//! control, which RK4 preserves.

use crate::battery::{BatteryModelKind, PackParams};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::powertrain::PowertrainParams;
use crate::track::TrackProfile;
use crate::transcription::layout::{DecisionLayout, Formulation, VarKind};
use crate::transcription::problem::{
    AssembledProblem, Block, ConeBlock, EvalContext, LinRow, LinearBlock, Objective,
};
use crate::transcription::{
    build_grid, stage_indexer, DiscretizationConfig, INITIAL_SOC,
};
use crate::vehicle::{kinetic_derivative, VehicleParams};

/// Affine one-step map E_{k+1} = alpha E_k + beta T_w + gamma of the
/// kinetic-energy dynamics over one interval, extracted by probing the RK4
/// step at (0,0), (1,0), (0,1). Exact because the ODE is affine.
fn kinetic_step_coeffs(
    stages: [f64; 3],
    s_k: f64,
    ds: f64,
    m: f64,
    vehicle: &VehicleParams,
) -> (f64, f64, f64) {
    let probe = |e: f64, t_w: f64| -> f64 {
        let mut stage = stage_indexer();
        let mut f = |_s: f64, x: &[f64; 1]| {
            [kinetic_derivative(x[0], t_w, stages[stage()], m, vehicle)]
        };
        rk4_step(&mut f, s_k, ds, &[e])[0]
    };
    let gamma = probe(0.0, 0.0);
    let alpha = probe(1.0, 0.0) - gamma;
    let beta = probe(0.0, 1.0) - gamma;
    (alpha, beta, gamma)
}

fn check_pack(pack: &PackParams) -> Result<()> {
    if !(pack.v_n > 0.0 && pack.r0 > 0.0 && pack.q_b > 0.0 && pack.e_b_max > 0.0) {
        return Err(Error::Validation("pack parameters must be positive".into()));
    }
    if !(pack.p_b_min < 0.0 && pack.p_b_max > 0.0) {
        return Err(Error::Validation("pack power limits must bracket zero".into()));
    }
    Ok(())
}

/// Assembles the conic minimum-race-time problem. Only the nominal-voltage
/// battery model admits this relaxation; other models are rejected.
pub fn assemble_convex(
    track: &TrackProfile,
    vehicle: &VehicleParams,
    pack: &PackParams,
    model: BatteryModelKind,
    powertrain: &PowertrainParams,
    disc: &DiscretizationConfig,
) -> Result<AssembledProblem> {
    if model != BatteryModelKind::VnR {
        return Err(Error::Unsupported(format!(
            "the conic formulation requires the nominal-voltage battery model, got {}",
            model.name()
        )));
    }
    vehicle.validate()?;
    powertrain.validate()?;
    check_pack(pack)?;
    let grid = build_grid(track, disc)?;
    let n = grid.n_nodes();
    let ds = grid.ds;
    let m = vehicle.m_v + pack.m_b;
    let layout = DecisionLayout::new(Formulation::Convex, model, n);

    let e_scale = 0.5 * m * vehicle.v_cap * vehicle.v_cap;
    let force_scale = m * vehicle.g;
    // Cone components must be balanced per cone: the interior-point scaling
    // can only multiply a whole second-order cone by one scalar. The
    // geometric mean puts v/v_bar and dtds*v_bar in symmetric ranges.
    let v_bar = (vehicle.v_floor * vehicle.v_cap).sqrt();
    let f_bar = force_scale;

    let at = |k: usize, kind: VarKind| layout.at(k, kind);
    let mut blocks: Vec<Block> = Vec::with_capacity(10 * n);

    // min sum dt/ds * ds, left-Riemann over the intervals.
    let objective =
        Objective::Linear((0..n - 1).map(|k| (at(k, VarKind::Lethargy), ds)).collect());

    for k in 0..n {
        let (dtds, v, e) =
            (at(k, VarKind::Lethargy), at(k, VarKind::Speed), at(k, VarKind::KineticEnergy));
        // v * dtds >= 1 as a rotated cone, with the v-bar normalization.
        blocks.push(Block::Cone(ConeBlock {
            name: "lethargy-cone",
            node: k,
            vector: vec![
                LinRow::new(vec![], 2.0),
                LinRow::new(vec![(v, 1.0 / v_bar), (dtds, -v_bar)], 0.0),
            ],
            scalar: LinRow::new(vec![(v, 1.0 / v_bar), (dtds, v_bar)], 0.0),
            scale: 1.0,
        }));
        // E_kin >= (M/2) v^2, epigraph form of the speed relaxation.
        let u_coef = 2.0 * (m / (2.0 * e_scale)).sqrt();
        blocks.push(Block::Cone(ConeBlock {
            name: "kinetic-relaxation",
            node: k,
            vector: vec![
                LinRow::new(vec![(v, u_coef)], 0.0),
                LinRow::new(vec![(e, 1.0 / e_scale)], -1.0),
            ],
            scalar: LinRow::new(vec![(e, 1.0 / e_scale)], 1.0),
            scale: 1.0,
        }));
    }

    for k in 0..n - 1 {
        let (dtds, e, t_w) =
            (at(k, VarKind::Lethargy), at(k, VarKind::KineticEnergy), at(k, VarKind::WheelTorque));
        let (e_b, f_oc, f_b) =
            (at(k, VarKind::PackEnergy), at(k, VarKind::OpenCircuitForce), at(k, VarKind::BatteryForce));

        // Tire friction ellipse with the kinetic-energy substitution:
        // ||(T_w/(mu_x R_w), 2 rho E/mu_y)|| <= M g cos(theta) + (2 C_down/M) E.
        blocks.push(Block::Cone(ConeBlock {
            name: "friction-ellipse",
            node: k,
            vector: vec![
                LinRow::new(vec![(t_w, 1.0 / (vehicle.mu_x * vehicle.r_w))], 0.0),
                LinRow::new(vec![(e, 2.0 * grid.rho[k] / vehicle.mu_y)], 0.0),
            ],
            scalar: LinRow::new(
                vec![(e, 2.0 * vehicle.c_down / m)],
                m * vehicle.g * grid.theta[k].cos(),
            ),
            scale: force_scale,
        }));

        // E_{k+1} = alpha E_k + beta T_w + gamma, the RK4 step written flat.
        let (alpha, beta, gamma) =
            kinetic_step_coeffs(grid.stage_theta[k], grid.s[k], ds, m, vehicle);
        blocks.push(Block::Linear(LinearBlock {
            name: "kinetic-dynamics",
            node: k,
            equality: true,
            rows: vec![LinRow::new(
                vec![(at(k + 1, VarKind::KineticEnergy), 1.0), (e, -alpha), (t_w, -beta)],
                -gamma,
            )],
            scale: e_scale,
        }));

        // dE_b/ds = -F_oc integrates exactly for a piecewise-constant control;
        // the RK4 step reduces to the same row.
        blocks.push(Block::Linear(LinearBlock {
            name: "battery-energy-dynamics",
            node: k,
            equality: true,
            rows: vec![LinRow::new(
                vec![(at(k + 1, VarKind::PackEnergy), 1.0), (e_b, -1.0), (f_oc, ds)],
                0.0,
            )],
            scale: pack.e_b_max,
        }));

        // (F_oc - F_b) dtds >= R0 F_oc^2 / V_n^2: internal-loss relaxation as
        // a rotated cone, with the F-bar and v-bar normalizations.
        let loss_coef = 2.0 * (pack.r0 * v_bar / f_bar).sqrt() / pack.v_n;
        blocks.push(Block::Cone(ConeBlock {
            name: "battery-cone",
            node: k,
            vector: vec![
                LinRow::new(vec![(f_oc, loss_coef)], 0.0),
                LinRow::new(
                    vec![(f_oc, 1.0 / f_bar), (f_b, -1.0 / f_bar), (dtds, -v_bar)],
                    0.0,
                ),
            ],
            scalar: LinRow::new(
                vec![(f_oc, 1.0 / f_bar), (f_b, -1.0 / f_bar), (dtds, v_bar)],
                0.0,
            ),
            scale: 1.0,
        }));

        // Current box I_min <= F_oc/(V_n dtds) <= I_max, multiplied through
        // by dtds > 0 to stay linear.
        blocks.push(Block::Linear(LinearBlock {
            name: "battery-current-box",
            node: k,
            equality: false,
            rows: vec![
                LinRow::new(vec![(f_oc, 1.0 / pack.v_n), (dtds, -pack.i_max_pack)], 0.0),
                LinRow::new(vec![(dtds, pack.i_min_pack), (f_oc, -1.0 / pack.v_n)], 0.0),
            ],
            scale: pack.i_max_pack,
        }));

        // Terminal-voltage box V_min <= V_n - R0 F_oc/(V_n dtds) <= V_max,
        // likewise scaled by dtds.
        blocks.push(Block::Linear(LinearBlock {
            name: "battery-voltage-box",
            node: k,
            equality: false,
            rows: vec![
                LinRow::new(
                    vec![(dtds, pack.v_min_pack - pack.v_n), (f_oc, pack.r0 / pack.v_n)],
                    0.0,
                ),
                LinRow::new(
                    vec![(dtds, pack.v_n - pack.v_max_pack), (f_oc, -pack.r0 / pack.v_n)],
                    0.0,
                ),
            ],
            scale: pack.v_n,
        }));

        // Terminal-power box P_min dtds <= F_b <= P_max dtds.
        blocks.push(Block::Linear(LinearBlock {
            name: "battery-power-box",
            node: k,
            equality: false,
            rows: vec![
                LinRow::new(vec![(dtds, pack.p_b_min), (f_b, -1.0)], 0.0),
                LinRow::new(vec![(f_b, 1.0), (dtds, -pack.p_b_max)], 0.0),
            ],
            scale: force_scale,
        }));

        // Drivetrain efficiency as the double inequality
        // T_w/R_w <= eta F_b and T_w/R_w <= F_b/eta.
        blocks.push(Block::Linear(LinearBlock {
            name: "power-coupling",
            node: k,
            equality: false,
            rows: vec![
                LinRow::new(vec![(t_w, 1.0 / vehicle.r_w), (f_b, -powertrain.eta)], 0.0),
                LinRow::new(vec![(t_w, 1.0 / vehicle.r_w), (f_b, -1.0 / powertrain.eta)], 0.0),
            ],
            scale: force_scale,
        }));
    }

    // Launch state: given speed, tight kinetic energy, full pack.
    let e0 = 0.5 * m * vehicle.v0 * vehicle.v0;
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
        rows: vec![LinRow::new(vec![(at(0, VarKind::KineticEnergy), 1.0)], -e0)],
        scale: e_scale,
    }));
    blocks.push(Block::Linear(LinearBlock {
        name: "initial-state",
        node: 0,
        equality: true,
        rows: vec![LinRow::new(
            vec![(at(0, VarKind::PackEnergy), 1.0)],
            -INITIAL_SOC * pack.e_b_max,
        )],
        scale: pack.e_b_max,
    }));

    // The terminal node carries no interval, so its controls are pinned.
    blocks.push(Block::Linear(LinearBlock {
        name: "terminal-padding",
        node: n - 1,
        equality: true,
        rows: [VarKind::WheelTorque, VarKind::OpenCircuitForce, VarKind::BatteryForce]
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
        lower[at(k, VarKind::Lethargy)] = 1.0 / vehicle.v_cap;
        upper[at(k, VarKind::Lethargy)] = 1.0 / vehicle.v_floor;
        lower[at(k, VarKind::KineticEnergy)] = 0.5 * m * vehicle.v_floor * vehicle.v_floor;
        upper[at(k, VarKind::KineticEnergy)] = e_scale;
        lower[at(k, VarKind::PackEnergy)] = 0.0;
        upper[at(k, VarKind::PackEnergy)] = pack.e_b_max;
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
    use crate::battery::{derive_pack, CellParams, PackConfig, PowerLimits};
    use crate::track::{synth_track, SynthSegment, TrackNode};
    use proptest::prelude::*;

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

    fn assemble_10_laps() -> AssembledProblem {
        let track = lap900().resample(15.0).unwrap().tile_laps(10).unwrap();
        assemble_convex(
            &track,
            &VehicleParams::default(),
            &pack24(),
            BatteryModelKind::VnR,
            &PowertrainParams::default(),
            &DiscretizationConfig { ds: 15.0 },
        )
        .unwrap()
    }

    #[test]
    fn node_and_variable_counts() {
        let p = assemble_10_laps();
        assert_eq!(p.n_nodes(), 601);
        assert_eq!(p.layout.per_node(), 7);
        assert_eq!(p.n_vars(), 4207);
        let stats = p.stats();
        assert_eq!(stats.rows_by_family["kinetic-dynamics"], 600);
        assert_eq!(stats.rows_by_family["lethargy-cone"], 601 * 3);
        assert_eq!(stats.rows_by_family["power-coupling"], 1200);
        assert_eq!(stats.smooth_rows, 0);
    }

    #[test]
    fn audits_pass() {
        let p = assemble_10_laps();
        p.audit_convex().unwrap();
        p.audit_sparsity().unwrap();
    }

    #[test]
    fn rejects_soc_dependent_models() {
        let track = lap900().resample(15.0).unwrap();
        for model in [BatteryModelKind::VSocR, BatteryModelKind::VSocRc] {
            let err = assemble_convex(
                &track,
                &VehicleParams::default(),
                &pack24(),
                model,
                &PowertrainParams::default(),
                &DiscretizationConfig { ds: 15.0 },
            )
            .unwrap_err();
            assert!(matches!(err, Error::Unsupported(_)));
        }
    }

    /// Builds a full variable vector by forward-simulating the two linear
    /// dynamics under random controls, then leans on the violation report to
    /// confirm the assembled equality rows vanish on it.
    #[test]
    fn dynamics_rows_vanish_on_simulated_trajectories() {
        let p = assemble_10_laps();
        let vehicle = p.ctx.vehicle.clone();
        let pack = p.ctx.pack.clone();
        let m = p.ctx.m_total;
        let n = p.n_nodes();
        let mut x = vec![0.0; p.n_vars()];
        let mut e = 0.5 * m * vehicle.v0 * vehicle.v0;
        let mut e_b = pack.e_b_max;
        for k in 0..n {
            let at = |kind| p.layout.at(k, kind);
            x[at(VarKind::KineticEnergy)] = e;
            x[at(VarKind::PackEnergy)] = e_b;
            let v = (2.0 * e / m).sqrt().max(vehicle.v_floor);
            x[at(VarKind::Speed)] = if k == 0 { vehicle.v0 } else { v };
            x[at(VarKind::Lethargy)] = 1.0 / x[at(VarKind::Speed)];
            if k == n - 1 {
                break;
            }
            // Deterministic pseudo-random control wiggle.
            let torque = 300.0 + 250.0 * ((k as f64) * 0.7).sin();
            let f_oc = 800.0 + 500.0 * ((k as f64) * 0.31).cos();
            x[at(VarKind::WheelTorque)] = torque;
            x[at(VarKind::OpenCircuitForce)] = f_oc;
            x[at(VarKind::BatteryForce)] = f_oc * 0.9;
            let (alpha, beta, gamma) =
                kinetic_step_coeffs(p.ctx.stage_theta[k], p.ctx.s[k], p.ctx.ds, m, &vehicle);
            e = alpha * e + beta * torque + gamma;
            e_b -= p.ctx.ds * f_oc;
        }
        let rep = p.violations(&x);
        assert!(rep.family("kinetic-dynamics") < 1e-12, "{rep:?}");
        assert!(rep.family("battery-energy-dynamics") < 1e-12);
        assert!(rep.family("initial-state") < 1e-12);
        assert!(rep.family("terminal-padding") < 1e-12);
    }

    /// The flattened RK4 row must match a dense reference integration when
    /// the slope varies across the interval; a wrong stage order would show
    /// up at the third-order term.
    #[test]
    fn kinetic_step_tracks_varying_slope() {
        let nodes = vec![
            TrackNode { s: 0.0, rho: 0.0, theta: 0.0 },
            TrackNode { s: 450.0, rho: 0.0, theta: 0.15 },
            TrackNode { s: 900.0, rho: 0.0, theta: 0.3 },
        ];
        let track = TrackProfile::new(nodes, 900.0, 1).unwrap();
        let vehicle = VehicleParams::default();
        let m = 700.0;
        let ds = 15.0;
        let grid =
            super::super::build_grid(&track, &DiscretizationConfig { ds }).unwrap();
        for k in [0usize, 10, 30, 59] {
            let (alpha, beta, gamma) =
                kinetic_step_coeffs(grid.stage_theta[k], grid.s[k], ds, m, &vehicle);
            let (e0, t_w) = (8.0e5, 420.0);
            let predicted = alpha * e0 + beta * t_w + gamma;
            // Dense Euler reference with exact slope lookup.
            let steps = 40_000;
            let h = ds / steps as f64;
            let mut e = e0;
            for i in 0..steps {
                let s = grid.s[k] + i as f64 * h;
                let th = track.sample(s).1;
                let de = kinetic_derivative(e, t_w, th, m, &vehicle);
                // Heun correction keeps the reference ahead of RK4's error.
                let e_tilde = e + h * de;
                let th2 = track.sample(s + h).1;
                let de2 = kinetic_derivative(e_tilde, t_w, th2, m, &vehicle);
                e += 0.5 * h * (de + de2);
            }
            assert!(
                (predicted - e).abs() <= 1e-6 * e.abs(),
                "interval {k}: rk4 {predicted} vs dense {e}"
            );
        }
    }

    #[test]
    fn battery_cone_encodes_loss_inequality() {
        let p = assemble_10_laps();
        let cone = p
            .blocks
            .iter()
            .find_map(|b| match b {
                Block::Cone(c) if c.name == "battery-cone" && c.node == 3 => Some(c),
                _ => None,
            })
            .unwrap();
        let pack = &p.ctx.pack;
        let mut x = vec![0.0; p.n_vars()];
        let at = |kind| p.layout.at(3, kind);
        for (f_oc, f_b, dtds) in [
            (1000.0, 900.0, 0.03),
            (1000.0, 999.9, 0.03),
            (-500.0, -620.0, 0.05),
            (-500.0, -501.0, 0.05),
            (2000.0, 1500.0, 0.01),
        ] {
            x[at(VarKind::OpenCircuitForce)] = f_oc;
            x[at(VarKind::BatteryForce)] = f_b;
            x[at(VarKind::Lethargy)] = dtds;
            let algebra = (f_oc - f_b) * dtds - pack.r0 * f_oc * f_oc / (pack.v_n * pack.v_n);
            let cone_feasible = cone.residual(&x) <= 1e-12;
            assert_eq!(cone_feasible, algebra >= -1e-12, "foc={f_oc} fb={f_b} dtds={dtds}");
        }
    }

    #[test]
    fn relaxation_and_lethargy_cones_encode_their_inequalities() {
        let p = assemble_10_laps();
        let m = p.ctx.m_total;
        let find = |name: &str| {
            p.blocks
                .iter()
                .find_map(|b| match b {
                    Block::Cone(c) if c.name == name && c.node == 7 => Some(c.clone()),
                    _ => None,
                })
                .unwrap()
        };
        let relax = find("kinetic-relaxation");
        let leth = find("lethargy-cone");
        let mut x = vec![0.0; p.n_vars()];
        let at = |kind| p.layout.at(7, kind);
        for (v, e_ratio, dtds_ratio) in
            [(30.0, 1.0, 1.0), (30.0, 1.1, 1.2), (30.0, 0.97, 0.8), (5.0, 2.0, 3.0)]
        {
            x[at(VarKind::Speed)] = v;
            x[at(VarKind::KineticEnergy)] = e_ratio * 0.5 * m * v * v;
            x[at(VarKind::Lethargy)] = dtds_ratio / v;
            assert_eq!(relax.residual(&x) <= 1e-9, e_ratio >= 1.0 - 1e-12);
            assert_eq!(leth.residual(&x) <= 1e-9, dtds_ratio >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn ellipse_cone_matches_squared_residual_at_tight_energy() {
        let p = assemble_10_laps();
        let m = p.ctx.m_total;
        // Node 22 sits on the arc (s = 330 m).
        let k = 22;
        assert!(p.ctx.rho[k] != 0.0);
        let cone = p
            .blocks
            .iter()
            .find_map(|b| match b {
                Block::Cone(c) if c.name == "friction-ellipse" && c.node == k => Some(c),
                _ => None,
            })
            .unwrap();
        let mut x = vec![0.0; p.n_vars()];
        for (v, t_w) in [(20.0, 500.0), (24.0, 100.0), (26.0, 0.0), (30.0, 0.0)] {
            x[p.layout.at(k, VarKind::Speed)] = v;
            x[p.layout.at(k, VarKind::KineticEnergy)] = 0.5 * m * v * v;
            x[p.layout.at(k, VarKind::WheelTorque)] = t_w;
            let squared = crate::vehicle::friction_ellipse_residual(
                t_w,
                v,
                p.ctx.rho[k],
                p.ctx.theta[k],
                m,
                &p.ctx.vehicle,
            );
            assert_eq!(cone.residual(&x) <= 1e-9, squared <= 1e-6, "v={v} tw={t_w}");
        }
    }

    proptest! {
        /// Every assembled linear row is affine: r(lx + (1-l)y) combines.
        #[test]
        fn linear_rows_combine_affinely(seed in 0u64..500, lambda in 0.0f64..1.0) {
            let p = assemble_10_laps();
            let n = p.n_vars();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            };
            let x: Vec<f64> = (0..n).map(|_| next() * 1e4).collect();
            let y: Vec<f64> = (0..n).map(|_| next() * 1e4).collect();
            let z: Vec<f64> = x.iter().zip(&y).map(|(&a, &b)| lambda * a + (1.0 - lambda) * b).collect();
            for block in p.blocks.iter().take(40) {
                if let Block::Linear(b) = block {
                    for row in &b.rows {
                        let combined = lambda * row.eval(&x) + (1.0 - lambda) * row.eval(&y);
                        prop_assert!((row.eval(&z) - combined).abs() <= 1e-6 * (1.0 + combined.abs()));
                    }
                }
            }
        }
    }
}
