//! Assembled-problem representation shared by both formulations.
//!
//! A problem is a list of tagged constraint blocks over a node-major variable
//! vector, plus simple bounds. Linear rows and cones are stored explicitly;
//! smooth rows are stored as residual descriptors evaluated on demand, with
//! dual numbers supplying exact Jacobians for the linearizing solver.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::battery::{
    rc_derivative_unguarded, soc_derivative_unguarded, terminal_voltage_unguarded,
    BatteryModelKind, PackParams, PackRc,
};
use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::powertrain::{coupling_residual, PowertrainParams};
use crate::scalar::{Dual, Real};
use crate::transcription::layout::{DecisionLayout, Formulation};
use crate::transcription::stage_indexer;
use crate::vehicle::{friction_ellipse_residual, speed_derivative_unguarded, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BlockTag {
    LinearEquality,
    LinearInequality,
    SecondOrderCone,
    SmoothNonlinear,
}

impl BlockTag {
    pub fn name(self) -> &'static str {
        match self {
            BlockTag::LinearEquality => "linear-equality",
            BlockTag::LinearInequality => "linear-inequality",
            BlockTag::SecondOrderCone => "second-order-cone",
            BlockTag::SmoothNonlinear => "smooth-nonlinear",
        }
    }
}

/// One affine form sum(c_j x_j) + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub coeffs: Vec<(usize, f64)>,
    pub offset: f64,
}

impl LinRow {
    pub fn new(coeffs: Vec<(usize, f64)>, offset: f64) -> Self {
        Self { coeffs, offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>() + self.offset
    }
}

/// Linear rows; equalities read "= 0", inequalities "<= 0".
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBlock {
    pub name: &'static str,
    pub node: usize,
    pub equality: bool,
    pub rows: Vec<LinRow>,
    /// Characteristic magnitude dividing residuals for violation reporting.
    pub scale: f64,
}

impl LinearBlock {
    pub fn tag(&self) -> BlockTag {
        if self.equality {
            BlockTag::LinearEquality
        } else {
            BlockTag::LinearInequality
        }
    }
}

/// Second-order cone ||vector(x)||_2 <= scalar(x).
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub name: &'static str,
    pub node: usize,
    pub vector: Vec<LinRow>,
    pub scalar: LinRow,
    pub scale: f64,
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        self.vector.len() + 1
    }

    /// Signed residual ||u|| - t; feasible iff <= 0.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let norm =
            self.vector.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt();
        norm - self.scalar.eval(x)
    }
}

/// Which smooth residual a block evaluates; each variant documents the var
/// gather order its `vars` list must follow.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothKind {
    /// RK4 defect of the speed/SoC (and V1 for the RC model) states over one
    /// interval. vars: [v_k, soc_k, (V1_k), T_w_k, I_b_k, v_k1, soc_k1, (V1_k1)].
    DynamicsDefect { interval: usize },
    /// Tire force limit at a node. vars: [T_w_k, v_k].
    FrictionEllipse { node: usize },
    /// Terminal-voltage box, two rows (low, high). vars: [soc_k, (V1_k), I_b_k].
    VoltageBox { node: usize },
    /// Battery terminal power box, two rows. vars: [soc_k, (V1_k), I_b_k].
    PowerBox { node: usize },
    /// Motor power coupling, one row. vars: [T_m_k, v_k, soc_k, (V1_k), I_b_k].
    PowerCoupling { node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothBlock {
    pub name: &'static str,
    pub node: usize,
    pub equality: bool,
    /// Global variable indices, in the order the kind's evaluator expects.
    pub vars: Vec<usize>,
    /// Characteristic magnitude per row.
    pub scales: Vec<f64>,
    pub kind: SmoothKind,
}

impl SmoothBlock {
    pub fn n_rows(&self) -> usize {
        self.scales.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Linear(LinearBlock),
    Cone(ConeBlock),
    Smooth(SmoothBlock),
}

impl Block {
    pub fn tag(&self) -> BlockTag {
        match self {
            Block::Linear(b) => b.tag(),
            Block::Cone(_) => BlockTag::SecondOrderCone,
            Block::Smooth(_) => BlockTag::SmoothNonlinear,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Block::Linear(b) => b.name,
            Block::Cone(b) => b.name,
            Block::Smooth(b) => b.name,
        }
    }

    pub fn node(&self) -> usize {
        match self {
            Block::Linear(b) => b.node,
            Block::Cone(b) => b.node,
            Block::Smooth(b) => b.node,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Block::Linear(b) => b.rows.len(),
            Block::Cone(b) => b.dim(),
            Block::Smooth(b) => b.n_rows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// min sum(c_j x_j).
    Linear(Vec<(usize, f64)>),
    /// min sum(step / x_i) over the listed speed variables.
    InverseSpeedSum { speed_vars: Vec<usize>, step: f64 },
}

/// Physical context every residual evaluation reads.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub vehicle: VehicleParams,
    pub pack: PackParams,
    pub powertrain: PowertrainParams,
    pub model: BatteryModelKind,
    /// Total mass, chassis plus pack [kg].
    pub m_total: f64,
    pub ds: f64,
    pub s: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub stage_theta: Vec<[f64; 3]>,
}

impl EvalContext {
    fn rc(&self) -> PackRc {
        // Only read when the model is VSoC-RC; assembly rejects a missing pair.
        self.pack.rc.unwrap_or(PackRc { r1: 1.0, c1: 1.0 })
    }

    fn uses_rc(&self) -> bool {
        matches!(self.model, BatteryModelKind::VSocRc)
    }

    /// Evaluates a smooth block's residual rows on gathered inputs `xb`.
    pub fn smooth_residuals<R: Real>(&self, kind: &SmoothKind, xb: &[R]) -> Vec<R> {
        match *kind {
            SmoothKind::DynamicsDefect { interval } => {
                let off = usize::from(self.uses_rc());
                let v1_0 = if off == 1 { xb[2] } else { R::constant(0.0) };
                let (t_w, i_b) = (xb[2 + off], xb[3 + off]);
                let stages = self.stage_theta[interval];
                let mut stage = stage_indexer();
                let (m, q_b, rc) = (self.m_total, self.pack.q_b, self.rc());
                let use_rc = off == 1;
                let vehicle = &self.vehicle;
                let mut f = |_s: f64, x: &[R; 3]| {
                    let th = stages[stage()];
                    let dv = speed_derivative_unguarded(x[0], t_w, th, m, vehicle);
                    let dz = soc_derivative_unguarded(i_b, x[0], q_b);
                    let dv1 = if use_rc {
                        rc_derivative_unguarded(x[2], i_b, x[0], rc)
                    } else {
                        R::constant(0.0)
                    };
                    [dv, dz, dv1]
                };
                let next =
                    rk4_step(&mut f, self.s[interval], self.ds, &[xb[0], xb[1], v1_0]);
                let base = 4 + off;
                let mut rows = vec![xb[base] - next[0], xb[base + 1] - next[1]];
                if use_rc {
                    rows.push(xb[base + 2] - next[2]);
                }
                rows
            }
            SmoothKind::FrictionEllipse { node } => {
                vec![friction_ellipse_residual(
                    xb[0],
                    xb[1],
                    self.rho[node],
                    self.theta[node],
                    self.m_total,
                    &self.vehicle,
                )]
            }
            SmoothKind::VoltageBox { .. } => {
                let (v_b, _) = self.terminal_state(xb, 0);
                vec![
                    R::constant(self.pack.v_min_pack) - v_b,
                    v_b - R::constant(self.pack.v_max_pack),
                ]
            }
            SmoothKind::PowerBox { .. } => {
                let (v_b, i_b) = self.terminal_state(xb, 0);
                let p = v_b * i_b;
                vec![
                    R::constant(self.pack.p_b_min) - p,
                    p - R::constant(self.pack.p_b_max),
                ]
            }
            SmoothKind::PowerCoupling { .. } => {
                let (v_b, i_b) = self.terminal_state(xb, 2);
                vec![coupling_residual(
                    xb[0],
                    xb[1],
                    v_b,
                    i_b,
                    &self.powertrain,
                    self.vehicle.r_w,
                )]
            }
        }
    }

    /// Shared gather for (V_b, I_b) from a [soc, (V1), I_b] tail starting at
    /// `base` in the block's variable list.
    fn terminal_state<R: Real>(&self, xb: &[R], base: usize) -> (R, R) {
        let off = usize::from(self.uses_rc());
        let soc = xb[base];
        let v1 = if off == 1 { xb[base + 1] } else { R::constant(0.0) };
        let i_b = xb[base + 1 + off];
        (terminal_voltage_unguarded(self.model, soc, v1, i_b, &self.pack), i_b)
    }
}

/// Per-family maximum scaled violations at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub max_scaled: f64,
    pub by_family: BTreeMap<&'static str, f64>,
    /// Family and node of the worst row.
    pub worst: Option<(&'static str, usize)>,
}

impl ViolationReport {
    pub fn family(&self, name: &str) -> f64 {
        self.by_family.get(name).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemStats {
    pub nodes: usize,
    pub variables: usize,
    pub equality_rows: usize,
    pub inequality_rows: usize,
    pub cone_blocks: usize,
    pub cone_rows: usize,
    pub smooth_rows: usize,
    pub finite_bounds: usize,
    pub rows_by_family: BTreeMap<&'static str, usize>,
}

impl fmt::Display for ProblemStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes={}", self.nodes)?;
        writeln!(f, "variables={}", self.variables)?;
        writeln!(f, "equality_rows={}", self.equality_rows)?;
        writeln!(f, "inequality_rows={}", self.inequality_rows)?;
        writeln!(f, "cone_blocks={}", self.cone_blocks)?;
        writeln!(f, "cone_rows={}", self.cone_rows)?;
        writeln!(f, "smooth_rows={}", self.smooth_rows)?;
        writeln!(f, "finite_bounds={}", self.finite_bounds)?;
        for (name, rows) in &self.rows_by_family {
            writeln!(f, "rows.{name}={rows}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledProblem {
    pub layout: DecisionLayout,
    pub objective: Objective,
    pub blocks: Vec<Block>,
    /// Simple bounds; infinities mean unbounded.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ctx: EvalContext,
}

impl AssembledProblem {
    pub fn formulation(&self) -> Formulation {
        self.layout.formulation()
    }

    pub fn model(&self) -> BatteryModelKind {
        self.layout.model()
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.n_nodes()
    }

    pub fn eval_objective(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Linear(coeffs) => coeffs.iter().map(|&(j, c)| c * x[j]).sum(),
            Objective::InverseSpeedSum { speed_vars, step } => {
                speed_vars.iter().map(|&j| step / x[j]).sum()
            }
        }
    }

    /// Residual rows of a smooth block at `x`.
    pub fn smooth_values(&self, block: &SmoothBlock, x: &[f64]) -> Vec<f64> {
        let xb: Vec<f64> = block.vars.iter().map(|&j| x[j]).collect();
        self.ctx.smooth_residuals::<f64>(&block.kind, &xb)
    }

    /// Residual rows and dense Jacobian (rows x block vars) of a smooth block.
    pub fn smooth_jacobian(&self, block: &SmoothBlock, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = block.vars.len();
        let base: Vec<f64> = block.vars.iter().map(|&j| x[j]).collect();
        let mut values = Vec::new();
        let mut jac: Vec<Vec<f64>> = Vec::new();
        for seed in 0..n {
            let xb: Vec<Dual> = base
                .iter()
                .enumerate()
                .map(|(j, &v)| if j == seed { Dual::seed(v) } else { Dual::new(v, 0.0) })
                .collect();
            let rows = self.ctx.smooth_residuals::<Dual>(&block.kind, &xb);
            if seed == 0 {
                values = rows.iter().map(|r| r.re).collect();
                jac = vec![vec![0.0; n]; rows.len()];
            }
            for (r, val) in rows.iter().enumerate() {
                jac[r][seed] = val.eps;
            }
        }
        if n == 0 {
            values = self.smooth_values(block, x);
            jac = vec![vec![]; values.len()];
        }
        (values, jac)
    }

    /// Maximum scaled violation per constraint family, bounds included.
    pub fn violations(&self, x: &[f64]) -> ViolationReport {
        let mut by_family: BTreeMap<&'static str, f64> = BTreeMap::new();
        let mut worst: Option<(&'static str, usize)> = None;
        let mut max_scaled = 0.0f64;
        let mut note = |family: &'static str, node: usize, scaled: f64| {
            let entry = by_family.entry(family).or_insert(0.0);
            if scaled > *entry {
                *entry = scaled;
            }
            if scaled > max_scaled {
                max_scaled = scaled;
                worst = Some((family, node));
            }
        };
        for block in &self.blocks {
            match block {
                Block::Linear(b) => {
                    for row in &b.rows {
                        let r = row.eval(x);
                        let v = if b.equality { r.abs() } else { r.max(0.0) };
                        note(b.name, b.node, v / b.scale);
                    }
                }
                Block::Cone(b) => {
                    note(b.name, b.node, b.residual(x).max(0.0) / b.scale);
                }
                Block::Smooth(b) => {
                    let rows = self.smooth_values(b, x);
                    for (r, &val) in rows.iter().enumerate() {
                        let v = if b.equality { val.abs() } else { val.max(0.0) };
                        note(b.name, b.node, v / b.scales[r]);
                    }
                }
            }
        }
        for j in 0..self.n_vars() {
            let mut v = 0.0f64;
            if self.lower[j].is_finite() {
                v = v.max(self.lower[j] - x[j]);
            }
            if self.upper[j].is_finite() {
                v = v.max(x[j] - self.upper[j]);
            }
            let scale = 1.0f64.max(self.lower[j].abs().min(self.upper[j].abs()));
            note("variable-bounds", self.layout.node_of(j), v / scale);
        }
        ViolationReport { max_scaled, by_family, worst }
    }

    /// Confirms the problem is conic: no smooth rows, linear objective.
    pub fn audit_convex(&self) -> Result<()> {
        if !matches!(self.objective, Objective::Linear(_)) {
            return Err(Error::Validation("objective is not linear".into()));
        }
        for block in &self.blocks {
            if block.tag() == BlockTag::SmoothNonlinear {
                return Err(Error::Validation(format!(
                    "smooth block `{}` at node {} in a conic problem",
                    block.name(),
                    block.node()
                )));
            }
        }
        Ok(())
    }

    /// Confirms every block touches at most two adjacent nodes.
    pub fn audit_sparsity(&self) -> Result<()> {
        let check = |name: &'static str, node: usize, vars: &mut dyn Iterator<Item = usize>| {
            let (mut lo, mut hi) = (usize::MAX, 0usize);
            for j in vars {
                let n = self.layout.node_of(j);
                lo = lo.min(n);
                hi = hi.max(n);
            }
            if lo != usize::MAX && hi - lo > 1 {
                return Err(Error::Validation(format!(
                    "block `{name}` at node {node} spans nodes {lo}..{hi}"
                )));
            }
            Ok(())
        };
        for block in &self.blocks {
            match block {
                Block::Linear(b) => {
                    for row in &b.rows {
                        check(b.name, b.node, &mut row.coeffs.iter().map(|&(j, _)| j))?;
                    }
                }
                Block::Cone(b) => {
                    let mut vars = b
                        .vector
                        .iter()
                        .chain(std::iter::once(&b.scalar))
                        .flat_map(|r| r.coeffs.iter().map(|&(j, _)| j));
                    check(b.name, b.node, &mut vars)?;
                }
                Block::Smooth(b) => {
                    check(b.name, b.node, &mut b.vars.iter().copied())?;
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> ProblemStats {
        let mut stats = ProblemStats {
            nodes: self.n_nodes(),
            variables: self.n_vars(),
            equality_rows: 0,
            inequality_rows: 0,
            cone_blocks: 0,
            cone_rows: 0,
            smooth_rows: 0,
            finite_bounds: 0,
            rows_by_family: BTreeMap::new(),
        };
        for block in &self.blocks {
            *stats.rows_by_family.entry(block.name()).or_insert(0) += block.n_rows();
            match block {
                Block::Linear(b) => {
                    if b.equality {
                        stats.equality_rows += b.rows.len();
                    } else {
                        stats.inequality_rows += b.rows.len();
                    }
                }
                Block::Cone(b) => {
                    stats.cone_blocks += 1;
                    stats.cone_rows += b.dim();
                }
                Block::Smooth(b) => stats.smooth_rows += b.n_rows(),
            }
        }
        stats.finite_bounds = (0..self.n_vars())
            .map(|j| {
                usize::from(self.lower[j].is_finite()) + usize::from(self.upper[j].is_finite())
            })
            .sum();
        stats
    }
}
