//! Decision-variable indexing for both formulations.

use serde::Serialize;

use crate::battery::BatteryModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Formulation {
    #[serde(rename = "convex")]
    Convex,
    #[serde(rename = "nonconvex")]
    NonConvex,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Convex => "convex",
            Formulation::NonConvex => "nonconvex",
        }
    }
}

/// Every decision symbol of either formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// dt/ds [s/m] (convex).
    Lethargy,
    /// v [m/s].
    Speed,
    /// E_kin [J] (convex).
    KineticEnergy,
    /// T_w [N m].
    WheelTorque,
    /// E_b [J] (convex).
    PackEnergy,
    /// F_oc [N] (convex).
    OpenCircuitForce,
    /// F_b [N] (convex).
    BatteryForce,
    /// zeta [-] (non-convex).
    Soc,
    /// V1 [V] (non-convex, RC model).
    RcVoltage,
    /// T_m [N m] (non-convex).
    MotorTorque,
    /// T_br [N m] (non-convex).
    BrakeTorque,
    /// I_b [A] (non-convex).
    Current,
}

impl VarKind {
    pub fn symbol(self) -> &'static str {
        match self {
            VarKind::Lethargy => "dtds",
            VarKind::Speed => "v",
            VarKind::KineticEnergy => "E_kin",
            VarKind::WheelTorque => "T_w",
            VarKind::PackEnergy => "E_b",
            VarKind::OpenCircuitForce => "F_oc",
            VarKind::BatteryForce => "F_b",
            VarKind::Soc => "soc",
            VarKind::RcVoltage => "V1",
            VarKind::MotorTorque => "T_m",
            VarKind::BrakeTorque => "T_br",
            VarKind::Current => "I_b",
        }
    }
}

const CONVEX_KINDS: [VarKind; 7] = [
    VarKind::Lethargy,
    VarKind::Speed,
    VarKind::KineticEnergy,
    VarKind::WheelTorque,
    VarKind::PackEnergy,
    VarKind::OpenCircuitForce,
    VarKind::BatteryForce,
];

const NONCONVEX_KINDS: [VarKind; 6] = [
    VarKind::Speed,
    VarKind::Soc,
    VarKind::WheelTorque,
    VarKind::MotorTorque,
    VarKind::BrakeTorque,
    VarKind::Current,
];

const NONCONVEX_RC_KINDS: [VarKind; 7] = [
    VarKind::Speed,
    VarKind::Soc,
    VarKind::RcVoltage,
    VarKind::WheelTorque,
    VarKind::MotorTorque,
    VarKind::BrakeTorque,
    VarKind::Current,
];

/// Node-major variable map: node k's variables occupy the contiguous range
/// [k * per_node, (k+1) * per_node).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLayout {
    formulation: Formulation,
    model: BatteryModelKind,
    kinds: &'static [VarKind],
    n_nodes: usize,
}

impl DecisionLayout {
    pub fn new(formulation: Formulation, model: BatteryModelKind, n_nodes: usize) -> Self {
        let kinds: &'static [VarKind] = match (formulation, model) {
            (Formulation::Convex, _) => &CONVEX_KINDS,
            (Formulation::NonConvex, BatteryModelKind::VSocRc) => &NONCONVEX_RC_KINDS,
            (Formulation::NonConvex, _) => &NONCONVEX_KINDS,
        };
        Self { formulation, model, kinds, n_nodes }
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn model(&self) -> BatteryModelKind {
        self.model
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn per_node(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_nodes * self.kinds.len()
    }

    pub fn kinds(&self) -> &'static [VarKind] {
        self.kinds
    }

    pub fn has(&self, kind: VarKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn index(&self, node: usize, kind: VarKind) -> Option<usize> {
        if node >= self.n_nodes {
            return None;
        }
        self.kinds
            .iter()
            .position(|&k| k == kind)
            .map(|offset| node * self.kinds.len() + offset)
    }

    /// Index of a symbol that the layout is known to carry.
    pub fn at(&self, node: usize, kind: VarKind) -> usize {
        self.index(node, kind).unwrap_or_else(|| {
            panic!("layout {:?}/{:?} lacks {kind:?} at node {node}", self.formulation, self.model)
        })
    }

    pub fn var_info(&self, var: usize) -> (usize, VarKind) {
        let per = self.kinds.len();
        (var / per, self.kinds[var % per])
    }

    /// The node a variable belongs to.
    pub fn node_of(&self, var: usize) -> usize {
        var / self.kinds.len()
    }
}
