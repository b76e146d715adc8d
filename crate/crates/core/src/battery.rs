//! Cell parameters, pack scaling, and the three equivalent-circuit model
//! variants with their operating limits.
//!
//! Model vocabulary: Vn-R treats the open-circuit voltage as the constant
//! nominal value behind a series resistance; VSoC-R replaces the constant by
//! an SoC-dependent open-circuit curve; VSoC-RC adds one RC pair, chosen as
//! the slowest of the identified sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which equivalent-circuit model drives the battery constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BatteryModelKind {
    #[serde(rename = "vn-r")]
    VnR,
    #[serde(rename = "vsoc-r")]
    VSocR,
    #[serde(rename = "vsoc-rc")]
    VSocRc,
}

impl BatteryModelKind {
    pub fn name(self) -> &'static str {
        match self {
            BatteryModelKind::VnR => "vn-r",
            BatteryModelKind::VSocR => "vsoc-r",
            BatteryModelKind::VSocRc => "vsoc-rc",
        }
    }
}

/// Open-circuit voltage versus state of charge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OcvCurve {
    /// Constant nominal voltage (the Vn-R assumption).
    Constant,
    /// Piecewise-linear breakpoints (zeta, v_oc), zeta strictly increasing
    /// over [0, 1].
    Table(Vec<(f64, f64)>),
}

impl OcvCurve {
    /// Validates breakpoint ordering, coverage, monotonicity, and range.
    pub fn validate(&self, cell: &CellParams) -> Result<()> {
        let OcvCurve::Table(pts) = self else { return Ok(()) };
        if pts.len() < 2 {
            return Err(Error::Validation("OCV table needs at least two breakpoints".into()));
        }
        if pts[0].0 != 0.0 || pts[pts.len() - 1].0 != 1.0 {
            return Err(Error::Validation("OCV table must cover zeta in [0, 1]".into()));
        }
        for w in pts.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Validation(format!(
                    "OCV breakpoints must increase, found zeta {} after {}",
                    w[1].0, w[0].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Validation(format!(
                    "OCV must be non-decreasing, found {} V after {} V",
                    w[1].1, w[0].1
                )));
            }
        }
        for &(z, v) in pts {
            if v < cell.v_min || v > cell.v_max {
                return Err(Error::Validation(format!(
                    "OCV value {v} V at zeta {z} outside [{}, {}] V",
                    cell.v_min, cell.v_max
                )));
            }
        }
        Ok(())
    }
}

/// One RC pair of the Thevenin model, cell level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RcPair {
    pub r1: f64,
    pub c1: f64,
}

impl RcPair {
    pub fn time_constant(&self) -> f64 {
        self.r1 * self.c1
    }
}

/// Cell technology datasheet values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellParams {
    /// Capacity [A h].
    pub q_cell_ah: f64,
    /// Mass [kg].
    pub m_cell: f64,
    /// Nominal voltage [V].
    pub v_n: f64,
    /// Voltage limits [V].
    pub v_min: f64,
    pub v_max: f64,
    /// Current limits [A]; negative is charging.
    pub i_min: f64,
    pub i_max: f64,
    /// Series resistance [Ohm].
    pub r0_cell: f64,
    pub ocv: OcvCurve,
    /// Candidate RC pairs; pack derivation keeps the slowest.
    pub rc_pairs: Vec<RcPair>,
}

impl Default for CellParams {
    /// Sony VTC6 values with the three identified RC sets.
    fn default() -> Self {
        Self {
            q_cell_ah: 3.0,
            m_cell: 0.0466,
            v_n: 3.6,
            v_min: 2.0,
            v_max: 4.2,
            i_min: -6.0,
            i_max: 30.0,
            r0_cell: 0.013,
            ocv: synthetic_default_ocv(),
            rc_pairs: vec![
                RcPair { r1: 2.28e-3, c1: 4047.82 },
                RcPair { r1: 15.04e-3, c1: 995.59 },
                RcPair { r1: 20.65e-3, c1: 1344.85 },
            ],
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        for (x, name) in [
            (self.q_cell_ah, "q_cell_ah"),
            (self.m_cell, "m_cell"),
            (self.v_n, "v_n"),
            (self.v_max, "v_max"),
            (self.i_max, "i_max"),
            (self.r0_cell, "r0_cell"),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Validation(format!("cell {name} must be positive, got {x}")));
            }
        }
        if !(self.v_min < self.v_n && self.v_n < self.v_max) {
            return Err(Error::Validation(format!(
                "cell voltages must satisfy v_min < v_n < v_max, got {} / {} / {}",
                self.v_min, self.v_n, self.v_max
            )));
        }
        if !(self.i_min < 0.0) {
            return Err(Error::Validation(format!(
                "cell i_min must be negative (charging), got {}",
                self.i_min
            )));
        }
        for rc in &self.rc_pairs {
            if !(rc.r1 > 0.0 && rc.c1 > 0.0) {
                return Err(Error::Validation(format!(
                    "RC pair values must be positive, got r1 = {}, c1 = {}",
                    rc.r1, rc.c1
                )));
            }
        }
        self.ocv.validate(self)
    }
}

/// Pack topology: series count, parallel count, packaging factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PackConfig {
    pub n_s: u32,
    pub n_p: u32,
    /// Fraction of pack mass that is cells; case and ancillaries are the rest.
    pub alpha: f64,
}

impl PackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s < 1 || self.n_p < 1 {
            return Err(Error::Validation("pack needs at least one cell in each direction".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!(
                "packaging factor must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Series count from the pack voltage cap: floor(V_cap / v_max_cell).
pub fn series_count_for_voltage_cap(v_cap_pack: f64, cell: &CellParams) -> u32 {
    (v_cap_pack / cell.v_max).floor() as u32
}

/// Pack-level RC pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PackRc {
    pub r1: f64,
    pub c1: f64,
}

/// Pack-level electrical and mass parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackParams {
    pub n_s: u32,
    pub n_p: u32,
    /// Nominal pack voltage N_s v_n [V].
    pub v_n: f64,
    /// Series resistance (N_s/N_p) r0_cell [Ohm].
    pub r0: f64,
    /// Charge capacity N_p q_cell [A s].
    pub q_b: f64,
    /// Pack mass N_s N_p m_cell / alpha [kg].
    pub m_b: f64,
    pub i_min_pack: f64,
    pub i_max_pack: f64,
    pub v_min_pack: f64,
    pub v_max_pack: f64,
    pub p_b_min: f64,
    pub p_b_max: f64,
    /// RC pair scaled to pack level; the cell time constant is preserved.
    pub rc: Option<PackRc>,
    /// Energy capacity Q_b V_n [J] of the convex formulation.
    pub e_b_max: f64,
    /// Cell OCV curve retained for the SoC-dependent models.
    pub ocv: OcvCurve,
}

/// Battery power limits fed into pack derivation [W].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLimits {
    pub p_b_min: f64,
    pub p_b_max: f64,
}

impl Default for PowerLimits {
    fn default() -> Self {
        // Table II friction-brake-assisted recuperation window.
        Self { p_b_min: -600e3, p_b_max: 350e3 }
    }
}

/// Scales cell values to the pack and picks the slowest RC pair.
pub fn derive_pack(cell: &CellParams, cfg: &PackConfig, limits: PowerLimits) -> Result<PackParams> {
    cell.validate()?;
    cfg.validate()?;
    if !(limits.p_b_min < 0.0 && limits.p_b_max > 0.0) {
        return Err(Error::Validation(format!(
            "power limits must bracket zero, got [{}, {}]",
            limits.p_b_min, limits.p_b_max
        )));
    }
    let ns = f64::from(cfg.n_s);
    let np = f64::from(cfg.n_p);
    let q_b = np * cell.q_cell_ah * 3600.0;
    let v_n = ns * cell.v_n;
    let rc = cell
        .rc_pairs
        .iter()
        .max_by(|a, b| a.time_constant().total_cmp(&b.time_constant()))
        .map(|rc| PackRc { r1: ns / np * rc.r1, c1: np / ns * rc.c1 });
    Ok(PackParams {
        n_s: cfg.n_s,
        n_p: cfg.n_p,
        v_n,
        r0: ns / np * cell.r0_cell,
        q_b,
        m_b: ns * np * cell.m_cell / cfg.alpha,
        i_min_pack: np * cell.i_min,
        i_max_pack: np * cell.i_max,
        v_min_pack: ns * cell.v_min,
        v_max_pack: ns * cell.v_max,
        p_b_min: limits.p_b_min,
        p_b_max: limits.p_b_max,
        rc,
        e_b_max: q_b * v_n,
        ocv: cell.ocv.clone(),
    })
}

/// Pack open-circuit voltage at a given state of charge.
pub fn ocv_pack(curve: &OcvCurve, zeta: f64, n_s: u32, v_n_cell: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Domain(format!("state of charge {zeta} outside [0, 1]")));
    }
    Ok(f64::from(n_s) * ocv_cell_unguarded(curve, zeta, v_n_cell))
}

/// Cell OCV lookup without the domain check; zeta is clamped to the table.
///
/// Piecewise-linear interpolation branches on the real part, so dual-number
/// evaluation returns the active segment's slope.
#[inline]
pub fn ocv_cell_unguarded<R: Real>(curve: &OcvCurve, zeta: R, v_n_cell: f64) -> R {
    match curve {
        OcvCurve::Constant => R::constant(v_n_cell),
        OcvCurve::Table(pts) => {
            let z = zeta.re();
            if z <= pts[0].0 {
                return R::constant(pts[0].1);
            }
            let last = pts.len() - 1;
            if z >= pts[last].0 {
                return R::constant(pts[last].1);
            }
            let hi = pts.partition_point(|&(zb, _)| zb <= z);
            let (z0, v0) = pts[hi - 1];
            let (z1, v1) = pts[hi];
            let slope = (v1 - v0) / (z1 - z0);
            R::constant(v0) + R::constant(slope) * (zeta - R::constant(z0))
        }
    }
}

/// dzeta/ds of the SoC state equation.
#[inline]
pub fn soc_derivative_unguarded<R: Real>(i_b: R, v: R, q_b: f64) -> R {
    -(i_b / (R::constant(q_b) * v))
}

/// dzeta/ds with the speed-floor domain check.
pub fn soc_derivative(i_b: f64, v: f64, q_b: f64, v_floor: f64) -> Result<f64> {
    if v < v_floor {
        return Err(Error::Domain(format!("speed {v} below the floor {v_floor}")));
    }
    Ok(soc_derivative_unguarded(i_b, v, q_b))
}

/// dV1/ds of the RC-pair state equation.
#[inline]
pub fn rc_derivative_unguarded<R: Real>(v1: R, i_b: R, v: R, rc: PackRc) -> R {
    (i_b - v1 / R::constant(rc.r1)) / (R::constant(rc.c1) * v)
}

/// dV1/ds with the speed-floor domain check.
pub fn rc_derivative(v1: f64, i_b: f64, v: f64, rc: PackRc, v_floor: f64) -> Result<f64> {
    if v < v_floor {
        return Err(Error::Domain(format!("speed {v} below the floor {v_floor}")));
    }
    if !(rc.c1 > 0.0) {
        return Err(Error::Domain(format!("capacitance {} must be positive", rc.c1)));
    }
    Ok(rc_derivative_unguarded(v1, i_b, v, rc))
}

/// Battery state snapshot; optional fields exist only for their models.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatteryState {
    pub zeta: f64,
    pub v1: Option<f64>,
    pub e_b: Option<f64>,
}

/// Terminal voltage V_b of the selected model.
pub fn terminal_voltage(
    model: BatteryModelKind,
    state: &BatteryState,
    i_b: f64,
    pack: &PackParams,
) -> Result<f64> {
    let oc = match model {
        BatteryModelKind::VnR => pack.v_n,
        BatteryModelKind::VSocR | BatteryModelKind::VSocRc => {
            ocv_pack(&pack.ocv, state.zeta, pack.n_s, pack.v_n / f64::from(pack.n_s))?
        }
    };
    let v1 = match model {
        BatteryModelKind::VSocRc => state
            .v1
            .ok_or_else(|| Error::State("VSoC-RC terminal voltage needs the RC state V1".into()))?,
        _ => 0.0,
    };
    Ok(oc - pack.r0 * i_b - v1)
}

/// Generic terminal voltage for constraint evaluation; `zeta` and `v1` are
/// ignored by the models that do not read them.
#[inline]
pub fn terminal_voltage_unguarded<R: Real>(
    model: BatteryModelKind,
    zeta: R,
    v1: R,
    i_b: R,
    pack: &PackParams,
) -> R {
    let v_n_cell = pack.v_n / f64::from(pack.n_s);
    let oc = match model {
        BatteryModelKind::VnR => R::constant(pack.v_n),
        BatteryModelKind::VSocR | BatteryModelKind::VSocRc => {
            R::constant(f64::from(pack.n_s)) * ocv_cell_unguarded(&pack.ocv, zeta, v_n_cell)
        }
    };
    let rc_drop = match model {
        BatteryModelKind::VSocRc => v1,
        _ => R::constant(0.0),
    };
    oc - R::constant(pack.r0) * i_b - rc_drop
}

/// Signed residuals of the operating boxes; each entry feasible iff <= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitResiduals {
    pub current_low: f64,
    pub current_high: f64,
    pub voltage_low: f64,
    pub voltage_high: f64,
    pub soc_low: f64,
    pub soc_high: f64,
    pub power_low: f64,
    pub power_high: f64,
}

impl LimitResiduals {
    pub fn worst(&self) -> f64 {
        [
            self.current_low,
            self.current_high,
            self.voltage_low,
            self.voltage_high,
            self.soc_low,
            self.soc_high,
            self.power_low,
            self.power_high,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates the current, voltage, SoC, and power boxes at one point.
pub fn limit_residuals(
    model: BatteryModelKind,
    state: &BatteryState,
    i_b: f64,
    pack: &PackParams,
) -> Result<LimitResiduals> {
    let v_b = terminal_voltage(model, state, i_b, pack)?;
    let p_b = v_b * i_b;
    Ok(LimitResiduals {
        current_low: pack.i_min_pack - i_b,
        current_high: i_b - pack.i_max_pack,
        voltage_low: pack.v_min_pack - v_b,
        voltage_high: v_b - pack.v_max_pack,
        soc_low: -state.zeta,
        soc_high: state.zeta - 1.0,
        power_low: pack.p_b_min - p_b,
        power_high: p_b - pack.p_b_max,
    })
}

/// Synthetic default cell OCV: 21 breakpoints from 3.0 V at empty to 4.2 V at
/// full, with the Li-ion plateau shape. Clearly a stand-in for datasheet data;
/// its mean (about 3.586 V) sits slightly below the nominal 3.6 V, so
/// SoC-aware models see marginally less usable energy than the nominal model.
pub fn synthetic_default_ocv() -> OcvCurve {
    OcvCurve::Table(vec![
        (0.00, 3.00),
        (0.05, 3.17),
        (0.10, 3.31),
        (0.15, 3.42),
        (0.20, 3.48),
        (0.25, 3.52),
        (0.30, 3.55),
        (0.35, 3.57),
        (0.40, 3.59),
        (0.45, 3.60),
        (0.50, 3.61),
        (0.55, 3.62),
        (0.60, 3.63),
        (0.65, 3.64),
        (0.70, 3.65),
        (0.75, 3.66),
        (0.80, 3.68),
        (0.85, 3.71),
        (0.90, 3.78),
        (0.95, 3.93),
        (1.00, 4.20),
    ])
}
