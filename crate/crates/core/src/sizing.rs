//! Outer layer of the joint design problem: sweep the parallel-string count,
//! solve the inner minimum-race-time problem per candidate pack, and report
//! the sizing curve with its optimum.
//!
//! The sweep is a plain grid search. Candidates are independent, so they run
//! in parallel; the curve itself is assembled in ascending string order no
//! matter how the solves are scheduled.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::battery::{derive_pack, BatteryModelKind, CellParams, PackConfig, PowerLimits};
use crate::error::{Error, Result};
use crate::powertrain::PowertrainParams;
use crate::solution::RaceSolution;
use crate::solver::{
    initialize_from_convex, solve_conic, solve_nlp, SolveReport, SolveSettings,
};
use crate::track::TrackProfile;
use crate::transcription::{
    assemble_convex, assemble_nonconvex, DiscretizationConfig, Formulation,
};
use crate::vehicle::VehicleParams;

/// Largest series count whose full-charge voltage stays under the bus cap.
pub fn n_s_for_voltage_cap(v_bus_cap: f64, cell: &CellParams) -> Result<u32> {
    if !(v_bus_cap > 0.0) || !(cell.v_max > 0.0) {
        return Err(Error::Validation(format!(
            "voltage cap rule needs positive voltages, got bus {} and cell {}",
            v_bus_cap, cell.v_max
        )));
    }
    let n = (v_bus_cap / cell.v_max).floor();
    if n < 1.0 {
        return Err(Error::Validation(format!(
            "bus cap {} V admits no series cells at {} V each",
            v_bus_cap, cell.v_max
        )));
    }
    Ok(n as u32)
}

/// One sizing study: the race, the cell, the pack geometry under sweep, and
/// how the inner problem is posed and solved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingScenario {
    pub track: TrackProfile,
    pub cell: CellParams,
    /// Cells in series, fixed by the bus-voltage cap.
    pub n_s: u32,
    /// Parallel-string counts to sweep.
    pub np_range: RangeInclusive<u32>,
    /// Cell fraction of the pack mass.
    pub alpha: f64,
    pub power: PowerLimits,
    pub model: BatteryModelKind,
    pub formulation: Formulation,
    pub vehicle: VehicleParams,
    pub powertrain: PowertrainParams,
    pub disc: DiscretizationConfig,
    pub settings: SolveSettings,
}

impl SizingScenario {
    pub fn validate(&self) -> Result<()> {
        if self.np_range.is_empty() {
            return Err(Error::Validation(
                "the parallel-string sweep range is empty".into(),
            ));
        }
        if self.formulation == Formulation::Convex && self.model != BatteryModelKind::VnR {
            return Err(Error::Unsupported(format!(
                "the convex formulation only supports the nominal-voltage model, got {}",
                self.model.name()
            )));
        }
        Ok(())
    }

    fn pack(&self, n_p: u32) -> Result<crate::battery::PackParams> {
        derive_pack(
            &self.cell,
            &PackConfig { n_s: self.n_s, n_p, alpha: self.alpha },
            self.power,
        )
    }
}

/// One point of the sizing curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingEntry {
    pub n_p: u32,
    /// Present only when the solve produced a usable optimum.
    pub race_time: Option<f64>,
    pub status: crate::solver::SolveStatus,
    pub terminal_soc: Option<f64>,
}

/// Race time versus parallel-string count, with the usable minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingCurve {
    /// Entries in ascending string order, one per swept count.
    pub entries: Vec<SizingEntry>,
    /// String count of the fastest usable entry.
    pub argmin_np: u32,
}

impl SizingCurve {
    pub fn argmin_entry(&self) -> &SizingEntry {
        self.entries
            .iter()
            .find(|e| e.n_p == self.argmin_np)
            .expect("the argmin is always one of the entries")
    }
}

/// Solves the inner minimum-race-time problem for one candidate pack.
///
/// The smooth formulation is always warm-started from the nominal-voltage
/// conic relaxation on the same grid. When the relaxation already fails, its
/// verdict is returned for the smooth problem too: without a usable relaxed
/// point there is nothing to start the linearizing solver from, and a pack
/// the relaxation rejects cannot finish under the stricter dynamics either.
///
/// The returned time is only meaningful when the report status is usable;
/// `grid_search` records failed candidates by status alone.
pub fn race_time(
    scenario: &SizingScenario,
    n_p: u32,
) -> Result<(f64, RaceSolution, SolveReport)> {
    scenario.validate()?;
    if !scenario.np_range.contains(&n_p) {
        return Err(Error::Validation(format!(
            "{} parallel strings lies outside the swept range {}..={}",
            n_p,
            scenario.np_range.start(),
            scenario.np_range.end()
        )));
    }
    let pack = scenario.pack(n_p)?;
    match scenario.formulation {
        Formulation::Convex => {
            let problem = assemble_convex(
                &scenario.track,
                &scenario.vehicle,
                &pack,
                scenario.model,
                &scenario.powertrain,
                &scenario.disc,
            )?;
            let (sol, report) = solve_conic(&problem, &scenario.settings)?;
            Ok((report.objective, sol, report))
        }
        Formulation::NonConvex => {
            let relaxed = assemble_convex(
                &scenario.track,
                &scenario.vehicle,
                &pack,
                BatteryModelKind::VnR,
                &scenario.powertrain,
                &scenario.disc,
            )?;
            let (conic_sol, conic_report) = solve_conic(&relaxed, &scenario.settings)?;
            if !conic_report.status.is_usable() {
                let mut report = conic_report;
                report.formulation = Formulation::NonConvex;
                report.model = scenario.model;
                return Ok((report.objective, conic_sol, report));
            }
            let problem = assemble_nonconvex(
                &scenario.track,
                &scenario.vehicle,
                &pack,
                scenario.model,
                &scenario.powertrain,
                &scenario.disc,
            )?;
            let x0 = initialize_from_convex(&conic_sol, &problem)?;
            let (sol, mut report) = solve_nlp(&problem, Some(x0), &scenario.settings)?;
            report.conic_iterations += conic_report.conic_iterations;
            report.wall_time_s += conic_report.wall_time_s;
            Ok((report.objective, sol, report))
        }
    }
}

/// Evaluates every swept string count and assembles the sizing curve.
///
/// Failed candidates keep their slot with the failure status and no time;
/// the argmin ranges over usable entries only. A sweep with no usable entry
/// is an error, since the curve then has no optimum to report.
pub fn grid_search(scenario: &SizingScenario) -> Result<SizingCurve> {
    scenario.validate()?;
    let counts: Vec<u32> = scenario.np_range.clone().collect();
    let entries = counts
        .par_iter()
        .map(|&n_p| {
            let (time, sol, report) = race_time(scenario, n_p)?;
            let usable = report.status.is_usable();
            let e_b_max = scenario.pack(n_p)?.e_b_max;
            Ok(SizingEntry {
                n_p,
                race_time: usable.then_some(time),
                status: report.status,
                terminal_soc: if usable { sol.terminal_soc(e_b_max) } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin_np = entries
        .iter()
        .filter_map(|e| e.race_time.map(|t| (e.n_p, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n_p, _)| n_p)
        .ok_or_else(|| {
            Error::Solver("no swept pack size produced a usable optimum".into())
        })?;
    Ok(SizingCurve { entries, argmin_np })
}
