//! Minimum-race-time and battery-sizing library for electric racing cars.
//!
//! The library solves the joint lap-time / battery-pack sizing problem two
//! ways: a second-order-cone relaxation in the kinetic-energy variables and
//! the original non-convex statement in speed/SoC variables, plus the
//! diagnostics that connect them (relaxation tightness, equivalent internal
//! resistance, equivalent drivetrain efficiency, sizing sweeps).

pub mod battery;
pub mod error;
pub mod integrate;
pub mod powertrain;
pub mod presets;
pub mod scalar;
pub mod sizing;
pub mod solution;
pub mod solver;
pub mod track;
pub mod transcription;
pub mod vehicle;

pub use battery::{
    derive_pack, BatteryModelKind, BatteryState, CellParams, OcvCurve, PackConfig, PackParams,
    PackRc, PowerLimits, RcPair,
};
pub use error::{Error, Result};
pub use powertrain::{PowertrainParams, TorqueSplit};
pub use sizing::{grid_search, n_s_for_voltage_cap, race_time, SizingCurve, SizingEntry, SizingScenario};
pub use solution::RaceSolution;
pub use solver::{
    initialize_from_convex, solve_conic, solve_nlp, SolveReport, SolveSettings, SolveStatus,
};
pub use track::{SynthSegment, TrackNode, TrackProfile};
pub use transcription::{
    assemble_convex, assemble_nonconvex, AssembledProblem, DiscretizationConfig, Formulation,
    ProblemStats, VarKind, ViolationReport,
};
pub use vehicle::VehicleParams;
