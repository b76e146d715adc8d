//! Bundled reference inputs: two deterministic synthetic laps, the default
//! cell in a reduced-capacity variant, and the vehicle/start conventions the
//! example scenarios share.
//!
//! Everything here is plain data; the functions exist so tests, benches, and
//! the command line agree on one source of truth for each scenario.

use crate::battery::CellParams;
use crate::track::{synth_track, SynthSegment, TrackProfile};
use crate::vehicle::VehicleParams;

/// 3 km reference lap: six corners, radii 30 to 120 m, straights 150 to
/// 600 m. Every segment length divides by 15 m so the default grid lands on
/// the joints.
pub fn synth_a() -> TrackProfile {
    synth_track(&[
        SynthSegment::Straight { length: 600.0 },
        SynthSegment::Arc { length: 240.0, radius: 120.0 },
        SynthSegment::Straight { length: 300.0 },
        SynthSegment::Arc { length: 120.0, radius: -30.0 },
        SynthSegment::Straight { length: 180.0 },
        SynthSegment::Arc { length: 180.0, radius: 60.0 },
        SynthSegment::Straight { length: 360.0 },
        SynthSegment::Arc { length: 135.0, radius: -45.0 },
        SynthSegment::Straight { length: 150.0 },
        SynthSegment::Arc { length: 270.0, radius: 90.0 },
        SynthSegment::Straight { length: 285.0 },
        SynthSegment::Arc { length: 180.0, radius: -75.0 },
    ])
    .expect("the bundled lap table is valid")
}

/// 1.2 km short lap for quick runs and the energy-limited race.
pub fn synth_b() -> TrackProfile {
    synth_track(&[
        SynthSegment::Straight { length: 300.0 },
        SynthSegment::Arc { length: 90.0, radius: -30.0 },
        SynthSegment::Straight { length: 150.0 },
        SynthSegment::Arc { length: 120.0, radius: 50.0 },
        SynthSegment::Straight { length: 180.0 },
        SynthSegment::Arc { length: 75.0, radius: -25.0 },
        SynthSegment::Arc { length: 150.0, radius: 70.0 },
        SynthSegment::Straight { length: 135.0 },
    ])
    .expect("the bundled lap table is valid")
}

/// Default-cell electricals with capacity cut to 0.4 Ah, so pack energy binds
/// within a few laps of [`synth_b`] instead of after an hour of racing.
pub fn energy_limited_cell() -> CellParams {
    CellParams { q_cell_ah: 0.4, ..CellParams::default() }
}

/// Rolling-start vehicle shared by the bundled scenarios. A 15 m step cannot
/// resolve a crawl-speed launch in the speed-form dynamics, so scenarios that
/// compare the two formulations start at speed.
pub fn rolling_start_vehicle() -> VehicleParams {
    VehicleParams { v0: 25.0, ..VehicleParams::default() }
}
