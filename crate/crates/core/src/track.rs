//! Race-line profiles: curvature and slope versus arc length.
//!
//! A profile is a list of nodes sampled along the lap. A freshly loaded,
//! resampled, or synthesized profile is closed: its last node sits exactly at
//! `lap_length`. Tiling to a multi-lap race drops the duplicate junction
//! nodes, leaving a half-open grid whose total length `S` is the last node
//! position plus one spacing. Queries beyond the last node wrap periodically,
//! which matches the physical situation of repeated laps.

use serde::Serialize;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Width of the transition inserted at segment joints by [`synth_track`] so
/// that linear interpolation reproduces piecewise-constant curvature exactly.
const JOINT_EPS: f64 = 1e-6;

/// Shortest admissible synthetic segment [m]; protects the joint transitions.
const MIN_SEGMENT_LEN: f64 = 1e-3;

/// One sample of the race line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackNode {
    /// Arc length from the lap start [m].
    pub s: f64,
    /// Signed curvature [1/m]; positive turns left.
    pub rho: f64,
    /// Road slope [rad].
    pub theta: f64,
}

/// Race-line profile over one lap or a tiled race horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackProfile {
    nodes: Vec<TrackNode>,
    lap_length: f64,
    n_laps: u32,
}

impl TrackProfile {
    /// Builds a profile and validates the node invariants.
    pub fn new(nodes: Vec<TrackNode>, lap_length: f64, n_laps: u32) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Validation("profile needs at least two nodes".into()));
        }
        if lap_length <= 0.0 || !lap_length.is_finite() {
            return Err(Error::Validation(format!("lap_length {lap_length} must be positive")));
        }
        if n_laps < 1 {
            return Err(Error::Validation("n_laps must be at least 1".into()));
        }
        if nodes[0].s != 0.0 {
            return Err(Error::Validation(format!(
                "first node must sit at s = 0, found {}",
                nodes[0].s
            )));
        }
        for pair in nodes.windows(2) {
            if pair[1].s <= pair[0].s {
                return Err(Error::Validation(format!(
                    "non-monotone arc length at s = {}",
                    pair[1].s
                )));
            }
        }
        let total = lap_length * f64::from(n_laps);
        for n in &nodes {
            if !n.rho.is_finite() || n.rho.abs() >= 1.0 {
                return Err(Error::Validation(format!("curvature {} at s = {} out of range", n.rho, n.s)));
            }
            if !n.theta.is_finite() || n.theta.abs() >= std::f64::consts::FRAC_PI_4 {
                return Err(Error::Validation(format!("slope {} at s = {} out of range", n.theta, n.s)));
            }
            if n.s > total * (1.0 + 1e-12) {
                return Err(Error::Validation(format!("node s = {} beyond race length {total}", n.s)));
            }
        }
        Ok(Self { nodes, lap_length, n_laps })
    }

    pub fn nodes(&self) -> &[TrackNode] {
        &self.nodes
    }

    pub fn lap_length(&self) -> f64 {
        self.lap_length
    }

    pub fn n_laps(&self) -> u32 {
        self.n_laps
    }

    /// Total race length S [m].
    pub fn total_length(&self) -> f64 {
        self.lap_length * f64::from(self.n_laps)
    }

    /// Grid spacing if the profile is uniform (deviation below 1e-9 of the
    /// mean spacing), else `None`.
    pub fn spacing(&self) -> Option<f64> {
        let n = self.nodes.len();
        let ds = (self.nodes[n - 1].s - self.nodes[0].s) / (n - 1) as f64;
        for pair in self.nodes.windows(2) {
            if ((pair[1].s - pair[0].s) - ds).abs() > 1e-9 * ds {
                return None;
            }
        }
        Some(ds)
    }

    fn is_closed(&self) -> bool {
        let last = self.nodes[self.nodes.len() - 1].s;
        (self.total_length() - last).abs() <= 1e-9 * self.total_length().max(1.0)
    }

    /// Linear interpolation of (rho, theta) at arc length `s`.
    ///
    /// Queries past the last node wrap around to the first node, which treats
    /// the lap junctions of a tiled race as periodic. `s` beyond the total
    /// length folds back modulo the race length.
    pub fn sample(&self, s: f64) -> (f64, f64) {
        let total = self.total_length();
        let mut s = s.max(0.0);
        if s > total {
            s %= total;
        }
        let last = self.nodes[self.nodes.len() - 1];
        if s >= last.s {
            // Wrap segment from the last node to the first (span > 0 only on
            // half-open tiled grids; on closed profiles s == last.s lands here
            // and returns the node exactly).
            let span = total - last.s;
            if span <= 0.0 || s == last.s {
                return (last.rho, last.theta);
            }
            let t = ((s - last.s) / span).clamp(0.0, 1.0);
            let first = self.nodes[0];
            return (
                last.rho + t * (first.rho - last.rho),
                last.theta + t * (first.theta - last.theta),
            );
        }
        // First node with node.s > s; its predecessor starts the segment.
        let hi = self.nodes.partition_point(|n| n.s <= s);
        let (a, b) = (self.nodes[hi - 1], self.nodes[hi]);
        let t = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        (a.rho + t * (b.rho - a.rho), a.theta + t * (b.theta - a.theta))
    }

    /// Resamples the lap onto a uniform grid of spacing `ds` covering
    /// [0, lap_length], interpolating linearly.
    pub fn resample(&self, ds: f64) -> Result<TrackProfile> {
        if self.n_laps != 1 {
            return Err(Error::Config("resample the single-lap profile before tiling".into()));
        }
        if !(ds > 0.0) {
            return Err(Error::Config(format!("resample spacing {ds} must be positive")));
        }
        if ds > self.lap_length / 10.0 {
            return Err(Error::Config(format!(
                "resample spacing {ds} exceeds lap_length/10 = {}",
                self.lap_length / 10.0
            )));
        }
        let n_intervals = (self.lap_length / ds).round();
        if (n_intervals * ds - self.lap_length).abs() > 1e-9 * self.lap_length {
            return Err(Error::Config(format!(
                "spacing {ds} does not divide lap_length {}",
                self.lap_length
            )));
        }
        let n_intervals = n_intervals as usize;
        let nodes = (0..=n_intervals)
            .map(|k| {
                // Land the last node exactly on lap_length.
                let s = if k == n_intervals { self.lap_length } else { k as f64 * ds };
                let (rho, theta) = self.sample(s);
                TrackNode { s, rho, theta }
            })
            .collect();
        TrackProfile::new(nodes, self.lap_length, 1)
    }

    /// Repeats the profile `n_laps` times to form the race horizon.
    ///
    /// The closing node of a closed input duplicates the next lap's start and
    /// is dropped, so the result is half-open: S equals the last node's s plus
    /// one spacing.
    pub fn tile_laps(&self, n_laps: u32) -> Result<TrackProfile> {
        if n_laps < 1 {
            return Err(Error::Config("n_laps must be at least 1".into()));
        }
        if n_laps == 1 {
            return Ok(self.clone());
        }
        let block: &[TrackNode] = if self.is_closed() {
            &self.nodes[..self.nodes.len() - 1]
        } else {
            &self.nodes
        };
        let block_len = self.total_length();
        let mut nodes = Vec::with_capacity(block.len() * n_laps as usize);
        for k in 0..n_laps {
            let offset = f64::from(k) * block_len;
            nodes.extend(block.iter().map(|n| TrackNode { s: n.s + offset, ..*n }));
        }
        TrackProfile::new(nodes, self.lap_length, self.n_laps * n_laps)
    }

    /// Trapezoidal integral of |rho| over the stored nodes.
    pub fn integral_abs_rho(&self) -> f64 {
        let mut acc = 0.0;
        for pair in self.nodes.windows(2) {
            acc += 0.5 * (pair[0].rho.abs() + pair[1].rho.abs()) * (pair[1].s - pair[0].s);
        }
        // Closing stretch of a half-open grid back to the lap junction.
        let last = self.nodes[self.nodes.len() - 1];
        let span = self.total_length() - last.s;
        if span > 1e-12 {
            acc += 0.5 * (last.rho.abs() + self.nodes[0].rho.abs()) * span;
        }
        acc
    }
}

/// One segment of a synthetic race line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SynthSegment {
    Straight { length: f64 },
    /// Constant-radius arc; `radius` is signed, positive turning left.
    Arc { length: f64, radius: f64 },
}

impl SynthSegment {
    fn length(&self) -> f64 {
        match *self {
            SynthSegment::Straight { length } | SynthSegment::Arc { length, .. } => length,
        }
    }

    fn rho(&self) -> f64 {
        match *self {
            SynthSegment::Straight { .. } => 0.0,
            SynthSegment::Arc { radius, .. } => 1.0 / radius,
        }
    }
}

/// Builds a flat profile from an ordered segment list.
///
/// Curvature is piecewise constant: zero on straights, 1/radius on arcs. Each
/// joint gets a pair of nodes a hair apart so that linear interpolation
/// reproduces the step exactly; nodes ON a joint take the downstream value.
/// The lap closes periodically: the start/finish line is a joint like any
/// other, so the closing node carries the first segment's curvature.
pub fn synth_track(segments: &[SynthSegment]) -> Result<TrackProfile> {
    if segments.is_empty() {
        return Err(Error::Config("synthetic track needs at least one segment".into()));
    }
    for (i, seg) in segments.iter().enumerate() {
        let len = seg.length();
        if !(len >= MIN_SEGMENT_LEN) {
            return Err(Error::Config(format!(
                "segment {i}: length {len} below the {MIN_SEGMENT_LEN} m minimum"
            )));
        }
        if let SynthSegment::Arc { radius, .. } = seg {
            if !(radius.abs() > 5.0) {
                return Err(Error::Config(format!(
                    "segment {i}: arc radius {radius} must exceed 5 m in magnitude"
                )));
            }
        }
    }
    let lap_length: f64 = segments.iter().map(|s| s.length()).sum();
    let mut nodes = vec![TrackNode { s: 0.0, rho: segments[0].rho(), theta: 0.0 }];
    let mut cursor = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        cursor += seg.length();
        let next_rho =
            if i + 1 < segments.len() { segments[i + 1].rho() } else { segments[0].rho() };
        nodes.push(TrackNode { s: cursor - JOINT_EPS, rho: seg.rho(), theta: 0.0 });
        nodes.push(TrackNode { s: cursor, rho: next_rho, theta: 0.0 });
    }
    TrackProfile::new(nodes, lap_length, 1)
}

const CSV_HEADER: &str = "s_m,curvature_1pm,slope_rad";

/// Loads a profile from the documented CSV format.
///
/// Header `s_m,curvature_1pm,slope_rad`, one row per node, `#` comments.
/// The lap length is the last node's arc length, i.e. files store closed laps.
pub fn load_track(path: &Path) -> Result<TrackProfile> {
    let text = std::fs::read_to_string(path)?;
    let mut nodes = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected header `{CSV_HEADER}`, found `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| -> Result<f64> {
            let field = fields.next().ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("missing column {name}"),
            })?;
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad {name} value `{}`: {e}", field.trim()),
            })
        };
        let s = next_field("s_m")?;
        let rho = next_field("curvature_1pm")?;
        let theta = next_field("slope_rad")?;
        if fields.next().is_some() {
            return Err(Error::Parse { line: idx + 1, msg: "too many columns".into() });
        }
        nodes.push(TrackNode { s, rho, theta });
    }
    if !saw_header {
        return Err(Error::Parse { line: 1, msg: format!("missing header `{CSV_HEADER}`") });
    }
    if nodes.len() < 2 {
        return Err(Error::Validation("track file holds fewer than two nodes".into()));
    }
    for pair in nodes.windows(2) {
        if pair[1].s <= pair[0].s {
            return Err(Error::Validation(format!(
                "non-monotone arc length at s = {}",
                pair[1].s
            )));
        }
    }
    let lap_length = nodes[nodes.len() - 1].s;
    TrackProfile::new(nodes, lap_length, 1)
}

/// Writes a profile in the documented CSV format.
pub fn save_track(profile: &TrackProfile, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(profile.nodes.len() * 32 + 32);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for n in &profile.nodes {
        // `{}` prints the shortest digits that round-trip, so save/load is exact.
        writeln!(out, "{},{},{}", n.s, n.rho, n.theta).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn straight(length: f64) -> SynthSegment {
        SynthSegment::Straight { length }
    }

    fn arc(length: f64, radius: f64) -> SynthSegment {
        SynthSegment::Arc { length, radius }
    }

    #[test]
    fn synth_single_straight() {
        let p = synth_track(&[straight(500.0)]).unwrap();
        assert_eq!(p.lap_length(), 500.0);
        assert!(p.nodes().iter().all(|n| n.rho == 0.0 && n.theta == 0.0));
    }

    #[test]
    fn synth_three_segments_constant_arc_curvature() {
        let p = synth_track(&[straight(300.0), arc(100.0, 50.0), straight(300.0)]).unwrap();
        // Middle 100 m at rho = 0.02, right-continuous at joints.
        assert_eq!(p.sample(300.0).0, 0.02);
        assert_eq!(p.sample(350.0).0, 0.02);
        assert!((p.sample(399.9999).0 - 0.02).abs() < 1e-12);
        assert_eq!(p.sample(400.0).0, 0.0);
        assert_eq!(p.sample(150.0).0, 0.0);
        assert_eq!(p.sample(550.0).0, 0.0);
    }

    #[test]
    fn synth_rejects_degenerate_segments() {
        assert!(synth_track(&[]).is_err());
        assert!(synth_track(&[straight(0.0)]).is_err());
        assert!(synth_track(&[arc(50.0, 4.0)]).is_err());
    }

    #[test]
    fn resample_of_constant_curvature_is_constant() {
        let nodes = vec![
            TrackNode { s: 0.0, rho: 0.05, theta: 0.0 },
            TrackNode { s: 400.0, rho: 0.05, theta: 0.0 },
        ];
        let p = TrackProfile::new(nodes, 400.0, 1).unwrap();
        let r = p.resample(10.0).unwrap();
        assert_eq!(r.nodes().len(), 41);
        assert!(r.nodes().iter().all(|n| (n.rho - 0.05).abs() < 1e-15));
        assert_eq!(r.spacing(), Some(10.0));
    }

    #[test]
    fn resample_interpolates_linear_ramp_midpoint() {
        let nodes = vec![
            TrackNode { s: 0.0, rho: 0.0, theta: 0.0 },
            TrackNode { s: 100.0, rho: 0.02, theta: 0.0 },
        ];
        let p = TrackProfile::new(nodes, 100.0, 1).unwrap();
        let r = p.resample(10.0).unwrap();
        assert!((r.nodes()[5].rho - 0.01).abs() < 1e-15);
    }

    #[test]
    fn resample_is_idempotent() {
        let p = synth_track(&[straight(300.0), arc(150.0, 60.0), straight(300.0)]).unwrap();
        let a = p.resample(15.0).unwrap();
        let b = a.resample(15.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resample_rejects_coarse_or_nondividing_spacing() {
        let p = synth_track(&[straight(1000.0)]).unwrap();
        assert!(p.resample(150.0).is_err());
        assert!(p.resample(13.0).is_err());
        assert!(p.resample(-1.0).is_err());
    }

    #[test]
    fn tiling_repeats_nodes_periodically() {
        let p = synth_track(&[straight(300.0), arc(150.0, 60.0), straight(450.0)])
            .unwrap()
            .resample(15.0)
            .unwrap();
        let tiled = p.tile_laps(23).unwrap();
        assert_eq!(tiled.total_length(), 20700.0);
        assert_eq!(tiled.n_laps(), 23);
        // Half-open after tiling: S = last node + one spacing.
        let last = tiled.nodes()[tiled.nodes().len() - 1].s;
        assert!((tiled.total_length() - last - 15.0).abs() < 1e-9);
        for k in (0..900).step_by(15) {
            let x = k as f64;
            assert_eq!(tiled.sample(x).0, tiled.sample(900.0 + x).0);
        }
    }

    #[test]
    fn tiling_once_is_identity() {
        let p = synth_track(&[straight(300.0)]).unwrap();
        assert_eq!(p.tile_laps(1).unwrap(), p);
    }

    #[test]
    fn tiling_composes() {
        let p = synth_track(&[straight(300.0), arc(150.0, 40.0), straight(150.0)])
            .unwrap()
            .resample(15.0)
            .unwrap();
        let a = p.tile_laps(6).unwrap();
        let b = p.tile_laps(2).unwrap().tile_laps(3).unwrap();
        assert_eq!(a.nodes().len(), b.nodes().len());
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            assert!((x.s - y.s).abs() < 1e-9);
            assert_eq!(x.rho, y.rho);
        }
        assert_eq!(a.n_laps(), b.n_laps());
    }

    #[test]
    fn load_rejects_nonmonotone_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "s_m,curvature_1pm,slope_rad\n0,0,0\n20,0,0\n10,0,0\n").unwrap();
        let err = load_track(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("non-monotone")));

        std::fs::write(&path, "s_m,curvature_1pm,slope_rad\n0,0,0\nnope,0,0\n").unwrap();
        let err = load_track(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn load_three_row_straight() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("straight.csv");
        std::fs::write(&path, "# demo\ns_m,curvature_1pm,slope_rad\n0,0,0\n15,0,0\n30,0,0\n").unwrap();
        let p = load_track(&path).unwrap();
        assert_eq!(p.lap_length(), 30.0);
        assert_eq!(p.nodes().len(), 3);
        assert!(p.nodes().iter().all(|n| n.rho == 0.0));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let p = synth_track(&[straight(302.5), arc(147.25, 61.3), straight(450.0)]).unwrap();
        save_track(&p, &path).unwrap();
        let q = load_track(&path).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn synth_track_satisfies_profile_invariants(
            lens in prop::collection::vec(1u32..=10, 3..12),
            radii in prop::collection::vec(prop_oneof![Just(0.0f64), 6.0..120.0, -120.0..-6.0], 3..12),
        ) {
            let segs: Vec<SynthSegment> = lens.iter().zip(&radii).map(|(&l, &r)| {
                let length = f64::from(l) * 60.0;
                if r == 0.0 { straight(length) } else { arc(length, r) }
            }).collect();
            let p = synth_track(&segs).unwrap();
            prop_assert_eq!(p.nodes()[0].s, 0.0);
            prop_assert!(p.nodes().windows(2).all(|w| w[1].s > w[0].s));
            prop_assert!(p.nodes().iter().all(|n| n.rho.abs() < 1.0 && n.theta == 0.0));
            let total: f64 = segs.iter().map(|s| s.length()).sum();
            prop_assert!((p.lap_length() - total).abs() < 1e-9);
        }

        #[test]
        fn resample_preserves_curvature_integral(
            lens in prop::collection::vec(2u32..=10, 4..10),
            radii in prop::collection::vec(prop_oneof![Just(0.0f64), 10.0..120.0, -120.0..-10.0], 4..10),
        ) {
            let segs: Vec<SynthSegment> = lens.iter().zip(&radii).map(|(&l, &r)| {
                let length = f64::from(l) * 60.0;
                if r == 0.0 { straight(length) } else { arc(length, r) }
            }).collect();
            let p = synth_track(&segs).unwrap();
            let exact: f64 = segs.iter().map(|s| s.length() * s.rho().abs()).sum();
            prop_assume!(exact > 1e-9);
            // 12 m divides every 60 m multiple and is <= lap/100 for laps >= 1200 m.
            let lap: f64 = segs.iter().map(|s| s.length()).sum();
            prop_assume!(lap >= 1200.0);
            let r = p.resample(12.0).unwrap();
            let got = r.integral_abs_rho();
            prop_assert!((got - exact).abs() <= 0.01 * exact,
                "integral drifted: exact {exact}, resampled {got}");
        }
    }
}
