//! Laser refinement, adaptive fill planning, deposition and validation.

mod experiments;
mod scene;

pub use experiments::{
    calibration_experiment, localization_experiment, table2_experiment, CalibrationRun, StripParams,
};
pub use scene::{derive_seed, localize, refine, run_fill, FillRun, Localization, PerceptionParams, Scene};

use std::fmt;
use std::io::{self, Write};

use log::{debug, warn};
use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{laser_correction, CrackOrientation, Point3, RigidTransform};
use crate::perception::{order_path, PerceptionError, Waypoint};
use crate::profile::{
    measure, sample_std, speed_for_area, window_area, CalibrationModel, ProfileError, ProfileFeatures, ProfileParams,
};
use crate::sensors::{scan_profile, LaserParams, LaserProfile, SensorError, SensorNoise};
use crate::specimen::{
    deposit_segment, CrackSpec, DepositOutcome, DepositionParams, Heightfield, SegmentEnd, SpecimenError,
};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("no crack found: {0}")]
    NoCrackFound(String),
    #[error("every waypoint was dropped during refinement")]
    AllPointsDropped,
    #[error("no waypoints to plan")]
    EmptyWaypoints,
    #[error("waypoint {0} has no measured area")]
    MissingArea(usize),
    #[error("no station has a pre-fill area above the floor")]
    NoValidStations,
    #[error("fixed speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Specimen(#[from] SpecimenError),
}

/// Noise streams for scans; index `k` is added to the base.
pub const PRE_SCAN_STREAM: u64 = 1 << 32;
pub const POST_SCAN_STREAM: u64 = 2 << 32;

/// Everything needed to take and interpret a laser scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSetup {
    pub mount: RigidTransform,
    pub orientation: CrackOrientation,
    pub laser: LaserParams,
    pub noise: SensorNoise,
    pub profile: ProfileParams,
}

impl ScanSetup {
    /// Scanner placed so its origin sits at `at`: `translation(at) ∘ mount`.
    pub fn pose_at(&self, at: &Point3) -> RigidTransform {
        RigidTransform::from_translation(at.x, at.y, at.z).compose(&self.mount)
    }

    pub fn scan(&self, hf: &Heightfield, pose: &RigidTransform, stream: u64) -> Result<LaserProfile, SensorError> {
        scan_profile(hf, pose, self.orientation, &self.laser, &self.noise, stream)
    }
}

/// Pre-fill scan kept for validation at the same pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanStation {
    pub index: usize,
    pub laser_pose: RigidTransform,
    pub profile: LaserProfile,
    pub features: ProfileFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub waypoints: Vec<Waypoint>,
    pub stations: Vec<ScanStation>,
    pub dropped: usize,
}

/// Scans across the crack at each RGB-D waypoint and moves the waypoint to
/// the measured profile centre. Waypoints whose scan shows no feature are
/// dropped.
pub fn refine_waypoints(
    waypoints: &[Waypoint],
    hf: &Heightfield,
    setup: &ScanSetup,
) -> Result<Refinement, RepairError> {
    let mut out = Refinement { waypoints: Vec::new(), stations: Vec::new(), dropped: 0 };
    for (k, wp) in waypoints.iter().enumerate() {
        let pose = setup.pose_at(&wp.robot_pt);
        let scanned = setup.scan(hf, &pose, PRE_SCAN_STREAM + k as u64).map_err(RepairError::from);
        let features = scanned.and_then(|p| Ok((measure(&p, &setup.profile)?, p)));
        let (features, profile) = match features {
            Ok(f) => f,
            Err(e @ (RepairError::Profile(_) | RepairError::Sensor(SensorError::StationOutsideGrid))) => {
                warn!("dropping waypoint {k} at ({:.2}, {:.2}): {e}", wp.robot_pt.x, wp.robot_pt.y);
                out.dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let corr = laser_correction(features.c_x, features.c_y + features.baseline, setup.orientation);
        let p = pose.apply(&corr.coords());
        let mut refined = wp.clone();
        refined.refined_robot_pt = Some(Point3::robot(p.x, p.y, p.z));
        refined.area = Some(features.area);
        out.waypoints.push(refined);
        out.stations.push(ScanStation { index: k, laser_pose: pose, profile, features });
    }
    if out.waypoints.is_empty() {
        return Err(RepairError::AllPointsDropped);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillMode {
    Adaptive,
    Fixed(f64),
}

impl fmt::Display for FillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillMode::Adaptive => write!(f, "adaptive"),
            FillMode::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for FillMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FillMode::Adaptive => s.serialize_str("adaptive"),
            FillMode::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for FillMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Speed(f64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Speed(v) if v > 0.0 && v.is_finite() => Ok(FillMode::Fixed(v)),
            Repr::Speed(v) => Err(serde::de::Error::custom(format!("fixed speed must be positive, got {v}"))),
            Repr::Name(n) if n == "adaptive" => Ok(FillMode::Adaptive),
            Repr::Name(n) => Err(serde::de::Error::custom(format!("unknown fill mode {n:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillPlan {
    pub waypoints: Vec<Waypoint>,
    pub mode: FillMode,
}

pub fn plan_fill(waypoints: &[Waypoint], calib: &CalibrationModel, mode: FillMode) -> Result<FillPlan, RepairError> {
    if waypoints.is_empty() {
        return Err(RepairError::EmptyWaypoints);
    }
    if let FillMode::Fixed(v) = mode {
        if !(v > 0.0) || !v.is_finite() {
            return Err(RepairError::InvalidSpeed(v));
        }
    }
    let mut ordered = order_path(waypoints)?;
    for (k, wp) in ordered.iter_mut().enumerate() {
        let area = wp.area.ok_or(RepairError::MissingArea(k))?;
        wp.speed = Some(match mode {
            FillMode::Adaptive => speed_for_area(calib, area),
            FillMode::Fixed(v) => v,
        });
    }
    Ok(FillPlan { waypoints: ordered, mode })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillSegment {
    pub from: Point3,
    pub to: Point3,
    pub speed: f64,
    pub end: SegmentEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillExecution {
    pub elapsed: f64,
    pub segments: Vec<FillSegment>,
    pub deposits: Vec<DepositOutcome>,
}

/// Segments between consecutive waypoints, each at its starting waypoint's
/// speed. All but the last leave their end grid line to the next segment.
pub fn fill_segments(plan: &FillPlan) -> Vec<FillSegment> {
    let n = plan.waypoints.len();
    plan.waypoints
        .windows(2)
        .enumerate()
        .map(|(k, w)| FillSegment {
            from: *w[0].position(),
            to: *w[1].position(),
            speed: w[0].speed.expect("planned waypoint has a speed"),
            end: if k + 2 == n { SegmentEnd::Inclusive } else { SegmentEnd::Exclusive },
        })
        .collect()
}

pub fn execute_fill(
    plan: &FillPlan,
    hf: &mut Heightfield,
    params: &DepositionParams,
) -> Result<FillExecution, RepairError> {
    if plan.waypoints.is_empty() {
        return Err(RepairError::EmptyWaypoints);
    }
    let segments = fill_segments(plan);
    let mut elapsed = params.purge_time;
    let mut deposits = Vec::with_capacity(segments.len());
    for s in &segments {
        let out = deposit_segment(hf, &s.from, &s.to, s.speed, params, s.end)?;
        elapsed += out.elapsed;
        deposits.push(out);
    }
    Ok(FillExecution { elapsed, segments, deposits })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationRecord {
    pub station: usize,
    pub a_pre: f64,
    pub a_post: f64,
    /// `None` when `a_pre` is below the area floor.
    pub eps_fill: Option<f64>,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FillSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub time_s: f64,
    pub mode: FillMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillReport {
    pub records: Vec<StationRecord>,
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
    pub elapsed_time: f64,
    pub mode: FillMode,
}

impl FillReport {
    /// Statistics over records with `eps_fill` present; std is the sample std.
    pub fn from_records(records: Vec<StationRecord>, elapsed_time: f64, mode: FillMode) -> Result<Self, RepairError> {
        let mut eps: Vec<f64> = records.iter().filter_map(|r| r.eps_fill).collect();
        if eps.is_empty() {
            return Err(RepairError::NoValidStations);
        }
        let mean = eps.iter().sum::<f64>() / eps.len() as f64;
        let std_dev = sample_std(&eps);
        eps.sort_by(f64::total_cmp);
        let n = eps.len();
        let median = if n % 2 == 1 { eps[n / 2] } else { 0.5 * (eps[n / 2 - 1] + eps[n / 2]) };
        Ok(Self { records, mean, std_dev, median, elapsed_time, mode })
    }

    pub fn summary(&self) -> FillSummary {
        FillSummary {
            mean: self.mean,
            std: self.std_dev,
            median: self.median,
            time_s: self.elapsed_time,
            mode: self.mode,
        }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "station,A_pre,A_post,eps_fill,speed")?;
        for r in &self.records {
            let eps = r.eps_fill.map(|e| format!("{e:.6}")).unwrap_or_default();
            writeln!(w, "{},{:.6},{:.6},{},{:.6}", r.station, r.a_pre, r.a_post, eps, r.speed)?;
        }
        Ok(())
    }
}

/// `ϵ_fill = |A_post / A_pre|`.
pub fn fill_error(a_pre: f64, a_post: f64) -> f64 {
    (a_post / a_pre).abs()
}

/// Post-fill deviation area at a station. A flat rescan is integrated over
/// the pre-fill window.
pub fn post_fill_area(post: &LaserProfile, pre: &ProfileFeatures, params: &ProfileParams) -> Result<f64, ProfileError> {
    match measure(post, params) {
        Ok(f) => Ok(f.area),
        Err(ProfileError::NoEdges) => Ok(window_area(post, pre.i1, pre.i2, params.baseline_margin)?.0),
        Err(e) => Err(e),
    }
}

/// Rescans every station at its pre-fill pose and compares areas.
/// `speeds[k]` is the speed used at station `k`.
pub fn validate(
    stations: &[ScanStation],
    speeds: &[f64],
    hf_after: &Heightfield,
    setup: &ScanSetup,
    area_floor: f64,
    elapsed_time: f64,
    mode: FillMode,
) -> Result<FillReport, RepairError> {
    let mut records = Vec::with_capacity(stations.len());
    for (k, st) in stations.iter().enumerate() {
        let post = setup.scan(hf_after, &st.laser_pose, POST_SCAN_STREAM + st.index as u64)?;
        let a_pre = st.features.area;
        let a_post = post_fill_area(&post, &st.features, &setup.profile)?;
        let eps_fill = if a_pre >= area_floor {
            Some(fill_error(a_pre, a_post))
        } else {
            debug!("station {k}: A_pre {a_pre:.3} below floor {area_floor}, excluded");
            None
        };
        records.push(StationRecord { station: k, a_pre, a_post, eps_fill, speed: speeds[k] });
    }
    FillReport::from_records(records, elapsed_time, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisStats {
    pub mean: f64,
    pub std: f64,
}

impl AxisStats {
    fn of(values: &[f64]) -> Self {
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        Self { mean, std: sample_std(values) }
    }
}

/// RGB-D versus laser-refined coordinates, laser taken as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationReport {
    #[serde(rename = "X")]
    pub x: AxisStats,
    #[serde(rename = "Y")]
    pub y: AxisStats,
    #[serde(rename = "Z")]
    pub z: AxisStats,
    #[serde(rename = "Distance")]
    pub distance: AxisStats,
    pub pairs: usize,
    /// Largest distance from a refined point to the true centreline (mm).
    pub max_refined_lateral_error: Option<f64>,
}

impl LocalizationReport {
    pub fn from_pairs(pairs: &[(Point3, Point3)], truth: Option<&CrackSpec>) -> Self {
        let diff: Vec<Vector3<f64>> = pairs.iter().map(|(a, b)| a.coords() - b.coords()).collect();
        let axis = |i: usize| AxisStats::of(&diff.iter().map(|d| d[i].abs()).collect::<Vec<_>>());
        let lateral =
            truth.map(|spec| pairs.iter().map(|(_, r)| spec.distance_to_centerline(r.x, r.y).0).fold(0.0, f64::max));
        Self {
            x: axis(0),
            y: axis(1),
            z: axis(2),
            distance: AxisStats::of(&diff.iter().map(|d| d.norm()).collect::<Vec<_>>()),
            pairs: pairs.len(),
            max_refined_lateral_error: lateral,
        }
    }

    /// `(rgbd, refined)` pairs from refined waypoints.
    pub fn pairs_of(waypoints: &[Waypoint]) -> Vec<(Point3, Point3)> {
        waypoints.iter().filter_map(|w| w.refined_robot_pt.map(|r| (w.robot_pt, r))).collect()
    }
}
