use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    execute_fill, plan_fill, refine_waypoints, validate, FillExecution, FillMode, FillPlan, FillReport, Refinement,
    RepairError, ScanSetup,
};
use crate::geometry::{CameraIntrinsics, CrackOrientation, RigidTransform};
use crate::perception::{
    binarize, classify_orientation, extract_pixels, order_path, pixels_to_robot, skeletonize, SegmentationInput,
    Segmenter, Skeleton, Waypoint,
};
use crate::profile::{speed_for_area, CalibrationModel, ProfileParams};
use crate::raster::{DepthImage, MaskImage};
use crate::sensors::{render_depth, LaserParams, SensorNoise};
use crate::specimen::{generate_specimen, ArcProfile, CrackSpec, DepositionParams, GridParams, Heightfield};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionParams {
    /// Depth below the nominal surface that the truth segmenter calls crack (mm).
    pub mask_threshold: f64,
    pub binarize_threshold: u8,
    /// Minimum pixel distance between extracted skeleton points.
    pub min_spacing: f64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self { mask_threshold: 0.2, binarize_threshold: 128, min_spacing: 7.0 }
    }
}

/// A full simulated work cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub crack: CrackSpec,
    pub grid: GridParams,
    pub intrinsics: CameraIntrinsics,
    /// Nominal camera→robot extrinsics, as reported to the pipeline.
    pub camera_pose: RigidTransform,
    /// Laser frame relative to the robot tool point.
    pub laser_mount: RigidTransform,
    pub laser: LaserParams,
    pub noise: SensorNoise,
    pub deposition: DepositionParams,
    pub perception: PerceptionParams,
    /// Defaults to thresholds derived from `noise.laser_sigma`.
    pub profile: Option<ProfileParams>,
    /// Stations with a smaller pre-fill area are left out of fill statistics (mm²).
    pub area_floor: f64,
}

impl Scene {
    /// 150 mm crack along robot y, 8→16 mm wide and 6→9 mm deep.
    pub fn default_crack() -> CrackSpec {
        CrackSpec {
            path: vec![[0.0, 0.0], [0.0, 150.0]],
            width: ArcProfile::linear(8.0, 16.0, 150.0),
            depth: ArcProfile::linear(6.0, 9.0, 150.0),
            orientation: CrackOrientation::Horizontal,
        }
    }

    /// Looking straight down from 500 mm over the crack midpoint, image `u`
    /// along robot +y.
    pub fn default_camera_pose() -> RigidTransform {
        let r = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        RigidTransform::new(r, Vector3::new(0.0, 75.0, 500.0)).expect("valid default pose")
    }

    pub fn default_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).expect("valid default intrinsics")
    }

    pub fn profile_params(&self) -> ProfileParams {
        self.profile.unwrap_or_else(|| ProfileParams::for_noise(self.noise.laser_sigma))
    }

    pub fn specimen(&self) -> Result<Heightfield, RepairError> {
        Ok(generate_specimen(&self.crack, &self.grid)?)
    }

    pub fn scan_setup(&self, orientation: CrackOrientation, noise: &SensorNoise) -> ScanSetup {
        ScanSetup {
            mount: self.laser_mount,
            orientation,
            laser: self.laser,
            noise: *noise,
            profile: self.profile_params(),
        }
    }
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            crack: Self::default_crack(),
            grid: GridParams::default(),
            intrinsics: Self::default_intrinsics(),
            camera_pose: Self::default_camera_pose(),
            laser_mount: RigidTransform::identity(),
            laser: LaserParams::default(),
            noise: SensorNoise::default(),
            deposition: DepositionParams::default(),
            perception: PerceptionParams::default(),
            profile: None,
            area_floor: 1.0,
        }
    }
}

/// Independent seed for run `k` of an experiment.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Output of the RGB-D chain.
#[derive(Debug, Clone)]
pub struct Localization {
    pub depth: DepthImage,
    pub mask: MaskImage,
    pub skeleton: Skeleton,
    /// Ordered along the path, robot points from the nominal extrinsics.
    pub waypoints: Vec<Waypoint>,
    pub orientation: CrackOrientation,
}

/// Capture → segment → skeletonize → extract → back-project → order.
pub fn localize(
    scene: &Scene,
    hf: &Heightfield,
    segmenter: &dyn Segmenter,
    noise: &SensorNoise,
) -> Result<Localization, RepairError> {
    let k = &scene.intrinsics;
    let depth = render_depth(hf, &scene.camera_pose, k, noise)?;
    let actual = noise.actual_camera_pose(&scene.camera_pose);
    let mask = segmenter.segment(&SegmentationInput { hf, camera_pose: &actual, k, depth: &depth })?;
    let skeleton = skeletonize(&binarize(&mask, scene.perception.binarize_threshold));
    if skeleton.is_empty() {
        return Err(RepairError::NoCrackFound("segmentation mask is empty".into()));
    }
    let pixels = extract_pixels(&skeleton, &depth, scene.perception.min_spacing);
    if pixels.is_empty() {
        return Err(RepairError::NoCrackFound("no skeleton pixel has a valid depth".into()));
    }
    let robot = pixels_to_robot(&pixels, k, &scene.camera_pose).map_err(crate::perception::PerceptionError::from)?;
    let waypoints = order_path(&robot)?;
    let orientation = classify_orientation(&waypoints);
    Ok(Localization { depth, mask, skeleton, waypoints, orientation })
}

pub fn refine(
    scene: &Scene,
    hf: &Heightfield,
    loc: &Localization,
    noise: &SensorNoise,
) -> Result<Refinement, RepairError> {
    refine_waypoints(&loc.waypoints, hf, &scene.scan_setup(loc.orientation, noise))
}

#[derive(Debug, Clone)]
pub struct FillRun {
    pub plan: FillPlan,
    pub execution: FillExecution,
    pub report: FillReport,
    pub hf_after: Heightfield,
}

/// Plans, deposits onto a copy of `hf` and validates at the refinement stations.
pub fn run_fill(
    scene: &Scene,
    hf: &Heightfield,
    refinement: &Refinement,
    setup: &ScanSetup,
    calib: &CalibrationModel,
    mode: FillMode,
) -> Result<FillRun, RepairError> {
    let plan = plan_fill(&refinement.waypoints, calib, mode)?;
    let mut hf_after = hf.clone();
    let execution = execute_fill(&plan, &mut hf_after, &scene.deposition)?;
    let speeds: Vec<f64> = refinement
        .stations
        .iter()
        .map(|st| match mode {
            FillMode::Adaptive => speed_for_area(calib, st.features.area),
            FillMode::Fixed(v) => v,
        })
        .collect();
    let report = validate(&refinement.stations, &speeds, &hf_after, setup, scene.area_floor, execution.elapsed, mode)?;
    Ok(FillRun { plan, execution, report, hf_after })
}
