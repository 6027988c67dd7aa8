//! JSON scenario schema. Every field is optional; omitted fields take the
//! defaults of the simulated work cell.

use std::fs;
use std::path::{Path, PathBuf};

use crack_repair::geometry::{CameraIntrinsics, RigidTransform};
use crack_repair::perception::{FileSegmenter, Segmenter, TruthSegmenter};
use crack_repair::profile::{CalibrationModel, ProfileParams};
use crack_repair::repair::{FillMode, PerceptionParams, Scene, StripParams};
use crack_repair::sensors::{LaserParams, SensorNoise};
use crack_repair::specimen::{CrackSpec, DepositionParams, GridParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecimenConfig {
    pub crack: CrackSpec,
    pub grid: GridParams,
}

impl Default for SpecimenConfig {
    fn default() -> Self {
        Self { crack: Scene::default_crack(), grid: GridParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub intrinsics: CameraIntrinsics,
    /// Camera → robot transform.
    pub extrinsics: RigidTransform,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { intrinsics: Scene::default_intrinsics(), extrinsics: Scene::default_camera_pose() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub depth_sigma_fraction: f64,
    pub laser_sigma: f64,
    pub extrinsic_bias: Option<RigidTransform>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let n = SensorNoise::default();
        Self {
            depth_sigma_fraction: n.depth_sigma_fraction,
            laser_sigma: n.laser_sigma,
            extrinsic_bias: n.extrinsic_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmenterConfig {
    Truth,
    /// 8-bit PGM mask with the camera's image size.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationSource {
    /// Print and scan strips on a flat plate.
    Synthetic {
        #[serde(default)]
        strips: StripParams,
    },
    /// A calibration JSON written by `calibrate`.
    File { path: PathBuf },
}

impl Default for CalibrationSource {
    fn default() -> Self {
        CalibrationSource::Synthetic { strips: StripParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub specimen: SpecimenConfig,
    pub camera: CameraConfig,
    pub laser: LaserParams,
    /// Scanner frame relative to the tool point.
    pub laser_mount: RigidTransform,
    pub noise: NoiseConfig,
    pub deposition: DepositionParams,
    pub perception: PerceptionParams,
    pub segmenter: SegmenterConfig,
    /// Edge-detection thresholds; derived from `noise.laser_sigma` when absent.
    pub profile: Option<ProfileParams>,
    pub area_floor: f64,
    pub calibration: CalibrationSource,
    /// Modes compared by `experiment`.
    pub modes: Vec<FillMode>,
    /// Mode used by `fill`.
    pub fill_mode: FillMode,
    pub localization_scans: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let scene = Scene::default();
        Self {
            seed: scene.noise.seed,
            output: PathBuf::from("out"),
            specimen: SpecimenConfig::default(),
            camera: CameraConfig::default(),
            laser: scene.laser,
            laser_mount: scene.laser_mount,
            noise: NoiseConfig::default(),
            deposition: scene.deposition,
            perception: scene.perception,
            segmenter: SegmenterConfig::Truth,
            profile: None,
            area_floor: scene.area_floor,
            calibration: CalibrationSource::default(),
            modes: [6.0, 8.0, 10.0, 15.0, 20.0].into_iter().map(FillMode::Fixed).chain([FillMode::Adaptive]).collect(),
            fill_mode: FillMode::Adaptive,
            localization_scans: 10,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.specimen.crack.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.deposition.validate() {
            return bad(e.to_string());
        }
        let g = &self.specimen.grid;
        if !(g.cell_size > 0.0) || !(g.margin >= 0.0) || !(g.max_overfill_cap > 0.0) {
            return bad("grid needs cell_size > 0, margin >= 0 and max_overfill_cap > 0".into());
        }
        if !(self.noise.depth_sigma_fraction >= 0.0) || !(self.noise.laser_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        let l = &self.laser;
        if l.n_points < 3 || !(l.span > 0.0) || !(l.range_min < l.range_max) {
            return bad("laser needs n_points >= 3, span > 0 and range_min < range_max".into());
        }
        if !(self.perception.min_spacing >= 0.0) || !(self.area_floor >= 0.0) {
            return bad("min_spacing and area_floor must be non-negative".into());
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty".into());
        }
        if self.localization_scans == 0 {
            return bad("localization_scans must be at least 1".into());
        }
        if let CalibrationSource::Synthetic { strips } = &self.calibration {
            if !(strips.scan_step > 0.0)
                || !(strips.inner_length <= strips.strip_length)
                || strips.speeds.iter().any(|v| !(*v > 0.0))
            {
                return bad("strips need scan_step > 0, inner_length <= strip_length and positive speeds".into());
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Scene {
        Scene {
            crack: self.specimen.crack.clone(),
            grid: self.specimen.grid,
            intrinsics: self.camera.intrinsics,
            camera_pose: self.camera.extrinsics,
            laser_mount: self.laser_mount,
            laser: self.laser,
            noise: SensorNoise {
                depth_sigma_fraction: self.noise.depth_sigma_fraction,
                laser_sigma: self.noise.laser_sigma,
                extrinsic_bias: self.noise.extrinsic_bias,
                seed: self.seed,
            },
            deposition: self.deposition,
            perception: self.perception,
            profile: self.profile,
            area_floor: self.area_floor,
        }
    }

    pub fn segmenter(&self) -> Box<dyn Segmenter> {
        match &self.segmenter {
            SegmenterConfig::Truth => Box::new(TruthSegmenter { threshold: self.perception.mask_threshold }),
            SegmenterConfig::File(path) => Box::new(FileSegmenter { path: path.clone() }),
        }
    }

    /// Reads a calibration file; a missing or invalid file is a config error.
    pub fn read_calibration(path: &Path) -> Result<CalibrationModel, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("calibration {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("calibration {}: {e}", path.display())))
    }
}
