use serde::{Deserialize, Serialize};

use super::scene::{derive_seed, localize, refine, run_fill, FillRun, Scene};
use super::{FillMode, LocalizationReport, RepairError};
use crate::geometry::{CrackOrientation, Point3};
use crate::perception::Segmenter;
use crate::profile::{calibrate, CalibrationModel, FlowModel};
use crate::sensors::LaserProfile;
use crate::specimen::{deposit, Heightfield};

/// Noise streams for calibration strip scans.
const STRIP_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StripParams {
    pub speeds: Vec<f64>,
    pub strip_length: f64,
    /// Centred portion of the strip that is scanned.
    pub inner_length: f64,
    pub scan_step: f64,
    pub model: FlowModel,
}

impl Default for StripParams {
    fn default() -> Self {
        Self {
            speeds: vec![6.0, 8.0, 10.0, 15.0, 20.0],
            strip_length: 150.0,
            inner_length: 100.0,
            scan_step: 10.0,
            model: FlowModel::ConstantFlow,
        }
    }
}

impl StripParams {
    /// Scan positions along the strip.
    pub fn stations(&self) -> Vec<f64> {
        let start = (self.strip_length - self.inner_length) / 2.0;
        let n = (self.inner_length / self.scan_step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * self.scan_step).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub model: CalibrationModel,
    pub strip_scans: Vec<(f64, Vec<LaserProfile>)>,
}

/// Prints one strip per speed on a flat plate along robot y and scans it
/// across at each station.
pub fn calibration_experiment(scene: &Scene, strip: &StripParams) -> Result<CalibrationRun, RepairError> {
    let g = &scene.grid;
    let margin = g.margin.max(scene.laser.span);
    let nx = (2.0 * margin / g.cell_size).round() as usize;
    let ny = ((strip.strip_length + 2.0 * margin) / g.cell_size).round() as usize;
    let setup = scene.scan_setup(CrackOrientation::Horizontal, &scene.noise);
    let nominal = g.nominal_surface;
    let mut scans = Vec::with_capacity(strip.speeds.len());
    for (si, &v) in strip.speeds.iter().enumerate() {
        let mut hf = Heightfield::flat([-margin, -margin], g.cell_size, nx, ny, nominal, g.max_overfill_cap);
        let from = Point3::robot(0.0, 0.0, nominal);
        let to = Point3::robot(0.0, strip.strip_length, nominal);
        deposit(&mut hf, &from, &to, v, &scene.deposition)?;
        let mut profiles = Vec::new();
        for (k, y) in strip.stations().into_iter().enumerate() {
            let pose = setup.pose_at(&Point3::robot(0.0, y, nominal));
            profiles.push(setup.scan(&hf, &pose, STRIP_STREAM + (si as u64) * 1000 + k as u64)?);
        }
        scans.push((v, profiles));
    }
    let model = calibrate(&scans, &setup.profile, strip.model)?;
    Ok(CalibrationRun { model, strip_scans: scans })
}

/// Repeats capture and refinement `scans` times with independent noise and
/// compares RGB-D waypoints to their laser-refined positions.
pub fn localization_experiment(
    scene: &Scene,
    segmenter: &dyn Segmenter,
    scans: usize,
) -> Result<LocalizationReport, RepairError> {
    let hf = scene.specimen()?;
    let mut pairs = Vec::new();
    for s in 0..scans {
        let noise = scene.noise.with_seed(derive_seed(scene.noise.seed, s as u64));
        let loc = localize(scene, &hf, segmenter, &noise)?;
        let refined = refine(scene, &hf, &loc, &noise)?;
        pairs.extend(LocalizationReport::pairs_of(&refined.waypoints));
    }
    Ok(LocalizationReport::from_pairs(&pairs, Some(&scene.crack)))
}

/// One fill per mode, each on its own copy of the same fresh specimen and
/// the same perception result.
pub fn table2_experiment(
    scene: &Scene,
    segmenter: &dyn Segmenter,
    calib: &CalibrationModel,
    modes: &[FillMode],
) -> Result<Vec<FillRun>, RepairError> {
    let hf = scene.specimen()?;
    let loc = localize(scene, &hf, segmenter, &scene.noise)?;
    let refinement = refine(scene, &hf, &loc, &scene.noise)?;
    let setup = scene.scan_setup(loc.orientation, &scene.noise);
    modes.iter().map(|&m| run_fill(scene, &hf, &refinement, &setup, calib, m)).collect()
}
