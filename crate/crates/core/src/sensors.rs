//! Simulated RGB-D camera and laser line scanner.
//!
//! Both sensors sample a [`Heightfield`] snapshot. Noise is additive Gaussian
//! drawn from a ChaCha stream keyed by `(seed, stream)`, so every capture is
//! reproducible and independent captures can use independent streams.

use std::io::{self, Write};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, CrackOrientation, RigidTransform};
use crate::raster::{DepthImage, MaskImage};
use crate::specimen::Heightfield;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("no camera ray hits the specimen")]
    NoIntersection,
    #[error("scan line leaves the heightfield")]
    StationOutsideGrid,
    #[error("scan span must be positive, got {0}")]
    InvalidSpan(f64),
    #[error("laser profile needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("laser profile positions must be strictly increasing and uniformly spaced")]
    NonUniformSpacing,
    #[error("laser profile has {x} positions but {z} heights")]
    LengthMismatch { x: usize, z: usize },
    #[error("the scanner z axis must point along robot +z")]
    TiltedScanner,
    #[error("noise parameters must be non-negative")]
    InvalidNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// RGB-D depth σ as a fraction of the depth.
    pub depth_sigma_fraction: f64,
    /// Laser height σ (mm).
    pub laser_sigma: f64,
    /// Robot-frame perturbation of the true camera mount relative to the
    /// extrinsics the pipeline is given.
    pub extrinsic_bias: Option<RigidTransform>,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { depth_sigma_fraction: 0.02, laser_sigma: 0.02, extrinsic_bias: None, seed: 7 }
    }
}

impl SensorNoise {
    pub fn noiseless() -> Self {
        Self { depth_sigma_fraction: 0.0, laser_sigma: 0.0, extrinsic_bias: None, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.depth_sigma_fraction >= 0.0) || !(self.laser_sigma >= 0.0) {
            return Err(SensorError::InvalidNoise);
        }
        Ok(())
    }

    /// Where the camera really is, given the nominal camera→robot extrinsics.
    pub fn actual_camera_pose(&self, nominal: &RigidTransform) -> RigidTransform {
        match &self.extrinsic_bias {
            Some(bias) => bias.compose(nominal),
            None => *nominal,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(stream)))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise stream used by RGB-D captures. Laser scans use their own stream ids.
pub const DEPTH_STREAM: u64 = 0xD3F7;

struct RayHit {
    depth: f64,
    height: f64,
}

/// First intersection of `origin + t·dir` with the surface, `t` in units of
/// `dir` (optical-axis depth when `dir` has unit camera-frame z).
fn cast_ray(hf: &Heightfield, range: (f64, f64), origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
    let (h_min, h_max) = range;
    if dir.z >= 0.0 {
        return None;
    }
    let t_enter = ((h_max - origin.z) / dir.z).max(0.0);
    let t_exit = (h_min - origin.z) / dir.z;
    if t_exit < t_enter {
        return None;
    }
    let [bx0, bx1, by0, by1] = hf.bounds();
    let (xa, xb) = (origin.x + t_enter * dir.x, origin.x + t_exit * dir.x);
    let (ya, yb) = (origin.y + t_enter * dir.y, origin.y + t_exit * dir.y);
    if xa.max(xb) < bx0 || xa.min(xb) >= bx1 || ya.max(yb) < by0 || ya.min(yb) >= by1 {
        return None;
    }

    let below = |t: f64| -> Option<f64> {
        let p = origin + dir * t;
        hf.sample(p.x, p.y).filter(|&h| p.z <= h)
    };
    let horizontal = (dir.x * dir.x + dir.y * dir.y).sqrt();
    let step = if horizontal > 0.0 { 0.5 * hf.cell_size() / horizontal } else { f64::INFINITY };

    let mut t_prev = t_enter;
    if below(t_enter).is_some() {
        let p = origin + dir * t_enter;
        return Some(RayHit { depth: t_enter, height: hf.sample(p.x, p.y)? });
    }
    loop {
        let t = (t_prev + step).min(t_exit);
        if below(t).is_some() {
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if below(mid).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return below(hi).map(|height| RayHit { depth: hi, height });
        }
        if t >= t_exit {
            return None;
        }
        t_prev = t;
    }
}

fn for_each_ray<F: FnMut(usize, usize, Option<RayHit>)>(
    hf: &Heightfield,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    mut f: F,
) {
    let range = hf.height_range();
    let origin = *pose.translation();
    for v in 0..k.image_height() {
        for u in 0..k.image_width() {
            let dir = pose.apply_vector(&k.ray_direction(u as f64, v as f64));
            f(u, v, cast_ray(hf, range, &origin, &dir));
        }
    }
}

/// Renders optical-axis depth from the biased camera pose, adding
/// `N(0, (depth·depth_sigma_fraction)²)` per valid pixel.
pub fn render_depth(
    hf: &Heightfield,
    camera_pose: &RigidTransform,
    k: &CameraIntrinsics,
    noise: &SensorNoise,
) -> Result<DepthImage, SensorError> {
    noise.validate()?;
    let pose = noise.actual_camera_pose(camera_pose);
    let mut rng = noise.rng(DEPTH_STREAM);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut img = DepthImage::new(k.image_width(), k.image_height());
    for_each_ray(hf, &pose, k, |u, v, hit| {
        if let Some(hit) = hit {
            let mut d = hit.depth;
            if noise.depth_sigma_fraction > 0.0 {
                d += unit.sample(&mut rng) * d * noise.depth_sigma_fraction;
            }
            img.set(u, v, Some(d));
        }
    });
    if img.valid_count() == 0 {
        return Err(SensorError::NoIntersection);
    }
    Ok(img)
}

/// Ground-truth segmentation: 255 where the noiseless ray hit lies more than
/// `threshold` mm below the nominal surface.
pub fn render_truth_mask(
    hf: &Heightfield,
    camera_pose: &RigidTransform,
    k: &CameraIntrinsics,
    threshold: f64,
) -> Result<MaskImage, SensorError> {
    let mut mask = MaskImage::new(k.image_width(), k.image_height());
    let mut any_hit = false;
    let nominal = hf.nominal_surface();
    for_each_ray(hf, camera_pose, k, |u, v, hit| {
        if let Some(hit) = hit {
            any_hit = true;
            if nominal - hit.height > threshold {
                mask.set(u, v, 255);
            }
        }
    });
    if !any_hit {
        return Err(SensorError::NoIntersection);
    }
    Ok(mask)
}

/// One scan line: lateral positions and heights in the scanner frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserProfile {
    x: Vec<f64>,
    z: Vec<f64>,
    valid: Vec<bool>,
}

impl LaserProfile {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self, SensorError> {
        let valid = vec![true; x.len()];
        Self::with_validity(x, z, valid)
    }

    pub fn with_validity(x: Vec<f64>, z: Vec<f64>, valid: Vec<bool>) -> Result<Self, SensorError> {
        if x.len() != z.len() || x.len() != valid.len() {
            return Err(SensorError::LengthMismatch { x: x.len(), z: z.len() });
        }
        if x.len() < 2 {
            return Err(SensorError::TooFewPoints(x.len()));
        }
        let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let tol = 1e-9 * dx.abs().max(1.0);
        if !(dx > 0.0) || x.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > tol) {
            return Err(SensorError::NonUniformSpacing);
        }
        Ok(Self { x, z, valid })
    }

    /// `n` samples over `[-span/2, span/2]` with heights `f(x)`.
    pub fn from_fn(span: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, SensorError> {
        if !(span > 0.0) {
            return Err(SensorError::InvalidSpan(span));
        }
        if n < 2 {
            return Err(SensorError::TooFewPoints(n));
        }
        let x = sample_positions(span, n);
        let z = x.iter().map(|&x| f(x)).collect();
        Self::new(x, z)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn dx(&self) -> f64 {
        (self.x[self.x.len() - 1] - self.x[0]) / (self.x.len() - 1) as f64
    }

    pub fn map_z(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { x: self.x.clone(), z: self.z.iter().map(|&z| f(z)).collect(), valid: self.valid.clone() }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x_mm,z_mm")?;
        for ((x, z), ok) in self.x.iter().zip(&self.z).zip(&self.valid) {
            if *ok {
                writeln!(w, "{x:.6},{z:.6}")?;
            } else {
                writeln!(w, "{x:.6},")?;
            }
        }
        Ok(())
    }
}

fn sample_positions(span: f64, n: usize) -> Vec<f64> {
    let dx = span / (n - 1) as f64;
    (0..n).map(|k| if k == n - 1 { span / 2.0 } else { -span / 2.0 + k as f64 * dx }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserParams {
    pub n_points: usize,
    /// Length of the scan line (mm).
    pub span: f64,
    /// Distance from the scanner to the laser-frame origin (mm).
    pub reference_standoff: f64,
    pub range_min: f64,
    pub range_max: f64,
}

impl Default for LaserParams {
    fn default() -> Self {
        Self { n_points: 1024, span: 40.0, reference_standoff: 310.0, range_min: 200.0, range_max: 420.0 }
    }
}

/// Which laser-frame axis the scan line follows: across the crack.
pub fn scan_axis(orientation: CrackOrientation) -> Vector3<f64> {
    match orientation {
        CrackOrientation::Horizontal => Vector3::x(),
        CrackOrientation::Vertical => Vector3::y(),
    }
}

/// Samples the surface along the laser-frame scan axis through the laser
/// origin. `z` is surface height relative to the origin (up positive), plus
/// `N(0, laser_sigma²)`. Samples whose distance from the scanner falls outside
/// `[range_min, range_max]` are flagged invalid.
pub fn scan_profile(
    hf: &Heightfield,
    laser_pose: &RigidTransform,
    orientation: CrackOrientation,
    laser: &LaserParams,
    noise: &SensorNoise,
    stream: u64,
) -> Result<LaserProfile, SensorError> {
    if !(laser.span > 0.0) {
        return Err(SensorError::InvalidSpan(laser.span));
    }
    if laser.n_points < 2 {
        return Err(SensorError::TooFewPoints(laser.n_points));
    }
    noise.validate()?;
    if (laser_pose.apply_vector(&Vector3::z()) - Vector3::z()).norm() > 1e-9 {
        return Err(SensorError::TiltedScanner);
    }
    let axis = scan_axis(orientation);
    let x = sample_positions(laser.span, laser.n_points);
    let origin_z = laser_pose.translation().z;
    let mut rng = noise.rng(stream);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = Vec::with_capacity(x.len());
    let mut valid = Vec::with_capacity(x.len());
    for &s in &x {
        let p = laser_pose.apply(&(axis * s));
        let h = hf.sample(p.x, p.y).ok_or(SensorError::StationOutsideGrid)?;
        let mut reading = h - origin_z;
        if noise.laser_sigma > 0.0 {
            reading += unit.sample(&mut rng) * noise.laser_sigma;
        }
        let distance = laser.reference_standoff - reading;
        valid.push((laser.range_min..=laser.range_max).contains(&distance));
        z.push(reading);
    }
    LaserProfile::with_validity(x, z, valid)
}
