//! Laser-profile feature extraction and extrusion calibration.
//!
//! Edges are the strongest opposite-signed pair of first differences. Each
//! seed is then widened outward while samples still deviate from the local
//! surface, so sloped walls are captured in full.

use std::io::{self, Write};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::LaserProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile has {0} points, at least 3 required")]
    TooShort(usize),
    #[error("no edges: profile is flat")]
    NoEdges,
    #[error("no valid samples outside the feature to estimate the surface")]
    NoBaseline,
    #[error("calibration needs at least 2 distinct speeds with at least 2 profiles each")]
    InsufficientSamples,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileParams {
    /// Minimum index distance between the two edge differences.
    pub min_separation: usize,
    /// Samples excluded on each side of the feature when estimating the surface.
    pub baseline_margin: usize,
    /// Smallest |Δz| between neighbours that counts as an edge (mm).
    pub edge_threshold: f64,
    /// Deviation from the surface below which a sample is outside the feature (mm).
    pub widen_tolerance: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self::for_noise(0.02)
    }
}

impl ProfileParams {
    pub fn for_noise(laser_sigma: f64) -> Self {
        Self {
            min_separation: 5,
            baseline_margin: 10,
            edge_threshold: (6.0 * laser_sigma).max(1e-3),
            widen_tolerance: (3.0 * laser_sigma).max(1e-6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFeatures {
    pub i1: usize,
    pub i2: usize,
    pub x1: f64,
    pub x2: f64,
    pub baseline: f64,
    pub area: f64,
    pub i_avg: usize,
    pub c_x: f64,
    pub c_y: f64,
}

fn diffs(p: &LaserProfile) -> Vec<f64> {
    let (z, ok) = (p.z(), p.valid());
    (0..p.len() - 1).map(|i| if ok[i] && ok[i + 1] { z[i + 1] - z[i] } else { 0.0 }).collect()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median of valid samples outside `[lo - margin, hi + margin]`.
pub fn baseline_outside(p: &LaserProfile, lo: usize, hi: usize, margin: usize) -> Result<f64, ProfileError> {
    let (a, b) = (lo.saturating_sub(margin), hi.saturating_add(margin));
    let outside = (0..p.len()).filter(|&i| (i < a || i > b) && p.valid()[i]).map(|i| p.z()[i]).collect();
    median(outside).ok_or(ProfileError::NoBaseline)
}

/// `Σ |z − b|·Δx` over valid samples in `[i1, i2]`, with `b` estimated
/// outside the window.
pub fn window_area(p: &LaserProfile, i1: usize, i2: usize, margin: usize) -> Result<(f64, f64), ProfileError> {
    let b = baseline_outside(p, i1, i2, margin)?;
    let dx = p.dx();
    let area = (i1..=i2.min(p.len() - 1)).filter(|&i| p.valid()[i]).map(|i| (p.z()[i] - b).abs() * dx).sum();
    Ok((area, b))
}

/// Indices of the first and last sample of the feature.
pub fn detect_edges(p: &LaserProfile, params: &ProfileParams) -> Result<(usize, usize), ProfileError> {
    let n = p.len();
    if n < 3 {
        return Err(ProfileError::TooShort(n));
    }
    let d = diffs(p);
    let (i_star, d_star) =
        d.iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
    if d_star.abs() < params.edge_threshold || d_star == 0.0 {
        return Err(ProfileError::NoEdges);
    }
    let i_2nd = d
        .iter()
        .copied()
        .enumerate()
        .filter(|&(i, v)| v.signum() == -d_star.signum() && v != 0.0 && i.abs_diff(i_star) >= params.min_separation)
        .fold(None::<(usize, f64)>, |best, (i, v)| match best {
            Some((_, bv)) if bv.abs() >= v.abs() => best,
            _ => Some((i, v)),
        })
        .filter(|&(_, v)| v.abs() >= params.edge_threshold)
        .map(|(i, _)| i)
        .ok_or(ProfileError::NoEdges)?;
    let (a, b) = if i_star < i_2nd { (i_star, i_2nd) } else { (i_2nd, i_star) };
    // A trough steps down at `a`; a ridge steps up.
    let polarity = d[a].signum();

    let b0 = baseline_outside(p, a, b + 1, params.baseline_margin)?;
    let (z, ok) = (p.z(), p.valid());
    let inside = |i: usize| ok[i] && (z[i] - b0) * polarity > params.widen_tolerance;
    let (mut i1, mut i2) = (a + 1, b);
    while i1 > 0 && inside(i1 - 1) {
        i1 -= 1;
    }
    while i2 + 1 < n && inside(i2 + 1) {
        i2 += 1;
    }
    Ok((i1, i2))
}

pub fn measure(p: &LaserProfile, params: &ProfileParams) -> Result<ProfileFeatures, ProfileError> {
    let (i1, i2) = detect_edges(p, params)?;
    let (area, baseline) = window_area(p, i1, i2, params.baseline_margin)?;
    let i_avg = (i1 + i2) / 2;
    Ok(ProfileFeatures {
        i1,
        i2,
        x1: p.x()[i1],
        x2: p.x()[i2],
        baseline,
        area,
        i_avg,
        c_x: p.x()[i_avg],
        c_y: p.z()[i_avg] - baseline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSample {
    pub speed: f64,
    pub area: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    /// `A = Q / v`.
    #[default]
    ConstantFlow,
    /// Sample areas interpolated linearly in `1/v`.
    PiecewiseInverseSpeed,
}

impl FlowModel {
    fn is_default(&self) -> bool {
        *self == FlowModel::ConstantFlow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "CalibrationDto")]
pub struct CalibrationModel {
    pub samples: Vec<CalibrationSample>,
    #[serde(rename = "Q")]
    pub q: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default, skip_serializing_if = "FlowModel::is_default")]
    pub model: FlowModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationDto {
    samples: Vec<CalibrationSample>,
    #[serde(rename = "Q")]
    q: f64,
    v_min: f64,
    v_max: f64,
    #[serde(default)]
    model: FlowModel,
}

impl TryFrom<CalibrationDto> for CalibrationModel {
    type Error = ProfileError;

    fn try_from(d: CalibrationDto) -> Result<Self, Self::Error> {
        let m = CalibrationModel { samples: d.samples, q: d.q, v_min: d.v_min, v_max: d.v_max, model: d.model };
        m.validate()?;
        Ok(m)
    }
}

/// Least-squares `Q` for `A = Q/v`: `Σ(A_i/v_i) / Σ(1/v_i²)`.
pub fn fit_flow_rate(samples: &[CalibrationSample]) -> f64 {
    let num: f64 = samples.iter().map(|s| s.area / s.speed).sum();
    let den: f64 = samples.iter().map(|s| 1.0 / (s.speed * s.speed)).sum();
    num / den
}

impl CalibrationModel {
    pub fn from_samples(mut samples: Vec<CalibrationSample>, model: FlowModel) -> Result<Self, ProfileError> {
        samples.sort_by(|a, b| a.speed.total_cmp(&b.speed));
        if samples.len() < 2 || samples.windows(2).any(|w| w[0].speed == w[1].speed) {
            return Err(ProfileError::InsufficientSamples);
        }
        let m = CalibrationModel {
            q: fit_flow_rate(&samples),
            v_min: samples[0].speed,
            v_max: samples[samples.len() - 1].speed,
            samples,
            model,
        };
        m.validate()?;
        if !m.is_monotonic() {
            warn!("calibration areas do not strictly decrease with speed");
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |msg: &str| Err(ProfileError::InvalidCalibration(msg.into()));
        if !(self.q > 0.0) || !self.q.is_finite() {
            return bad("Q must be positive");
        }
        if !(self.v_min > 0.0) || !(self.v_max >= self.v_min) || !self.v_max.is_finite() {
            return bad("need 0 < v_min <= v_max");
        }
        if self.samples.iter().any(|s| !(s.speed > 0.0) || !(s.area >= 0.0)) {
            return bad("sample speeds must be positive and areas non-negative");
        }
        if self.model == FlowModel::PiecewiseInverseSpeed && self.samples.len() < 2 {
            return bad("piecewise model needs at least 2 samples");
        }
        Ok(())
    }

    /// Areas strictly decrease as speed increases.
    pub fn is_monotonic(&self) -> bool {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| a.speed.total_cmp(&b.speed));
        s.windows(2).all(|w| w[1].area < w[0].area)
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.v_min, self.v_max)
    }

    /// Area deposited at `speed` under this model.
    pub fn area_at(&self, speed: f64) -> f64 {
        match self.model {
            FlowModel::ConstantFlow => self.q / speed,
            FlowModel::PiecewiseInverseSpeed => {
                let pts = self.inverse_speed_table();
                let u = 1.0 / speed;
                let seg = pts.windows(2).find(|w| u <= w[1].0).unwrap_or(&pts[pts.len() - 2..]);
                let (u0, a0, u1, a1) = (seg[0].0, seg[0].1, seg[1].0, seg[1].1);
                a0 + (a1 - a0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// `(1/v, A)` pairs sorted by `1/v`.
    fn inverse_speed_table(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.samples.iter().map(|s| (1.0 / s.speed, s.area)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "speed_mm_s,area_mm2,std_mm2,model_area_mm2")?;
        for s in &self.samples {
            writeln!(w, "{:.6},{:.6},{:.6},{:.6}", s.speed, s.area, s.std, self.area_at(s.speed))?;
        }
        Ok(())
    }
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Per speed: mean and std of measured areas over that speed's profiles.
pub fn calibrate(
    strip_scans: &[(f64, Vec<LaserProfile>)],
    params: &ProfileParams,
    model: FlowModel,
) -> Result<CalibrationModel, ProfileError> {
    if strip_scans.len() < 2 || strip_scans.iter().any(|(_, p)| p.len() < 2) {
        return Err(ProfileError::InsufficientSamples);
    }
    let mut samples = Vec::with_capacity(strip_scans.len());
    for (speed, profiles) in strip_scans {
        let areas = profiles.iter().map(|p| measure(p, params).map(|f| f.area)).collect::<Result<Vec<_>, _>>()?;
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        samples.push(CalibrationSample { speed: *speed, area: mean, std: sample_std(&areas) });
    }
    CalibrationModel::from_samples(samples, model)
}

/// Travel speed that deposits `area` per unit length, clamped to the
/// calibrated range. Non-positive areas get the fastest speed.
pub fn speed_for_area(m: &CalibrationModel, area: f64) -> f64 {
    if !(area > 0.0) {
        return m.v_max;
    }
    match m.model {
        FlowModel::ConstantFlow => m.clamp(m.q / area),
        FlowModel::PiecewiseInverseSpeed => {
            let pts = m.inverse_speed_table();
            let (first, last) = (pts[0], pts[pts.len() - 1]);
            if area <= first.1 {
                return m.v_max;
            }
            if area >= last.1 {
                return m.v_min;
            }
            for w in pts.windows(2) {
                let ((u0, a0), (u1, a1)) = (w[0], w[1]);
                if a1 > a0 && area >= a0 && area <= a1 {
                    let u = u0 + (area - a0) * (u1 - u0) / (a1 - a0);
                    return m.clamp(1.0 / u);
                }
            }
            m.clamp(m.q / area)
        }
    }
}
