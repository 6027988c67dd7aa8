//! Procedural crack specimens and the material deposition model.
//!
//! A specimen is a [`Heightfield`] over the robot `xy` plane. Cracks are
//! carved as rectangular troughs along a polyline; filling deposits a fixed
//! cross-sectional area `Q / speed` per unit travel. Material floods the local
//! trough bottom-up and any excess becomes a bead above the nominal surface.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CrackOrientation, Frame, Point3};

/// Cells deeper than this below the nominal surface count as trough.
const TROUGH_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecimenError {
    #[error("crack path does not fit inside the grid with the requested margin: {0}")]
    PathOutsideGrid(String),
    #[error("station lies outside the heightfield")]
    StationOutsideGrid,
    #[error("deposition speed must be positive, got {0}")]
    ZeroSpeed(f64),
    #[error("deposition segment or bead leaves the heightfield")]
    SegmentOutsideGrid,
    #[error("deposition points must be in the robot frame, got {0:?}")]
    WrongFrame(Frame),
    #[error("invalid crack spec: {0}")]
    InvalidSpec(String),
    #[error("invalid deposition parameters: {0}")]
    InvalidParams(String),
    #[error("bead height {height:.3} mm exceeds the overfill cap of {cap} mm")]
    OverfillCapExceeded { height: f64, cap: f64 },
}

/// Regular grid of surface heights (robot frame, mm).
///
/// Cell `(i, j)` covers `[ox + i·c, ox + (i+1)·c) × [oy + j·c, oy + (j+1)·c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
    nominal_surface: f64,
    max_overfill_cap: f64,
}

impl Heightfield {
    pub fn flat(
        origin: [f64; 2],
        cell_size: f64,
        nx: usize,
        ny: usize,
        nominal_surface: f64,
        max_overfill_cap: f64,
    ) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self { origin, cell_size, nx, ny, heights: vec![nominal_surface; nx * ny], nominal_surface, max_overfill_cap }
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nominal_surface(&self) -> f64 {
        self.nominal_surface
    }
    pub fn max_overfill_cap(&self) -> f64 {
        self.max_overfill_cap
    }
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }
    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heights[self.index(i, j)]
    }

    pub fn set_height(&mut self, i: usize, j: usize, z: f64) {
        let idx = self.index(i, j);
        self.heights[idx] = z;
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + (i as f64 + 0.5) * self.cell_size, self.origin[1] + (j as f64 + 0.5) * self.cell_size]
    }

    /// Extent `[x_min, x_max, y_min, y_max]`.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[0] + self.nx as f64 * self.cell_size,
            self.origin[1],
            self.origin[1] + self.ny as f64 * self.cell_size,
        ]
    }

    #[inline]
    fn axis_index(&self, value: f64, origin: f64, n: usize) -> Option<usize> {
        let f = ((value - origin) / self.cell_size).floor();
        if f >= 0.0 && f < n as f64 {
            Some(f as usize)
        } else {
            None
        }
    }

    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((self.axis_index(x, self.origin[0], self.nx)?, self.axis_index(y, self.origin[1], self.ny)?))
    }

    /// Height of the cell containing `(x, y)`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_of(x, y).map(|(i, j)| self.height(i, j))
    }

    pub fn height_range(&self) -> (f64, f64) {
        self.heights.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)))
    }

    /// `Σ h · cell_area` over the whole grid.
    pub fn total_volume(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.cell_area()
    }

    /// Volume added relative to `before`; both must share a grid.
    pub fn volume_added_since(&self, before: &Heightfield) -> f64 {
        assert_eq!(self.heights.len(), before.heights.len(), "grid mismatch");
        self.heights.iter().zip(&before.heights).map(|(a, b)| a - b).sum::<f64>() * self.cell_area()
    }

    /// 16-bit binary PGM. Heights map linearly from `[z_min, z_max]` onto
    /// `[0, 65535]`; the header comment records the mapping and grid geometry.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let (lo, hi) = self.height_range();
        let span = hi - lo;
        writeln!(w, "P5")?;
        writeln!(
            w,
            "# origin_x={} origin_y={} cell_size={} nominal_surface={} z_min={} z_max={}",
            self.origin[0], self.origin[1], self.cell_size, self.nominal_surface, lo, hi
        )?;
        writeln!(w, "{} {}", self.nx, self.ny)?;
        writeln!(w, "65535")?;
        let mut buf = Vec::with_capacity(self.heights.len() * 2);
        // Row 0 of the image is the highest y so the picture matches a top view.
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                let h = self.height(i, j);
                let q = if span > 0.0 { ((h - lo) / span * 65535.0).round() as u16 } else { 0 };
                buf.extend_from_slice(&q.to_be_bytes());
            }
        }
        w.write_all(&buf)
    }

    /// `x,y,z` rows at cell centres.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,y,z")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let [x, y] = self.cell_center(i, j);
                writeln!(w, "{:.4},{:.4},{:.6}", x, y, self.height(i, j))?;
            }
        }
        Ok(())
    }
}

/// Piecewise-linear function of arclength, clamped beyond its end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArcProfile {
    Constant(f64),
    /// `(s, value)` nodes sorted by `s`.
    Table(Vec<[f64; 2]>),
}

impl ArcProfile {
    pub fn linear(start: f64, end: f64, length: f64) -> Self {
        ArcProfile::Table(vec![[0.0, start], [length, end]])
    }

    pub fn at(&self, s: f64) -> f64 {
        match self {
            ArcProfile::Constant(v) => *v,
            ArcProfile::Table(nodes) => {
                let first = nodes[0];
                if s <= first[0] {
                    return first[1];
                }
                for w in nodes.windows(2) {
                    let ([s0, v0], [s1, v1]) = (w[0], w[1]);
                    if s <= s1 {
                        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 1.0 };
                        return v0 + t * (v1 - v0);
                    }
                }
                nodes[nodes.len() - 1][1]
            }
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            ArcProfile::Constant(v) => *v,
            ArcProfile::Table(nodes) => nodes.iter().map(|n| n[1]).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            ArcProfile::Constant(v) => *v,
            ArcProfile::Table(nodes) => nodes.iter().map(|n| n[1]).fold(f64::INFINITY, f64::min),
        }
    }

    fn validate(&self, name: &str) -> Result<(), SpecimenError> {
        if let ArcProfile::Table(nodes) = self {
            if nodes.is_empty() {
                return Err(SpecimenError::InvalidSpec(format!("{name} table is empty")));
            }
            if nodes.windows(2).any(|w| w[1][0] < w[0][0]) {
                return Err(SpecimenError::InvalidSpec(format!("{name} table not sorted by arclength")));
            }
        }
        // Linear interpolation keeps the function positive iff every node is.
        if !(self.min() > 0.0) || !self.max().is_finite() {
            return Err(SpecimenError::InvalidSpec(format!("{name} must be positive and finite")));
        }
        Ok(())
    }
}

/// A single crack: a monotone polyline with rectangular cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrackSpec {
    pub path: Vec<[f64; 2]>,
    pub width: ArcProfile,
    pub depth: ArcProfile,
    #[serde(default)]
    pub orientation: CrackOrientation,
}

impl CrackSpec {
    pub fn straight(from: [f64; 2], to: [f64; 2], width: f64, depth: f64, orientation: CrackOrientation) -> Self {
        Self {
            path: vec![from, to],
            width: ArcProfile::Constant(width),
            depth: ArcProfile::Constant(depth),
            orientation,
        }
    }

    pub fn validate(&self) -> Result<(), SpecimenError> {
        if self.path.len() < 2 {
            return Err(SpecimenError::InvalidSpec("path needs at least two points".into()));
        }
        if self.path.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SpecimenError::InvalidSpec("path has non-finite coordinates".into()));
        }
        self.width.validate("width")?;
        self.depth.validate("depth")
    }

    pub fn length(&self) -> f64 {
        self.path.windows(2).map(|w| seg_len(w[0], w[1])).sum()
    }

    /// Analytic trough area `w(s)·d(s)`.
    pub fn area_at(&self, s: f64) -> f64 {
        self.width.at(s) * self.depth.at(s)
    }

    /// Distance from `(x, y)` to the centreline, together with the arclength
    /// of the closest point.
    pub fn distance_to_centerline(&self, x: f64, y: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let mut s0 = 0.0;
        for w in self.path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = seg_len(a, b);
            let t = if len > 0.0 {
                (((x - a[0]) * (b[0] - a[0]) + (y - a[1]) * (b[1] - a[1])) / (len * len)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let px = a[0] + t * (b[0] - a[0]);
            let py = a[1] + t * (b[1] - a[1]);
            let d = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
            if d < best.0 {
                best = (d, s0 + t * len);
            }
            s0 += len;
        }
        best
    }
}

fn seg_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Grid layout for [`generate_specimen`]: the path bounding box grown by
/// `margin` on every side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub cell_size: f64,
    pub margin: f64,
    pub nominal_surface: f64,
    pub max_overfill_cap: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { cell_size: 0.1, margin: 40.0, nominal_surface: 0.0, max_overfill_cap: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepositionParams {
    /// Volumetric extrusion rate `Q` (mm³/s).
    pub flow_rate: f64,
    pub nozzle_diameter: f64,
    /// Extrusion before motion starts (s).
    pub purge_time: f64,
}

impl Default for DepositionParams {
    fn default() -> Self {
        Self { flow_rate: TABLE1_FLOW_RATE, nozzle_diameter: 4.0, purge_time: 0.0 }
    }
}

/// Least-squares constant-flow fit `Σ(Aᵢ/vᵢ) / Σ(1/vᵢ²)` of the published
/// speed/area calibration rows (mm³/s).
pub const TABLE1_FLOW_RATE: f64 = 946.063_567_318_757_2;

impl DepositionParams {
    pub fn validate(&self) -> Result<(), SpecimenError> {
        if !(self.flow_rate > 0.0) || !self.flow_rate.is_finite() {
            return Err(SpecimenError::InvalidParams(format!("flow_rate must be positive, got {}", self.flow_rate)));
        }
        if !(self.nozzle_diameter > 0.0) {
            return Err(SpecimenError::InvalidParams("nozzle_diameter must be positive".into()));
        }
        if !(self.purge_time >= 0.0) {
            return Err(SpecimenError::InvalidParams("purge_time must be non-negative".into()));
        }
        Ok(())
    }
}

/// Carves `spec` into a flat plate sized from `grid`.
///
/// A cell is carved when its centre lies within `w(s)/2` of the centreline
/// (measured perpendicular to a path segment, never past the path ends); the
/// carved height is `nominal − d(s)`.
pub fn generate_specimen(spec: &CrackSpec, grid: &GridParams) -> Result<Heightfield, SpecimenError> {
    spec.validate()?;
    if !(grid.cell_size > 0.0) {
        return Err(SpecimenError::InvalidSpec("cell_size must be positive".into()));
    }
    let max_w = spec.width.max();
    if !(grid.margin >= max_w) {
        return Err(SpecimenError::PathOutsideGrid(format!(
            "margin {} mm is smaller than the maximum crack width {} mm",
            grid.margin, max_w
        )));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &spec.path {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let origin = [x0 - grid.margin, y0 - grid.margin];
    let nx = ((x1 - x0 + 2.0 * grid.margin) / grid.cell_size).ceil() as usize;
    let ny = ((y1 - y0 + 2.0 * grid.margin) / grid.cell_size).ceil() as usize;
    let mut hf = Heightfield::flat(origin, grid.cell_size, nx, ny, grid.nominal_surface, grid.max_overfill_cap);

    let mut s_start = 0.0;
    for w in spec.path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = seg_len(a, b);
        if len == 0.0 {
            continue;
        }
        let (dx, dy) = ((b[0] - a[0]) / len, (b[1] - a[1]) / len);
        let half = max_w / 2.0;
        let bx0 = a[0].min(b[0]) - half;
        let bx1 = a[0].max(b[0]) + half;
        let by0 = a[1].min(b[1]) - half;
        let by1 = a[1].max(b[1]) + half;
        let i0 = hf.axis_index(bx0, origin[0], nx).unwrap_or(0);
        let i1 = hf.axis_index(bx1, origin[0], nx).unwrap_or(nx - 1);
        let j0 = hf.axis_index(by0, origin[1], ny).unwrap_or(0);
        let j1 = hf.axis_index(by1, origin[1], ny).unwrap_or(ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let [cx, cy] = hf.cell_center(i, j);
                let along = (cx - a[0]) * dx + (cy - a[1]) * dy;
                if !(0.0..=len).contains(&along) {
                    continue;
                }
                let across = (-(cx - a[0]) * dy + (cy - a[1]) * dx).abs();
                let s = s_start + along;
                if across < spec.width.at(s) / 2.0 {
                    let z = grid.nominal_surface - spec.depth.at(s);
                    let idx = hf.index(i, j);
                    if z < hf.heights[idx] {
                        hf.heights[idx] = z;
                    }
                }
            }
        }
        s_start += len;
    }
    Ok(hf)
}

/// Line of integration across the crack: centre, unit normal and half-length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSectionStation {
    pub center: [f64; 2],
    pub normal: [f64; 2],
    pub half_length: f64,
}

/// Ground-truth trough area `Σ max(0, nominal − h)·step` along the station line.
pub fn true_cross_section(hf: &Heightfield, station: &CrossSectionStation) -> Result<f64, SpecimenError> {
    let n_len = (station.normal[0].powi(2) + station.normal[1].powi(2)).sqrt();
    if !(n_len > 0.0) || !(station.half_length > 0.0) {
        return Err(SpecimenError::StationOutsideGrid);
    }
    let (nx, ny) = (station.normal[0] / n_len, station.normal[1] / n_len);
    let step = hf.cell_size / 4.0;
    let n = (2.0 * station.half_length / step).round().max(1.0) as usize;
    let step = 2.0 * station.half_length / n as f64;
    let mut area = 0.0;
    for k in 0..n {
        let t = -station.half_length + (k as f64 + 0.5) * step;
        let h = hf
            .sample(station.center[0] + t * nx, station.center[1] + t * ny)
            .ok_or(SpecimenError::StationOutsideGrid)?;
        area += (hf.nominal_surface - h).max(0.0) * step;
    }
    Ok(area)
}

/// Bookkeeping for one [`deposit`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepositOutcome {
    pub elapsed: f64,
    pub length: f64,
    pub speed: f64,
    /// `(Q / speed) · length`.
    pub expected_volume: f64,
    /// `Σ Δh · cell_area` over the cells touched.
    pub deposited_volume: f64,
}

impl DepositOutcome {
    pub fn relative_volume_error(&self) -> f64 {
        if self.expected_volume == 0.0 {
            self.deposited_volume.abs()
        } else {
            ((self.deposited_volume - self.expected_volume) / self.expected_volume).abs()
        }
    }
}

/// Whether a segment owns the grid line containing its end point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    Inclusive,
    Exclusive,
}

/// Travels from `from` to `to` at `speed` while extruding at the constant
/// flow rate, laying down `Q / speed` mm² of cross-section per mm travelled.
pub fn deposit(
    hf: &mut Heightfield,
    from: &Point3,
    to: &Point3,
    speed: f64,
    params: &DepositionParams,
) -> Result<DepositOutcome, SpecimenError> {
    deposit_segment(hf, from, to, speed, params, SegmentEnd::Inclusive)
}

/// [`deposit`] with explicit ownership of the final grid line, so that chained
/// segments deposit each grid line exactly once.
pub fn deposit_segment(
    hf: &mut Heightfield,
    from: &Point3,
    to: &Point3,
    speed: f64,
    params: &DepositionParams,
    end: SegmentEnd,
) -> Result<DepositOutcome, SpecimenError> {
    for p in [from, to] {
        if p.frame != Frame::Robot {
            return Err(SpecimenError::WrongFrame(p.frame));
        }
    }
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(SpecimenError::ZeroSpeed(speed));
    }
    params.validate()?;
    if hf.cell_of(from.x, from.y).is_none() || hf.cell_of(to.x, to.y).is_none() {
        return Err(SpecimenError::SegmentOutsideGrid);
    }

    let (dx, dy) = (to.x - from.x, to.y - from.y);
    let length = (dx * dx + dy * dy).sqrt();
    let area = params.flow_rate / speed;
    let elapsed = length / speed;
    let mut outcome = DepositOutcome { elapsed, length, speed, expected_volume: area * length, deposited_volume: 0.0 };
    if length == 0.0 {
        return Ok(outcome);
    }

    // Sweep grid lines perpendicular to the dominant travel axis.
    let along_y = dy.abs() >= dx.abs();
    let (a0, a1, origin_a, n_a) =
        if along_y { (from.y, to.y, hf.origin[1], hf.ny) } else { (from.x, to.x, hf.origin[0], hf.nx) };
    let l0 = hf.axis_index(a0, origin_a, n_a).ok_or(SpecimenError::SegmentOutsideGrid)? as i64;
    let l1 = hf.axis_index(a1, origin_a, n_a).ok_or(SpecimenError::SegmentOutsideGrid)? as i64;
    let dir = if l1 >= l0 { 1 } else { -1 };
    let mut lines: Vec<i64> = Vec::new();
    let mut l = l0;
    while l != l1 {
        lines.push(l);
        l += dir;
    }
    if end == SegmentEnd::Inclusive || lines.is_empty() {
        lines.push(l1);
    }

    let c = hf.cell_size;
    let area_per_line = area * length / (lines.len() as f64 * c);
    let n_lateral = if along_y { hf.nx } else { hf.ny };
    let mut section = vec![0.0; n_lateral];
    for &line in &lines {
        let line = line as usize;
        let line_center = origin_a + (line as f64 + 0.5) * c;
        let t = ((line_center - a0) / (a1 - a0)).clamp(0.0, 1.0);
        let lateral_pos = if along_y { from.x + t * dx } else { from.y + t * dy };
        let lateral_origin = if along_y { hf.origin[0] } else { hf.origin[1] };

        for (k, h) in section.iter_mut().enumerate() {
            *h = if along_y { hf.height(k, line) } else { hf.height(line, k) };
        }
        let added = deposit_cross_section(
            &mut section,
            lateral_origin,
            c,
            hf.nominal_surface,
            lateral_pos,
            area_per_line,
            params.nozzle_diameter,
        )?;
        outcome.deposited_volume += added * c;
        let cap = hf.nominal_surface + hf.max_overfill_cap;
        for (k, &h) in section.iter().enumerate() {
            if h > cap {
                return Err(SpecimenError::OverfillCapExceeded {
                    height: h - hf.nominal_surface,
                    cap: hf.max_overfill_cap,
                });
            }
            let (i, j) = if along_y { (k, line) } else { (line, k) };
            hf.set_height(i, j, h);
        }
    }
    Ok(outcome)
}

/// Deposits `area` mm² into one grid line of heights. Returns the area added.
fn deposit_cross_section(
    heights: &mut [f64],
    origin: f64,
    cell: f64,
    nominal: f64,
    position: f64,
    area: f64,
    nozzle: f64,
) -> Result<f64, SpecimenError> {
    let n = heights.len();
    let before: f64 = heights.iter().sum();
    let center = ((position - origin) / cell).floor();
    if !(center >= 0.0 && center < n as f64) {
        return Err(SpecimenError::SegmentOutsideGrid);
    }
    let center = center as usize;
    let footprint = ((nozzle / 2.0) / cell).ceil() as usize;

    // Trough cell under the nozzle footprint closest to the nozzle, if any.
    let is_trough = |h: f64| h < nominal - TROUGH_EPS;
    let seed = (0..=footprint).find_map(|off| {
        [center.checked_sub(off), Some(center + off)].into_iter().flatten().find(|&k| k < n && is_trough(heights[k]))
    });

    let mut excess = area;
    let mut bead_width = nozzle;
    if let Some(seed) = seed {
        let mut lo = seed;
        while lo > 0 && is_trough(heights[lo - 1]) {
            lo -= 1;
        }
        let mut hi = seed;
        while hi + 1 < n && is_trough(heights[hi + 1]) {
            hi += 1;
        }
        let trough = &mut heights[lo..=hi];
        let capacity: f64 = trough.iter().map(|h| (nominal - h) * cell).sum();
        if area <= capacity {
            let level = flood_level(trough, cell, area);
            for h in trough.iter_mut() {
                if *h < level {
                    *h = level;
                }
            }
            excess = 0.0;
        } else {
            trough.iter_mut().for_each(|h| *h = nominal);
            excess = area - capacity;
        }
        bead_width = ((hi - lo + 1) as f64 * cell).min(nozzle);
    }

    if excess > 0.0 {
        let half = bead_width / 2.0;
        let k0 = ((position - half - origin) / cell).floor();
        let k1 = ((position + half - origin) / cell).floor();
        if k0 < 0.0 || k1 >= n as f64 {
            return Err(SpecimenError::SegmentOutsideGrid);
        }
        let bead = BeadSection::new(bead_width, excess);
        let mut parts = Vec::new();
        let mut total = 0.0;
        for k in k0 as usize..=k1 as usize {
            let a = (origin + k as f64 * cell - position).max(-half);
            let b = (origin + (k + 1) as f64 * cell - position).min(half);
            if b - a > 1e-9 * cell {
                let part = bead.integral(a, b).max(0.0);
                total += part;
                parts.push((k, part));
            }
        }
        if total > 0.0 {
            let scale = excess / total;
            for (k, part) in parts {
                heights[k] += part * scale / cell;
            }
        }
    }
    let after: f64 = heights.iter().sum();
    Ok((after - before) * cell)
}

/// Water level at which `area` fills the trough cells bottom-up.
fn flood_level(trough: &[f64], cell: f64, area: f64) -> f64 {
    let mut sorted: Vec<f64> = trough.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut filled = 0.0;
    for (k, &base) in sorted.iter().enumerate() {
        // The lowest k+1 cells sit at `base`; raise them toward the next cell.
        let next = sorted.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let width = (k + 1) as f64 * cell;
        let room = (next - base) * width;
        if filled + room >= area {
            return base + (area - filled) / width;
        }
        filled += room;
    }
    unreachable!("final room is infinite")
}

/// Bead cross-section above the surface with chord `width`.
///
/// Up to a semicircle the shape is a circular segment. Larger beads keep a
/// semicircular crown on top of a vertical column of the chord's width.
#[derive(Debug, Clone, Copy)]
enum BeadSection {
    Segment { radius: f64, sagitta: f64 },
    Column { radius: f64, column: f64 },
}

impl BeadSection {
    fn new(width: f64, area: f64) -> Self {
        let half = width / 2.0;
        let semicircle = PI * half * half / 2.0;
        if area >= semicircle {
            return BeadSection::Column { radius: half, column: (area - semicircle) / width };
        }
        let (mut lo, mut hi) = (0.0, half);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if segment_area(half, mid) < area {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sagitta = 0.5 * (lo + hi);
        let radius = (half * half + sagitta * sagitta) / (2.0 * sagitta);
        BeadSection::Segment { radius, sagitta }
    }

    /// `∫ₐᵇ height(t) dt` with `t` measured from the chord centre.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let arc = |t: f64, r: f64| {
            let t = t.clamp(-r, r);
            0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
        };
        match *self {
            BeadSection::Segment { radius, sagitta } => arc(b, radius) - arc(a, radius) - (radius - sagitta) * (b - a),
            BeadSection::Column { radius, column } => arc(b, radius) - arc(a, radius) + column * (b - a),
        }
    }
}

fn segment_area(half_chord: f64, sagitta: f64) -> f64 {
    if sagitta <= 0.0 {
        return 0.0;
    }
    let r = (half_chord * half_chord + sagitta * sagitta) / (2.0 * sagitta);
    let theta = 2.0 * (half_chord / r).min(1.0).asin();
    0.5 * r * r * (theta - theta.sin())
}
