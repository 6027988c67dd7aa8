//! Mask → skeleton → waypoint chain.

mod thinning;

use std::cmp::Ordering;
use std::io::{self, Write};
use std::path::PathBuf;

use log::{debug, warn};
use thiserror::Error;

use crate::geometry::{
    pixel_to_camera, transform_point, CameraIntrinsics, CrackOrientation, FrameTransform, GeometryError, PixelCoord,
    Point3, RigidTransform,
};
use crate::raster::{BinaryImage, DepthImage, MaskImage};
use crate::sensors::{render_truth_mask, SensorError};
use crate::specimen::Heightfield;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("segmentation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("mask is {got:?}, expected {expected:?}")]
    MaskSize { expected: (usize, usize), got: (usize, usize) },
    #[error("empty path")]
    EmptyPath,
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// What a segmenter may look at. The truth provider reads the specimen
/// directly; image-based providers would use `depth`.
pub struct SegmentationInput<'a> {
    pub hf: &'a Heightfield,
    pub camera_pose: &'a RigidTransform,
    pub k: &'a CameraIntrinsics,
    pub depth: &'a DepthImage,
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, input: &SegmentationInput<'_>) -> Result<MaskImage, PerceptionError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSegmenter {
    pub threshold: f64,
}

impl Default for TruthSegmenter {
    fn default() -> Self {
        Self { threshold: 0.2 }
    }
}

impl Segmenter for TruthSegmenter {
    fn segment(&self, input: &SegmentationInput<'_>) -> Result<MaskImage, PerceptionError> {
        Ok(render_truth_mask(input.hf, input.camera_pose, input.k, self.threshold)?)
    }
}

/// Loads a PGM mask from disk (0 background, 255 crack).
#[derive(Debug, Clone, PartialEq)]
pub struct FileSegmenter {
    pub path: PathBuf,
}

impl Segmenter for FileSegmenter {
    fn segment(&self, input: &SegmentationInput<'_>) -> Result<MaskImage, PerceptionError> {
        let mask = MaskImage::read_pgm(&self.path)
            .map_err(|e| PerceptionError::ProviderUnavailable(format!("{}: {e}", self.path.display())))?;
        let expected = (input.k.image_width(), input.k.image_height());
        if (mask.width, mask.height) != expected {
            return Err(PerceptionError::MaskSize { expected, got: (mask.width, mask.height) });
        }
        Ok(mask)
    }
}

pub fn segment(provider: &dyn Segmenter, input: &SegmentationInput<'_>) -> Result<MaskImage, PerceptionError> {
    provider.segment(input)
}

pub fn binarize(mask: &MaskImage, threshold: u8) -> BinaryImage {
    BinaryImage { width: mask.width, height: mask.height, data: mask.data.iter().map(|&v| v >= threshold).collect() }
}

/// One-pixel-wide centreline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pub image: BinaryImage,
    /// Set pixels `(u, v)` in row-major order.
    pub pixels: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    /// True when no 2×2 block is fully set.
    pub fn is_one_pixel_wide(&self) -> bool {
        let img = &self.image;
        (0..img.height.saturating_sub(1)).all(|y| {
            (0..img.width.saturating_sub(1))
                .all(|x| !(img.get(x, y) && img.get(x + 1, y) && img.get(x, y + 1) && img.get(x + 1, y + 1)))
        })
    }
}

pub fn skeletonize(binary: &BinaryImage) -> Skeleton {
    let image = thinning::thin(binary);
    let pixels = image.pixels();
    Skeleton { image, pixels }
}

/// Median of the valid depths in the 3×3 neighbourhood.
fn median_depth(depth: &DepthImage, u: usize, v: usize) -> Option<f64> {
    let mut vals = Vec::with_capacity(9);
    for dv in -1i64..=1 {
        for du in -1i64..=1 {
            let (x, y) = (u as i64 + du, v as i64 + dv);
            if x >= 0 && y >= 0 && (x as usize) < depth.width && (y as usize) < depth.height {
                if let Some(d) = depth.get(x as usize, y as usize) {
                    vals.push(d);
                }
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    Some(if n % 2 == 1 { vals[n / 2] } else { 0.5 * (vals[n / 2 - 1] + vals[n / 2]) })
}

/// Greedy thinning of the skeleton to points at least `min_spacing` pixels
/// apart, each carrying the 3×3 median depth.
pub fn extract_pixels(sk: &Skeleton, depth: &DepthImage, min_spacing: f64) -> Vec<PixelCoord> {
    if sk.is_empty() {
        warn!("empty skeleton, no waypoints extracted");
        return Vec::new();
    }
    let min_sq = min_spacing * min_spacing;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for &(u, v) in &sk.pixels {
        let far = kept.iter().all(|&(ku, kv)| {
            let (du, dv) = (u as f64 - ku as f64, v as f64 - kv as f64);
            du * du + dv * dv >= min_sq
        });
        if far {
            kept.push((u, v));
        }
    }
    kept.into_iter()
        .filter_map(|(u, v)| match median_depth(depth, u, v) {
            Some(d) => Some(PixelCoord::new(u as f64, v as f64, d)),
            None => {
                debug!("dropping skeleton pixel ({u}, {v}): no valid depth nearby");
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub pixel: PixelCoord,
    pub camera_pt: Point3,
    pub robot_pt: Point3,
    pub refined_robot_pt: Option<Point3>,
    pub area: Option<f64>,
    pub speed: Option<f64>,
}

impl Waypoint {
    /// Best available robot-frame position.
    pub fn position(&self) -> &Point3 {
        self.refined_robot_pt.as_ref().unwrap_or(&self.robot_pt)
    }

    pub const CSV_HEADER: &'static str = "u,v,depth,x_c,y_c,z_c,x_0,y_0,z_0,x_ref,y_ref,z_ref,area,speed";

    pub fn write_csv_row<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let (c, r) = (&self.camera_pt, &self.robot_pt);
        let refined = self.refined_robot_pt.as_ref();
        writeln!(
            w,
            "{:.0},{:.0},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            self.pixel.u,
            self.pixel.v,
            self.pixel.depth,
            c.x,
            c.y,
            c.z,
            r.x,
            r.y,
            r.z,
            opt(refined.map(|p| p.x)),
            opt(refined.map(|p| p.y)),
            opt(refined.map(|p| p.z)),
            opt(self.area),
            opt(self.speed)
        )
    }
}

pub fn write_waypoints_csv<W: Write>(w: &mut W, waypoints: &[Waypoint]) -> io::Result<()> {
    writeln!(w, "{}", Waypoint::CSV_HEADER)?;
    waypoints.iter().try_for_each(|wp| wp.write_csv_row(w))
}

pub fn pixels_to_robot(
    points: &[PixelCoord],
    k: &CameraIntrinsics,
    t_c0: &RigidTransform,
) -> Result<Vec<Waypoint>, GeometryError> {
    let t = FrameTransform::camera_to_robot(*t_c0);
    points
        .iter()
        .map(|p| {
            let camera_pt = pixel_to_camera(p, k)?;
            let robot_pt = transform_point(&camera_pt, &t)?;
            Ok(Waypoint { pixel: *p, camera_pt, robot_pt, refined_robot_pt: None, area: None, speed: None })
        })
        .collect()
}

fn extents(points: &[Waypoint]) -> (f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points.iter().map(Waypoint::position) {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (x1 - x0, y1 - y0)
}

/// A crack whose points spread further along robot y than x runs across the
/// image horizontally and is profiled along robot x.
pub fn classify_orientation(points: &[Waypoint]) -> CrackOrientation {
    let (ex, ey) = extents(points);
    if ex >= ey {
        CrackOrientation::Vertical
    } else {
        CrackOrientation::Horizontal
    }
}

/// Sorts along the axis with the larger coordinate spread (x on ties),
/// breaking ties on the other axis.
pub fn order_path(points: &[Waypoint]) -> Result<Vec<Waypoint>, PerceptionError> {
    if points.is_empty() {
        return Err(PerceptionError::EmptyPath);
    }
    let (ex, ey) = extents(points);
    let by_x = ex >= ey;
    let key = |w: &Waypoint| {
        let p = w.position();
        if by_x {
            (p.x, p.y)
        } else {
            (p.y, p.x)
        }
    };
    let mut out = points.to_vec();
    out.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        match ka.0.total_cmp(&kb.0) {
            Ordering::Equal => ka.1.total_cmp(&kb.1),
            o => o,
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use nalgebra::Vector3;

    fn wp(x: f64, y: f64) -> Waypoint {
        let p = Point3::robot(x, y, 0.0);
        Waypoint {
            pixel: PixelCoord::new(0.0, 0.0, 1.0),
            camera_pt: Point3::new(x, y, 0.0, Frame::Camera),
            robot_pt: p,
            refined_robot_pt: None,
            area: None,
            speed: None,
        }
    }

    fn xy(v: &[Waypoint]) -> Vec<(f64, f64)> {
        v.iter().map(|w| (w.robot_pt.x, w.robot_pt.y)).collect()
    }

    #[test]
    fn binarize_ramp_keeps_upper_half() {
        let mask = MaskImage { width: 256, height: 1, data: (0..=255).collect() };
        let b = binarize(&mask, 128);
        assert_eq!(b.count(), 128);
        assert!(b.data[128..].iter().all(|&v| v));
        let zero = MaskImage::new(4, 4);
        assert_eq!(binarize(&zero, 1).count(), 0);
    }

    #[test]
    fn thin_line_unchanged_and_bar_centred() {
        let mut line = BinaryImage::new(20, 5);
        (0..20).for_each(|x| line.set(x, 2, true));
        assert_eq!(skeletonize(&line).image, line);

        let mut bar = BinaryImage::new(24, 7);
        for y in 2..5 {
            (2..22).for_each(|x| bar.set(x, y, true));
        }
        let sk = skeletonize(&bar);
        assert!(sk.is_one_pixel_wide());
        assert_eq!(sk.image.component_count(), 1);
        assert!(sk.pixels.iter().all(|&(_, y)| (2..=4).contains(&y)));
        assert!(sk.pixels.iter().filter(|&&(_, y)| y == 3).count() >= 14);
        assert_eq!(skeletonize(&BinaryImage::new(5, 5)).len(), 0);
    }

    #[test]
    fn extraction_spacing_on_a_line() {
        let mut line = BinaryImage::new(120, 3);
        (10..110).for_each(|x| line.set(x, 1, true));
        let sk = skeletonize(&line);
        let mut depth = DepthImage::new(120, 3);
        (0..120).for_each(|u| depth.set(u, 1, Some(500.0)));
        let pts = extract_pixels(&sk, &depth, 10.0);
        assert!((10..=11).contains(&pts.len()), "{}", pts.len());
        for a in &pts {
            for b in &pts {
                if a != b {
                    assert!(((a.u - b.u).powi(2) + (a.v - b.v).powi(2)).sqrt() >= 10.0);
                }
            }
        }
        assert_eq!(extract_pixels(&sk, &depth, 0.0).len(), 100);
    }

    #[test]
    fn extraction_drops_pixels_without_depth() {
        let mut line = BinaryImage::new(30, 5);
        (0..30).for_each(|x| line.set(x, 2, true));
        let sk = skeletonize(&line);
        let mut depth = DepthImage::new(30, 5);
        (15..30).for_each(|u| depth.set(u, 2, Some(400.0)));
        let pts = extract_pixels(&sk, &depth, 5.0);
        assert!(pts.iter().all(|p| p.u >= 14.0 && p.depth == 400.0));
        assert_eq!(pts.len(), 3);
    }

    #[test]
    fn median_of_neighbourhood() {
        let mut depth = DepthImage::new(3, 3);
        depth.set(0, 0, Some(1.0));
        depth.set(1, 1, Some(100.0));
        depth.set(2, 2, Some(3.0));
        assert_eq!(median_depth(&depth, 1, 1), Some(3.0));
        depth.set(2, 2, None);
        assert_eq!(median_depth(&depth, 1, 1), Some(50.5));
    }

    #[test]
    fn ordering_examples() {
        let pts = vec![wp(3.0, 1.0), wp(1.0, 2.0), wp(2.0, 1.0)];
        assert_eq!(xy(&order_path(&pts).unwrap()), vec![(1.0, 2.0), (2.0, 1.0), (3.0, 1.0)]);
        let tall = vec![wp(0.0, 5.0), wp(1.0, 0.0), wp(0.0, 2.0)];
        assert_eq!(xy(&order_path(&tall).unwrap()), vec![(1.0, 0.0), (0.0, 2.0), (0.0, 5.0)]);
        let square = vec![wp(1.0, 0.0), wp(0.0, 1.0)];
        assert_eq!(xy(&order_path(&square).unwrap()), vec![(0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(xy(&order_path(&[wp(4.0, 4.0)]).unwrap()), vec![(4.0, 4.0)]);
        assert!(matches!(order_path(&[]), Err(PerceptionError::EmptyPath)));
    }

    #[test]
    fn robot_points_from_pixels() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let px = [PixelCoord::new(320.0, 240.0, 500.0), PixelCoord::new(920.0, 240.0, 500.0)];
        let w = pixels_to_robot(&px, &k, &RigidTransform::identity()).unwrap();
        assert_eq!(w[1].robot_pt.coords(), w[1].camera_pt.coords());
        assert_eq!(w[1].robot_pt.frame, Frame::Robot);
        let down = RigidTransform::new(nalgebra::Matrix3::identity(), Vector3::new(0.0, 0.0, -500.0)).unwrap();
        let w = pixels_to_robot(&px[..1], &k, &down).unwrap();
        assert_eq!(w[0].robot_pt.coords(), Vector3::zeros());
    }

    #[test]
    fn missing_mask_file_is_unavailable() {
        let hf = Heightfield::flat([0.0, 0.0], 1.0, 10, 10, 0.0, 10.0);
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let depth = DepthImage::new(640, 480);
        let pose = RigidTransform::identity();
        let input = SegmentationInput { hf: &hf, camera_pose: &pose, k: &k, depth: &depth };
        let seg = FileSegmenter { path: PathBuf::from("/nonexistent/mask.pgm") };
        assert!(matches!(segment(&seg, &input), Err(PerceptionError::ProviderUnavailable(_))));
    }
}
