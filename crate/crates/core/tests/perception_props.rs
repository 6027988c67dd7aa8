use crack_repair::geometry::{Frame, PixelCoord, Point3};
use crack_repair::perception::*;
use crack_repair::raster::{BinaryImage, DepthImage};
use crack_repair::repair::{localize, Scene};
use crack_repair::sensors::SensorNoise;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Bar { x0: usize, y0: usize, w: usize, h: usize },
}

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (0.0..48.0f64, 0.0..48.0f64, 1.0..9.0f64).prop_map(|(cx, cy, r)| Shape::Disc { cx, cy, r }),
        (0..44usize, 0..44usize, 1..30usize, 1..12usize).prop_map(|(x0, y0, w, h)| Shape::Bar { x0, y0, w, h }),
    ]
}

fn blob() -> impl Strategy<Value = BinaryImage> {
    prop::collection::vec(shape(), 1..6).prop_map(|shapes| {
        let mut img = BinaryImage::new(48, 48);
        for s in shapes {
            for y in 0..48 {
                for x in 0..48 {
                    let inside = match s {
                        Shape::Disc { cx, cy, r } => (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r,
                        Shape::Bar { x0, y0, w, h } => x >= x0 && x < x0 + w && y >= y0 && y < y0 + h,
                    };
                    if inside {
                        img.set(x, y, true);
                    }
                }
            }
        }
        img
    })
}

fn wp(x: f64, y: f64) -> Waypoint {
    Waypoint {
        pixel: PixelCoord::new(0.0, 0.0, 1.0),
        camera_pt: Point3::new(x, y, 0.0, Frame::Camera),
        robot_pt: Point3::robot(x, y, 0.0),
        refined_robot_pt: None,
        area: None,
        speed: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn skeleton_is_thin_idempotent_and_inside(img in blob()) {
        let sk = skeletonize(&img);
        prop_assert!(sk.is_one_pixel_wide());
        prop_assert_eq!(skeletonize(&sk.image), sk.clone());
        prop_assert!(sk.pixels.iter().all(|&(x, y)| img.get(x, y)));
        prop_assert_eq!(sk.image.component_count(), img.component_count());
    }

    #[test]
    fn extracted_points_are_spaced_and_on_skeleton(img in blob(), spacing in 0.0..12.0f64) {
        let sk = skeletonize(&img);
        let mut depth = DepthImage::new(48, 48);
        for v in 0..48 {
            for u in 0..48 {
                depth.set(u, v, Some(400.0 + u as f64));
            }
        }
        let pts = extract_pixels(&sk, &depth, spacing);
        for (i, a) in pts.iter().enumerate() {
            prop_assert!(sk.image.get(a.u as usize, a.v as usize));
            for b in &pts[i + 1..] {
                prop_assert!(((a.u - b.u).powi(2) + (a.v - b.v).powi(2)).sqrt() >= spacing);
            }
        }
        if spacing == 0.0 {
            prop_assert_eq!(pts.len(), sk.len());
        }
    }

    #[test]
    fn order_path_is_monotone_permutation(pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 1..40)) {
        let input: Vec<Waypoint> = pts.iter().map(|&(x, y)| wp(x, y)).collect();
        let out = order_path(&input).unwrap();
        prop_assert_eq!(out.len(), input.len());
        let key = |w: &Waypoint| (w.robot_pt.x.to_bits(), w.robot_pt.y.to_bits());
        let mut a: Vec<_> = input.iter().map(key).collect();
        let mut b: Vec<_> = out.iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let ext = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        let by_x = ext(&xs) >= ext(&ys);
        let along = |w: &Waypoint| if by_x { w.robot_pt.x } else { w.robot_pt.y };
        let monotone = out.windows(2).all(|w| along(&w[0]) <= along(&w[1]));
        prop_assert!(monotone);
    }
}

#[test]
fn noiseless_chain_finds_the_centreline() {
    let scene = Scene { noise: SensorNoise::noiseless(), ..Scene::default() };
    let hf = scene.specimen().unwrap();
    let seg = TruthSegmenter { threshold: scene.perception.mask_threshold };
    let loc = localize(&scene, &hf, &seg, &scene.noise).unwrap();
    assert!(loc.waypoints.len() >= 20);
    for w in &loc.waypoints {
        let (d, _) = scene.crack.distance_to_centerline(w.robot_pt.x, w.robot_pt.y);
        assert!(d <= scene.grid.cell_size, "{:?} off by {d}", w.robot_pt);
    }
}

#[test]
fn default_spacing_gives_about_two_dozen_points() {
    let scene = Scene::default();
    let hf = scene.specimen().unwrap();
    let seg = TruthSegmenter::default();
    let loc = localize(&scene, &hf, &seg, &scene.noise).unwrap();
    assert!((22..=26).contains(&loc.waypoints.len()), "{}", loc.waypoints.len());
}

#[test]
fn uncracked_plate_yields_empty_mask() {
    let mut scene = Scene::default();
    scene.crack.depth = crack_repair::specimen::ArcProfile::Constant(0.1);
    let hf = scene.specimen().unwrap();
    let err = localize(&scene, &hf, &TruthSegmenter::default(), &scene.noise).unwrap_err();
    assert!(err.to_string().contains("no crack found"));
}
