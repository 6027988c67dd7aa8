use crack_repair::geometry::*;
use crack_repair::sensors::*;
use crack_repair::specimen::*;
use nalgebra::{Matrix3, Vector3};

fn k600() -> CameraIntrinsics {
    CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
}

fn down_pose() -> RigidTransform {
    RigidTransform::new(Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0), Vector3::new(0.0, 75.0, 500.0))
        .unwrap()
}

#[test]
fn noiseless_depth_back_projects_onto_the_surface() {
    let spec = CrackSpec::straight([0.0, 0.0], [0.0, 150.0], 10.0, 2.0, CrackOrientation::Horizontal);
    let hf = generate_specimen(&spec, &GridParams::default()).unwrap();
    let k = k600();
    let pose = down_pose();
    let img = render_depth(&hf, &pose, &k, &SensorNoise::noiseless()).unwrap();
    let t = FrameTransform::camera_to_robot(pose);
    let mut checked = 0;
    for v in (0..480).step_by(7) {
        for u in (0..640).step_by(7) {
            let Some(d) = img.get(u, v) else { continue };
            let cam = pixel_to_camera(&PixelCoord::new(u as f64, v as f64, d), &k).unwrap();
            let p = transform_point(&cam, &t).unwrap();
            // On a flat part the height matches; on a trough wall the point
            // lies between the heights of cells within one pitch.
            let c = hf.cell_size();
            let h = hf.sample(p.x, p.y).unwrap();
            let near: Vec<f64> = [-c, 0.0, c]
                .iter()
                .flat_map(|&ox| [-c, 0.0, c].map(|oy| hf.sample(p.x + ox, p.y + oy)))
                .flatten()
                .collect();
            let (lo, hi) = near.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
            assert!((h - p.z).abs() <= c || (lo - 1e-9..=hi + 1e-9).contains(&p.z), "pixel ({u},{v}) → {p:?}");
            checked += 1;
        }
    }
    assert!(checked > 400, "{checked}");
}

#[test]
fn captures_are_bit_identical_for_a_seed() {
    let spec = CrackSpec::straight([0.0, 0.0], [0.0, 150.0], 10.0, 2.0, CrackOrientation::Horizontal);
    let hf = generate_specimen(&spec, &GridParams::default()).unwrap();
    let noise = SensorNoise::default();
    let pose = RigidTransform::from_translation(0.0, 75.0, 0.0);
    let a = scan_profile(&hf, &pose, CrackOrientation::Horizontal, &LaserParams::default(), &noise, 9).unwrap();
    let b = scan_profile(&hf, &pose, CrackOrientation::Horizontal, &LaserParams::default(), &noise, 9).unwrap();
    assert!(a.z().iter().zip(b.z()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = scan_profile(&hf, &pose, CrackOrientation::Horizontal, &LaserParams::default(), &noise, 10).unwrap();
    assert_ne!(a, c);
    // Noise is additive: subtracting the noiseless scan leaves the draws.
    let clean =
        scan_profile(&hf, &pose, CrackOrientation::Horizontal, &LaserParams::default(), &SensorNoise::noiseless(), 9)
            .unwrap();
    let resid: Vec<f64> = a.z().iter().zip(clean.z()).map(|(n, c)| n - c).collect();
    let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
    assert!((sd - 0.02).abs() < 0.003, "{sd}");
}

#[test]
fn vertical_scan_runs_along_laser_y() {
    let spec = CrackSpec::straight([0.0, 0.0], [150.0, 0.0], 10.0, 2.0, CrackOrientation::Vertical);
    let hf = generate_specimen(&spec, &GridParams::default()).unwrap();
    let pose = RigidTransform::from_translation(75.0, 0.0, 0.0);
    let p = scan_profile(&hf, &pose, CrackOrientation::Vertical, &LaserParams::default(), &SensorNoise::noiseless(), 1)
        .unwrap();
    assert_eq!(p.z().iter().filter(|&&z| z == -2.0).count(), 256);
}
