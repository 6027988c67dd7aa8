use crack_repair::geometry::{CrackOrientation, Point3};
use crack_repair::specimen::*;
use proptest::prelude::*;

fn grid() -> GridParams {
    GridParams { margin: 25.0, ..GridParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deposit_conserves_volume_and_never_lowers(
        w in 2.0..16.0f64,
        d in 0.5..6.0f64,
        speed in 6.0..30.0f64,
        q in 100.0..900.0f64,
        y0 in 2.0..10.0f64,
        len in 1.0..20.0f64,
        dx in -1.0..1.0f64,
    ) {
        let spec = CrackSpec::straight([0.0, 0.0], [0.0, 40.0], w, d, CrackOrientation::Horizontal);
        let before = generate_specimen(&spec, &grid()).unwrap();
        let mut hf = before.clone();
        let params = DepositionParams { flow_rate: q, ..DepositionParams::default() };
        let out = deposit(&mut hf, &Point3::robot(dx, y0, 0.0), &Point3::robot(0.0, y0 + len, 0.0), speed, &params).unwrap();
        let added = hf.volume_added_since(&before);
        let expected = q / speed * (len * len + dx * dx).sqrt();
        prop_assert!((added - expected).abs() <= 0.005 * expected, "added {} expected {}", added, expected);
        prop_assert!((out.deposited_volume - added).abs() <= 1e-9 * expected);
        prop_assert!(hf.heights().iter().zip(before.heights()).all(|(a, b)| a >= b));
    }

    #[test]
    fn generation_is_bit_identical(w in 2.0..16.0f64, d in 0.5..6.0f64) {
        let spec = CrackSpec::straight([0.0, 0.0], [0.0, 20.0], w, d, CrackOrientation::Horizontal);
        let a = generate_specimen(&spec, &grid()).unwrap();
        let b = generate_specimen(&spec, &grid()).unwrap();
        prop_assert!(a.heights().iter().zip(b.heights()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn strip_area_matches_flow_over_speed(speed in 5.0..25.0f64, q in 300.0..1200.0f64) {
        let mut hf = Heightfield::flat([-30.0, -10.0], 0.1, 600, 700, 0.0, 100.0);
        let params = DepositionParams { flow_rate: q, ..DepositionParams::default() };
        deposit(&mut hf, &Point3::robot(0.0, 0.0, 0.0), &Point3::robot(0.0, 50.0, 0.0), speed, &params).unwrap();
        let station = CrossSectionStation { center: [0.0, 25.0], normal: [1.0, 0.0], half_length: 20.0 };
        // Ridge area: integrate height above nominal by mirroring the field.
        let mut mirrored = hf.clone();
        for j in 0..hf.ny() {
            for i in 0..hf.nx() {
                mirrored.set_height(i, j, -hf.height(i, j));
            }
        }
        let a = true_cross_section(&mirrored, &station).unwrap();
        prop_assert!((a - q / speed).abs() <= 0.02 * q / speed, "{} vs {}", a, q / speed);
    }
}

#[test]
fn chained_segments_deposit_each_line_once() {
    let spec = CrackSpec::straight([0.0, 0.0], [0.0, 40.0], 8.0, 3.0, CrackOrientation::Horizontal);
    let before = generate_specimen(&spec, &grid()).unwrap();
    let mut hf = before.clone();
    let params = DepositionParams::default();
    let ys = [5.0, 11.3, 17.05, 26.0, 35.0];
    let mut expected = 0.0;
    for (k, w) in ys.windows(2).enumerate() {
        let end = if k + 2 == ys.len() { SegmentEnd::Inclusive } else { SegmentEnd::Exclusive };
        let v = 8.0 + k as f64;
        deposit_segment(&mut hf, &Point3::robot(0.0, w[0], 0.0), &Point3::robot(0.0, w[1], 0.0), v, &params, end)
            .unwrap();
        expected += params.flow_rate / v * (w[1] - w[0]);
    }
    let added = hf.volume_added_since(&before);
    assert!((added - expected).abs() <= 0.005 * expected, "{added} vs {expected}");
}
