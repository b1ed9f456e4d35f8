use fdd_core::align::{align_and_crop, FingerprintImage, PoseTransform};
use proptest::prelude::*;

const SIDE: usize = 800;

fn smooth(x: f64, y: f64) -> f64 {
    128.0 + 90.0 * (x / 23.0).sin() * (y / 31.0).cos() + 20.0 * ((x + y) / 57.0).sin()
}

/// The smooth pattern rotated by `delta` about `(cx, cy)`, sampled analytically.
fn rotated_source(cx: f64, cy: f64, delta: f64) -> FingerprintImage<f64> {
    let (s, c) = delta.sin_cos();
    FingerprintImage::from_fn(SIDE, SIDE, 500.0, |row, col| {
        let (px, py) = (col as f64 - cx, row as f64 - cy);
        // inverse of the rotation applied by a pose angle of `delta`
        smooth(cx + c * px - s * py, cy + s * px + c * py)
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extra_rotation_cancels_against_rotated_source(
        cx in 380.0f64..420.0,
        cy in 380.0f64..420.0,
        theta in -3.0f64..3.0,
        delta in -1.5f64..1.5,
    ) {
        let base = rotated_source(cx, cy, 0.0);
        let reference = align_and_crop(&base, &PoseTransform::new(cx, cy, theta).unwrap()).unwrap();
        let turned = rotated_source(cx, cy, delta);
        let pose = PoseTransform::new(cx, cy, theta).unwrap().rotated(delta);
        let out = align_and_crop(&turned, &pose).unwrap();
        let worst = reference
            .pixels()
            .iter()
            .zip(out.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(worst <= 2.0 / 255.0, "max deviation {worst}");
    }
}

#[test]
fn alignment_is_deterministic() {
    let img = FingerprintImage::<f32>::from_fn(300, 260, 500.0, |r, c| ((r * 31 + c * 17) % 256) as f64).unwrap();
    let pose = PoseTransform::from_degrees(120.3, 151.7, 33.0).unwrap();
    let a = align_and_crop(&img, &pose).unwrap();
    let b = align_and_crop(&img, &pose).unwrap();
    assert_eq!(a.pixels(), b.pixels());
}
