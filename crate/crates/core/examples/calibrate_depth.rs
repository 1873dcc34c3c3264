//! Fit the affine map from relative (generated) depth to sensor depth when a
//! third of the sensor pixels are garbage.

use flowground::depth::{apply_depth_model, calibrate_depth_affine, DepthFrame, RansacParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let (w, h) = (64, 48);
    let (scale, shift) = (1.7, -0.2);
    let generated = DepthFrame::from_fn(w, h, |x, y| 0.5 + 0.004 * x as f64 + 0.002 * y as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sensor = DepthFrame::from_fn(w, h, |x, y| {
        let g = generated.get(x, y).unwrap();
        if rng.random_bool(0.3) {
            g * scale + shift + rng.random_range(0.5..3.0)
        } else {
            g * scale + shift
        }
    });

    let model = calibrate_depth_affine(&generated, &sensor, &RansacParams::default()).unwrap();
    println!("planted  scale {scale} shift {shift}");
    println!(
        "recovered scale {:.9} shift {:.9}",
        model.scale, model.shift
    );
    println!(
        "inliers {} of {}",
        model.inlier_count, model.candidate_count
    );

    let metric = apply_depth_model(&model, &[generated]);
    println!(
        "metric depth at the center: {:.4} m",
        metric[0].get(w / 2, h / 2).unwrap()
    );
}
