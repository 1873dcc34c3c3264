//! Decide between object flow and hand flow from the largest inter-frame
//! rotation, around the 45 degree default.

use flowground::flow::should_switch_to_hand;
use flowground::se3::{RigidTransform, Vec3};

fn main() {
    let theta_max = 45f64.to_radians();
    for deg in [10.0, 44.9, 45.0, 45.0 + 1e-4, 60.0] {
        let motions = vec![
            RigidTransform::from_translation(Vec3::new(0.01, 0.0, 0.0)),
            RigidTransform::from_axis_angle(
                &Vec3::new(0.3, 1.0, 0.0),
                f64::to_radians(deg),
                Vec3::zeros(),
            ),
        ];
        let hand = should_switch_to_hand(&motions, theta_max);
        println!(
            "{deg:>10.4} deg -> {}",
            if hand { "hand flow" } else { "object flow" }
        );
    }
}
