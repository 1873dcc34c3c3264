//! Recover a rigid transform between two point sets, then track a rotating
//! cube through a short flow field.

use flowground::se3::{
    flow_to_motion, kabsch_rigid_transform, to_axis_angle, FlowField, RigidTransform, Vec3,
};

fn main() {
    let cube: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) * 0.1)
        .collect();
    let planted =
        RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.7, Vec3::new(0.2, -0.1, 0.6));
    let moved: Vec<Vec3> = cube.iter().map(|p| planted.transform_point(p)).collect();

    let found = kabsch_rigid_transform(&cube, &moved).expect("well-posed");
    let (dt, dr) = found.distance(&planted);
    let aa = to_axis_angle(&found.rotation).unwrap();
    println!("angle {:.6} rad about {:.4?}", aa.angle, aa.axis.as_slice());
    println!("translation error {dt:.2e} m, rotation error {dr:.2e} rad");

    // Five frames of the cube turning 10 degrees per frame.
    let step =
        RigidTransform::from_axis_angle(&Vec3::z(), 10f64.to_radians(), Vec3::new(0.01, 0.0, 0.0));
    let flow = FlowField::from_fn(cube.len(), 5, |k, t| {
        (0..t).fold(cube[k], |p, _| step.transform_point(&p))
    });
    for (t, m) in flow_to_motion(&flow).unwrap().iter().enumerate() {
        println!(
            "frame {} -> {}: {:.4} deg",
            t,
            t + 1,
            m.rotation_angle().to_degrees()
        );
    }
}
