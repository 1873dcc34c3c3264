//! Contact filter, collision filter and support ranking on a small scene:
//! a box-shaped object on a table, and four candidate grasps.

use flowground::grasp::{rank_grasps, GraspCandidate, GraspParams, SceneCloud};
use flowground::se3::{RigidTransform, Vec3};

fn candidate(center: Vec3, confidence: f64) -> GraspCandidate {
    GraspCandidate {
        pose: RigidTransform::from_translation(center),
        confidence,
        finger_base_left: center - Vec3::new(0.0, 0.03, 0.0),
        finger_base_right: center + Vec3::new(0.0, 0.03, 0.0),
    }
}

fn main() {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    // Table at z = 0, object id 0.
    for i in -20..=20 {
        for j in -20..=20 {
            points.push(Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
            labels.push(0);
        }
    }
    // Object: the top face of a 6 cm box, id 1.
    let mut object = Vec::new();
    for i in -3..=3 {
        for j in -3..=3 {
            let p = Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.06);
            object.push(p);
            points.push(p);
            labels.push(1);
        }
    }
    let scene = SceneCloud::new(points, labels, 1).unwrap();

    let candidates = [
        candidate(Vec3::new(0.0, 0.0, 0.06), 0.7),
        candidate(Vec3::new(0.01, 0.0, 0.06), 0.9),
        candidate(Vec3::new(0.0, 0.0, 0.005), 0.99), // fingers in the table
        candidate(Vec3::new(0.5, 0.0, 0.06), 0.95),  // nowhere near the hand
    ];
    let contacts = [Vec3::new(0.0, 0.0, 0.07)];

    match rank_grasps(
        &candidates,
        &object,
        &contacts,
        &scene,
        &GraspParams::default(),
    ) {
        Ok(ranked) => {
            for r in ranked {
                println!(
                    "candidate {} conf {:.2} support {:.3} total {:.3}",
                    r.index, r.candidate.confidence, r.support, r.total
                );
            }
        }
        Err(e) => println!("no grasp: {e}"),
    }
}
