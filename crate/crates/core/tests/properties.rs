mod common;

use flowground::depth::{calibrate_depth_affine, DepthFrame, RansacParams};
use flowground::flow::FlowSource;
use flowground::flow::{
    hand_flow_to_ee, object_flow_to_ee, relative_motions, should_switch_to_hand,
};
use flowground::grasp::{
    filter_by_collision, filter_by_contact, rank_grasps, GraspCandidate, GraspParams,
    GripperProbes, SceneCloud,
};
use flowground::hand::{
    compute_drift_correction, non_prehensile_anchor, palm_frame_rotation, snap_scale, Landmarks,
};
use flowground::pipeline::{parse_trajectory, trajectory_text, PipelineConfig, PoseConfig};
use flowground::planner::scripted::{
    Call, Entry, ExecuteResponse, Scenario, ScriptedRoles, VerifyResponse,
};
use flowground::planner::{
    plan_strategic, run_loop, HorizonMode, LoopParams, Role, Roles, SearchParams,
};
use flowground::se3::{
    flow_to_motion, kabsch_rigid_transform, FlowField, Mat3, RigidTransform, Vec3,
};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (vec3(1.0), -3.1f64..3.1).prop_filter_map("axis", |(axis, angle)| {
        (axis.norm() > 1e-3)
            .then(|| RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros()).rotation)
    })
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (rotation(), vec3(2.0)).prop_map(|(r, t)| RigidTransform {
        rotation: r,
        translation: t,
    })
}

/// Point sets whose spread keeps the cross-covariance well conditioned.
fn cloud(min: usize, max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(1.0), min..=max).prop_filter("spread", |pts| {
        let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
        let cov = pts
            .iter()
            .fold(Mat3::zeros(), |m, p| m + (p - c) * (p - c).transpose());
        let sv = cov.singular_values();
        sv.min() > 1e-2
    })
}

/// Sum of squared centered residuals, written out longhand.
fn objective(r: &Mat3, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    src.iter()
        .zip(dst)
        .map(|(p, q)| (r * (p - cs) - (q - cd)).norm_squared())
        .sum()
}

proptest! {
    #[test]
    fn kabsch_is_equivariant(src in cloud(4, 8), t in rigid(), q in rotation()) {
        let dst: Vec<Vec3> = src.iter().map(|p| t.transform_point(p)).collect();
        let r = kabsch_rigid_transform(&src, &dst).unwrap().rotation;
        let qs: Vec<Vec3> = src.iter().map(|p| q * p).collect();
        let qd: Vec<Vec3> = dst.iter().map(|p| q * p).collect();
        let rq = kabsch_rigid_transform(&qs, &qd).unwrap().rotation;
        prop_assert!((rq - q * r * q.transpose()).abs().max() < 1e-9);
    }

    #[test]
    fn kabsch_beats_sampled_rotations(
        src in cloud(4, 6),
        noise in prop::collection::vec(vec3(0.2), 6),
        t in rigid(),
        others in prop::collection::vec(rotation(), 200),
    ) {
        let dst: Vec<Vec3> = src.iter().zip(&noise).map(|(p, e)| t.transform_point(p) + e).collect();
        let r = kabsch_rigid_transform(&src, &dst).unwrap().rotation;
        let best = objective(&r, &src, &dst);
        for o in &others {
            prop_assert!(best <= objective(o, &src, &dst) + 1e-12);
        }
    }

    #[test]
    fn rigid_flow_gives_back_its_generator(
        pts in cloud(4, 10),
        steps in prop::collection::vec(rigid(), 1..6),
    ) {
        let mut poses = vec![RigidTransform::identity()];
        for s in &steps {
            poses.push(s.compose(poses.last().unwrap()));
        }
        let flow = FlowField::from_fn(pts.len(), poses.len(), |k, t| poses[t].transform_point(&pts[k]));
        let motions = flow_to_motion(&flow).unwrap();
        for (m, s) in motions.iter().zip(&steps) {
            prop_assert!(m.max_abs_diff(s) < 1e-9);
        }
    }
}

fn planted_frames(
    seed: u64,
    scale: f64,
    shift: f64,
    outliers: f64,
) -> (DepthFrame, DepthFrame, usize) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (40, 30);
    let gen = DepthFrame::from_fn(w, h, |_, _| rng.random_range(1.2..3.0));
    let mut clean = 0;
    let sensor = DepthFrame::from_fn(w, h, |x, y| {
        let m = gen.get(x, y).unwrap() * scale + shift;
        if rng.random_bool(outliers) {
            m + rng.random_range(0.5..2.0)
        } else {
            clean += 1;
            m
        }
    });
    (gen, sensor, clean)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ransac_is_deterministic_and_refits_safely(
        seed in 0u64..1000,
        scale in 0.5f64..3.0,
        shift in -0.5f64..0.5,
        outliers in 0.0f64..0.4,
    ) {
        let (gen, sensor, clean) = planted_frames(seed, scale, shift, outliers);
        let params = RansacParams { seed, iterations: 200, ..RansacParams::default() };
        let a = calibrate_depth_affine(&gen, &sensor, &params).unwrap();
        let b = calibrate_depth_affine(&gen, &sensor, &params).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((a.scale - scale).abs() < 1e-3 && (a.shift - shift).abs() < 1e-3);
        // The reported count is the count of the returned model, and never
        // below the clean pixels an exact hypothesis would collect.
        let recount = gen.values().iter().zip(sensor.values())
            .filter(|(g, s)| (a.scale * **g + a.shift - **s).abs() < params.inlier_threshold)
            .count();
        prop_assert_eq!(recount, a.inlier_count);
        prop_assert!(a.inlier_count >= clean);
    }
}

proptest! {
    #[test]
    fn drift_ramp_endpoints_and_prefix(
        track in prop::collection::vec(vec3(0.3), 3..20),
        start_frac in 0.0f64..1.0,
        err in vec3(0.05),
        delta in 0.001f64..0.2,
    ) {
        let t_end = track.len() - 1;
        let t_start = ((t_end as f64) * start_frac) as usize;
        let end_tip = track[t_end] + err;
        let c = compute_drift_correction(&track, t_start, t_end, &end_tip, delta).unwrap();
        if c.window_found {
            prop_assert_eq!(c.alpha(c.t_corr), 0.0);
        } else {
            prop_assert_eq!(c.t_corr, t_end);
        }
        prop_assert_eq!(c.alpha(t_end), 1.0);
        for t in t_start..t_end {
            prop_assert!(c.alpha(t) <= c.alpha(t + 1));
            prop_assert!((0.0..=1.0).contains(&c.alpha(t)));
        }
        let fixed = c.apply(&track, 0);
        for t in 0..c.t_corr {
            prop_assert_eq!(fixed[t], track[t]);
        }
        prop_assert!((fixed[t_end] - end_tip).norm() < 1e-12);
    }

    #[test]
    fn non_prehensile_anchor_is_exact(tip in vec3(1.0), contact in vec3(1.0)) {
        prop_assume!(tip.norm() > 1e-3);
        let (s, dt) = non_prehensile_anchor(&tip, &contact).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!((tip * s + dt - contact).abs().max() <= 4.0 * f64::EPSILON * (1.0 + contact.abs().max()));
    }

    #[test]
    fn snapped_scales_are_positive(tip in vec3(1.0), target in vec3(1.0)) {
        if let Some(s) = snap_scale(&tip, &target) {
            prop_assert!(s > 0.0);
        }
    }

    #[test]
    fn palm_frame_is_equivariant(pts in prop::collection::vec(vec3(0.1), 21), shift in vec3(0.5), q in rotation()) {
        // The normal faces the camera origin, so only rotations about that
        // origin commute with the frame.
        let pts: Vec<Vec3> = pts.iter().map(|p| p + shift).collect();
        let lm: Landmarks = pts.try_into().unwrap();
        if let Ok(r) = palm_frame_rotation(&lm) {
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            prop_assume!(lm[0].dot(&r.column(2)).abs() > 1e-6);
            let moved = lm.map(|p| q * p);
            let rq = palm_frame_rotation(&moved).unwrap();
            prop_assert!((rq - q * r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn switching_is_monotone_in_frames(
        angles in prop::collection::vec(0.0f64..1.5, 1..10),
        extra in prop::collection::vec(0.0f64..1.5, 0..5),
    ) {
        let motion = |a: &f64| RigidTransform::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), *a, Vec3::zeros());
        let mut ms: Vec<RigidTransform> = angles.iter().map(motion).collect();
        let theta = 45f64.to_radians();
        let before = should_switch_to_hand(&ms, theta);
        ms.extend(extra.iter().map(motion));
        prop_assert!(!before || should_switch_to_hand(&ms, theta));
    }

    #[test]
    fn grounding_preserves_relative_motion(
        motions in prop::collection::vec(rigid(), 1..6),
        grasp in rigid(),
    ) {
        let g = GraspCandidate {
            pose: grasp,
            confidence: 1.0,
            finger_base_left: Vec3::zeros(),
            finger_base_right: Vec3::x(),
        };
        let plan = object_flow_to_ee(&motions, &g);
        for (r, m) in relative_motions(&plan.ee_trajectory).iter().zip(&motions) {
            prop_assert!(r.max_abs_diff(m) < 1e-9);
        }
        let mut hand = vec![RigidTransform::identity()];
        for m in &motions {
            hand.push(m.compose(hand.last().unwrap()));
        }
        let plan = hand_flow_to_ee(&hand, &g).unwrap();
        for (a, b) in relative_motions(&plan.ee_trajectory).iter().zip(&relative_motions(&hand)) {
            prop_assert!(a.max_abs_diff(b) < 1e-9);
        }
    }
}

fn candidate() -> impl Strategy<Value = GraspCandidate> {
    (vec3(0.15), rotation(), 0.0f64..=1.0, vec3(0.05)).prop_map(|(t, r, c, half)| {
        let pose = RigidTransform {
            rotation: r,
            translation: t,
        };
        GraspCandidate {
            pose,
            confidence: c,
            finger_base_left: t - half - Vec3::new(1e-3, 0.0, 0.0),
            finger_base_right: t + half,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grasp_filters_commute_and_rank_is_a_permutation(
        cands in prop::collection::vec(candidate(), 1..8),
        obstacles in prop::collection::vec(vec3(0.2), 0..40),
        object in prop::collection::vec(vec3(0.1), 1..40),
        contacts in prop::collection::vec(vec3(0.1), 1..4),
    ) {
        let params = GraspParams { clearance: 0.02, ..GraspParams::default() };
        let mut points = obstacles.clone();
        points.extend(&object);
        let labels: Vec<u32> = (0..points.len()).map(|i| u32::from(i >= obstacles.len())).collect();
        let scene = SceneCloud::new(points, labels, 1).unwrap();

        let contact = filter_by_contact(&cands, &contacts, params.max_contact_dist);
        let clear = filter_by_collision(&cands, &scene, &params.probes, params.clearance);
        let after_contact: Vec<usize> = contact.iter().copied().filter(|i| clear.contains(i)).collect();
        let sub: Vec<GraspCandidate> = clear.iter().map(|&i| cands[i]).collect();
        let after_collision: Vec<usize> = filter_by_contact(&sub, &contacts, params.max_contact_dist)
            .into_iter()
            .map(|j| clear[j])
            .collect();
        prop_assert_eq!(&after_contact, &after_collision);

        match rank_grasps(&cands, &object, &contacts, &scene, &params) {
            Ok(ranked) => {
                let mut idx: Vec<usize> = ranked.iter().map(|r| r.index).collect();
                for r in &ranked {
                    prop_assert!((0.0..=1.0).contains(&r.total));
                }
                for w in ranked.windows(2) {
                    prop_assert!(w[0].total >= w[1].total);
                }
                idx.sort_unstable();
                prop_assert_eq!(idx, after_contact);
                let again = rank_grasps(&cands, &object, &contacts, &scene, &params).unwrap();
                prop_assert_eq!(ranked, again);
            }
            Err(_) => prop_assert!(after_contact.is_empty()),
        }
    }

    #[test]
    fn beams_stay_bounded_and_histories_grow(seed in 0u64..10_000, beam_width in 1usize..4) {
        let tree = common::random_tree(seed, 3, 4, 3);
        let roles = ScriptedRoles::new(tree.scenario.clone());
        let params = SearchParams {
            horizon: tree.depth,
            beam_width,
            actions_per_beam: tree.actions,
            rollouts_per_action: tree.rollouts,
            s_min: 0.0,
        };
        let out = plan_strategic("o0", &tree.scenario.goal, &params, &Roles::uniform(&roles)).unwrap();
        prop_assert_eq!(out.trace.len(), tree.depth);
        let mut histories: Vec<Vec<String>> = vec![Vec::new()];
        for step in &out.trace {
            prop_assert!(step.kept.len() <= beam_width);
            histories = step.kept.iter().map(|&id| {
                let c = &step.candidates[id];
                let mut h = histories[c.parent].clone();
                h.push(c.action.clone());
                h
            }).collect();
        }
        prop_assert_eq!(&out.best.history, &histories[0]);
        prop_assert!(out.best.score <= common::enumerate_best(&tree));
    }

    #[test]
    fn recovery_keeps_the_step_target(failures in 1usize..5, budget in 0usize..4) {
        let mut calls: Vec<Call<ExecuteResponse>> = (0..failures)
            .map(|i| Call { fail: None, response: ExecuteResponse { next: Some(format!("miss{i}")) } })
            .collect();
        calls.push(Call { fail: None, response: ExecuteResponse { next: Some("goal".into()) } });
        let mut sc = Scenario {
            goal: "reach".into(),
            propose: vec![Entry::new("o0", flowground::planner::scripted::ProposeResponse {
                proposals: vec![flowground::planner::Proposal { action: "go".into(), track_object: "x".into(), context: None }],
            })],
            ..Scenario::default()
        };
        sc.generate.push(Entry::new("o0", flowground::planner::scripted::GenerateResponse { finals: vec!["goal".into()] }));
        sc.verify.push(Entry::new("goal", VerifyResponse { success: true, reason: String::new() }));
        // Every later attempt starts from whatever the last miss was.
        sc.execute.push(Entry::with_calls("o0", calls.clone()));
        for i in 0..failures {
            sc.execute.push(Entry::with_calls(format!("miss{i}"), calls[i + 1..].to_vec()));
        }
        let roles = ScriptedRoles::new(sc);
        let params = LoopParams { max_recoveries_per_step: budget, ..LoopParams::default() };
        let report = run_loop(&roles.scenario().task(), HorizonMode::Greedy, &Roles::uniform(&roles), &params);
        let targets: Vec<String> = roles.calls_to(Role::Verify).iter()
            .map(|c| c["target"].as_str().unwrap().to_string())
            .collect();
        prop_assert!(targets.iter().all(|t| t == "goal"));
        prop_assert_eq!(report.succeeded(), failures <= budget);
    }
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

proptest! {
    #[test]
    fn config_round_trip_is_a_fixed_point(
        theta in finite(1.0, 179.0),
        tau in finite(1e-4, 1.0),
        iters in 1usize..5000,
        area in 0usize..500,
        eps in finite(0.01, 1.0),
        delta in finite(0.01, 20.0),
        clearance in finite(0.01, 10.0),
        seed in any::<u64>(),
        extrinsic in rigid(),
    ) {
        let mut cfg = PipelineConfig { seed, ..PipelineConfig::default() };
        cfg.flow.theta_max_deg = theta;
        cfg.depth.inlier_threshold_m = tau;
        cfg.depth.iterations = iters;
        cfg.depth.min_component_area = area;
        cfg.hand.grasp.epsilon = eps;
        cfg.hand.non_prehensile.delta_cm = delta;
        cfg.grasp.clearance_mm = clearance;
        cfg.extrinsic = PoseConfig::from_transform(&extrinsic);
        let once = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&once, &cfg);
        let twice = PipelineConfig::from_toml(&once.to_toml()).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn trajectories_parse_back(poses in prop::collection::vec(rigid(), 1..10)) {
        let text = trajectory_text(FlowSource::HandFlow, &poses);
        prop_assert_eq!(text.lines().count(), poses.len() + 1);
        let back = parse_trajectory(&text).unwrap();
        for (a, b) in back.iter().zip(&poses) {
            prop_assert!(a.max_abs_diff(b) < 1e-8);
        }
    }
}

#[test]
fn default_probe_layout_is_symmetric() {
    let probes = GripperProbes::default();
    assert_eq!(probes.points.len(), 27);
    for p in &probes.points {
        assert!(probes.points.contains(&[p[0], -p[1], p[2]]));
    }
}
