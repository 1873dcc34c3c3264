//! Choosing between object flow and hand flow, and mapping the chosen flow to
//! an end-effector trajectory.

use serde::{Deserialize, Serialize};

use crate::grasp::GraspCandidate;
use crate::se3::RigidTransform;

/// Angles within this many radians of the threshold count as equal to it, so
/// a rotation built from exactly `theta_max` does not trip the switch through
/// rounding in the angle recovery.
pub const SWITCH_ANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowSource {
    ObjectFlow,
    HandFlow,
}

impl FlowSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowSource::ObjectFlow => "object-flow",
            FlowSource::HandFlow => "hand-flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedPlan {
    pub source: FlowSource,
    /// Robot base frame, meters.
    pub ee_trajectory: Vec<RigidTransform>,
    pub grasp: Option<GraspCandidate>,
}

/// True iff some adjacent-frame rotation is strictly larger than `theta_max`.
pub fn should_switch_to_hand(motions: &[RigidTransform], theta_max: f64) -> bool {
    motions
        .iter()
        .any(|m| m.rotation_angle() > theta_max + SWITCH_ANGLE_TOLERANCE)
}

/// Object held rigidly after the grasp: `ee_t = (M_t ... M_1) * grasp`.
pub fn object_flow_to_ee(motions: &[RigidTransform], grasp: &GraspCandidate) -> GroundedPlan {
    let mut poses = Vec::with_capacity(motions.len() + 1);
    let mut current = grasp.pose;
    poses.push(current);
    for m in motions {
        current = m.compose(&current);
        poses.push(current);
    }
    GroundedPlan {
        source: FlowSource::ObjectFlow,
        ee_trajectory: poses,
        grasp: Some(*grasp),
    }
}

/// Hand poses rebased so the first coincides with the grasp pose:
/// `ee_t = hand_t * (hand_0^-1 * grasp)`.
pub fn hand_flow_to_ee(hand: &[RigidTransform], grasp: &GraspCandidate) -> Option<GroundedPlan> {
    let first = hand.first()?;
    let offset = first.inverse().compose(&grasp.pose);
    Some(GroundedPlan {
        source: FlowSource::HandFlow,
        ee_trajectory: hand.iter().map(|h| h.compose(&offset)).collect(),
        grasp: Some(*grasp),
    })
}

/// Hand poses mapped through a fixed tool offset when no grasp candidate is
/// available: `ee_t = hand_t * tool`.
pub fn hand_flow_to_ee_with_tool(
    hand: &[RigidTransform],
    tool: &RigidTransform,
) -> Option<GroundedPlan> {
    if hand.is_empty() {
        return None;
    }
    Some(GroundedPlan {
        source: FlowSource::HandFlow,
        ee_trajectory: hand.iter().map(|h| h.compose(tool)).collect(),
        grasp: None,
    })
}

/// Left-relative motion between adjacent poses, `P_{t+1} P_t^-1`.
pub fn relative_motions(poses: &[RigidTransform]) -> Vec<RigidTransform> {
    poses
        .windows(2)
        .map(|w| w[1].compose(&w[0].inverse()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Vec3;

    fn grasp_at(pose: RigidTransform) -> GraspCandidate {
        GraspCandidate {
            pose,
            confidence: 0.9,
            finger_base_left: Vec3::new(-0.04, 0.0, 0.0),
            finger_base_right: Vec3::new(0.04, 0.0, 0.0),
        }
    }

    fn rz(deg: f64) -> RigidTransform {
        RigidTransform::from_axis_angle(&Vec3::z(), deg.to_radians(), Vec3::zeros())
    }

    #[test]
    fn switching_decisions() {
        let theta = 45f64.to_radians();
        assert!(!should_switch_to_hand(
            &[RigidTransform::identity(); 4],
            theta
        ));
        assert!(should_switch_to_hand(&[rz(10.0), rz(50.0), rz(3.0)], theta));
        assert!(!should_switch_to_hand(&[rz(45.0), rz(45.0)], theta));
        let just_over = RigidTransform::from_axis_angle(&Vec3::x(), theta + 1e-6, Vec3::zeros());
        assert!(should_switch_to_hand(&[just_over], theta));
    }

    #[test]
    fn object_flow_composition() {
        let g = grasp_at(RigidTransform::from_axis_angle(
            &Vec3::y(),
            0.3,
            Vec3::new(0.4, 0.0, 0.2),
        ));
        let plan = object_flow_to_ee(&[RigidTransform::identity(); 3], &g);
        assert_eq!(plan.ee_trajectory.len(), 4);
        assert!(plan
            .ee_trajectory
            .iter()
            .all(|p| p.max_abs_diff(&g.pose) < 1e-15));

        let m = RigidTransform::from_axis_angle(
            &Vec3::new(1.0, 1.0, 0.0),
            0.2,
            Vec3::new(0.0, 0.05, 0.1),
        );
        let plan = object_flow_to_ee(&[m], &g);
        assert_eq!(plan.ee_trajectory[0], g.pose);
        assert!(plan.ee_trajectory[1].max_abs_diff(&(m * g.pose)) < 1e-9);
        assert_eq!(plan.source, FlowSource::ObjectFlow);
        assert!(plan.grasp.is_some());
    }

    #[test]
    fn hand_flow_rebasing() {
        let g = grasp_at(RigidTransform::from_axis_angle(
            &Vec3::x(),
            1.0,
            Vec3::new(0.3, 0.1, 0.0),
        ));
        let h0 = RigidTransform::from_axis_angle(&Vec3::z(), 0.4, Vec3::new(0.0, 0.0, 0.6));
        let plan = hand_flow_to_ee(&[h0; 3], &g).unwrap();
        assert!(plan
            .ee_trajectory
            .iter()
            .all(|p| p.max_abs_diff(&g.pose) < 1e-12));

        let lift = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.1));
        let hand = [h0, lift * h0];
        let plan = hand_flow_to_ee(&hand, &g).unwrap();
        assert!(plan.ee_trajectory[1].max_abs_diff(&(lift * g.pose)) < 1e-12);
        assert!(hand_flow_to_ee(&[], &g).is_none());
    }
}
