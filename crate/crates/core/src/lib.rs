//! Grounds generated-video artifacts (object tracks, hand landmarks, relative
//! depth) into metric end-effector trajectories, and drives them from a
//! closed-loop beam-search planner over pluggable roles.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod depth;
pub mod flow;
pub mod grasp;
pub mod hand;
pub mod pipeline;
pub mod planner;
pub mod raster;
pub mod se3;
