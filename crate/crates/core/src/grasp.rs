//! Hand-guided grasp filtering and scoring.
//!
//! Externally proposed candidates go through a contact-proximity filter, a
//! collision filter against non-target scene points, and are then ranked by
//! `confidence * support`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{RigidTransform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("no grasp candidate survived filtering")]
    NoValidGrasp,
    #[error("contact point set is empty")]
    NoContactPoints,
    #[error("invalid grasp candidate {index}: {message}")]
    InvalidCandidate { index: usize, message: String },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspCandidate {
    /// Gripper frame in the robot base frame.
    pub pose: RigidTransform,
    pub confidence: f64,
    /// Palm-line endpoints in the robot base frame, meters.
    pub finger_base_left: Vec3,
    pub finger_base_right: Vec3,
}

impl GraspCandidate {
    pub fn validate(&self) -> Result<(), String> {
        RigidTransform::new(self.pose.rotation, self.pose.translation)
            .map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if (self.finger_base_left - self.finger_base_right).norm() == 0.0 {
            return Err("palm-line endpoints coincide".into());
        }
        Ok(())
    }

    pub fn palm_distance(&self, p: &Vec3) -> f64 {
        point_segment_distance(p, &self.finger_base_left, &self.finger_base_right)
    }
}

/// Scene points with per-point object ids; `target` marks the manipulated object.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCloud {
    points: Vec<Vec3>,
    labels: Vec<u32>,
    target: u32,
}

impl SceneCloud {
    pub fn new(points: Vec<Vec3>, labels: Vec<u32>, target: u32) -> Result<Self, GraspError> {
        if points.len() != labels.len() {
            return Err(GraspError::Format(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GraspError::Format(
                "scene contains non-finite points".into(),
            ));
        }
        Ok(Self {
            points,
            labels,
            target,
        })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            labels: Vec::new(),
            target: 0,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn target_points(&self) -> impl Iterator<Item = &Vec3> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == self.target)
            .map(|(p, _)| p)
    }

    pub fn obstacle_points(&self) -> impl Iterator<Item = &Vec3> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l != self.target)
            .map(|(p, _)| p)
    }
}

/// Gripper collision proxy: probe points in the gripper frame.
///
/// Default layout (meters, approach along +z, fingers opening along y):
/// a palm block of 15 points at x = 0, y in {-0.04, -0.02, 0, 0.02, 0.04},
/// z in {-0.01, -0.03, -0.05}, and two finger columns of 6 points each at
/// y = +-0.045, x in {-0.01, 0.01}, z in {0.0, 0.02, 0.04}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperProbes {
    pub points: Vec<[f64; 3]>,
}

impl Default for GripperProbes {
    fn default() -> Self {
        let mut points = Vec::new();
        for z in [-0.01, -0.03, -0.05] {
            for y in [-0.04, -0.02, 0.0, 0.02, 0.04] {
                points.push([0.0, y, z]);
            }
        }
        for y in [-0.045, 0.045] {
            for x in [-0.01, 0.01] {
                for z in [0.0, 0.02, 0.04] {
                    points.push([x, y, z]);
                }
            }
        }
        Self { points }
    }
}

impl GripperProbes {
    pub fn transformed(&self, pose: &RigidTransform) -> Vec<Vec3> {
        self.points
            .iter()
            .map(|p| pose.transform_point(&Vec3::from(*p)))
            .collect()
    }
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Indices of candidates whose palm line comes within `max_dist` of some
/// contact point.
pub fn filter_by_contact(
    candidates: &[GraspCandidate],
    contact_points: &[Vec3],
    max_dist: f64,
) -> Vec<usize> {
    candidates
        .par_iter()
        .enumerate()
        .filter(|(_, c)| {
            contact_points
                .iter()
                .map(|p| c.palm_distance(p))
                .fold(f64::INFINITY, f64::min)
                <= max_dist
        })
        .map(|(i, _)| i)
        .collect()
}

fn collides(
    candidate: &GraspCandidate,
    scene: &SceneCloud,
    probes: &GripperProbes,
    clearance: f64,
) -> bool {
    let probe_points = probes.transformed(&candidate.pose);
    let c2 = clearance * clearance;
    scene
        .obstacle_points()
        .any(|s| probe_points.iter().any(|p| (p - s).norm_squared() < c2))
}

/// Indices of candidates with no non-target scene point closer than
/// `clearance` to any probe point.
pub fn filter_by_collision(
    candidates: &[GraspCandidate],
    scene: &SceneCloud,
    probes: &GripperProbes,
    clearance: f64,
) -> Vec<usize> {
    candidates
        .par_iter()
        .enumerate()
        .filter(|(_, c)| !collides(c, scene, probes, clearance))
        .map(|(i, _)| i)
        .collect()
}

/// Fraction of object points within `band` of the palm line.
pub fn support_fraction(candidate: &GraspCandidate, object_points: &[Vec3], band: f64) -> f64 {
    if object_points.is_empty() {
        return 0.0;
    }
    let near = object_points
        .iter()
        .filter(|p| candidate.palm_distance(p) <= band)
        .count();
    near as f64 / object_points.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspParams {
    /// meters
    pub max_contact_dist: f64,
    /// meters
    pub clearance: f64,
    /// meters
    pub support_band: f64,
    pub probes: GripperProbes,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self {
            max_contact_dist: 0.05,
            clearance: 0.001,
            support_band: 0.005,
            probes: GripperProbes::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedGrasp {
    pub index: usize,
    pub candidate: GraspCandidate,
    pub support: f64,
    pub total: f64,
}

/// Contact filter, collision filter, then descending `confidence * support`.
/// Ties prefer higher confidence, then the lower candidate index.
pub fn rank_grasps(
    candidates: &[GraspCandidate],
    object_points: &[Vec3],
    contact_points: &[Vec3],
    scene: &SceneCloud,
    params: &GraspParams,
) -> Result<Vec<RankedGrasp>, GraspError> {
    if contact_points.is_empty() {
        return Err(GraspError::NoContactPoints);
    }
    let near = filter_by_contact(candidates, contact_points, params.max_contact_dist);
    let mut ranked: Vec<RankedGrasp> = near
        .into_par_iter()
        .filter(|&i| !collides(&candidates[i], scene, &params.probes, params.clearance))
        .map(|i| {
            let candidate = candidates[i];
            let support = support_fraction(&candidate, object_points, params.support_band);
            RankedGrasp {
                index: i,
                candidate,
                support,
                total: candidate.confidence * support,
            }
        })
        .collect();
    if ranked.is_empty() {
        return Err(GraspError::NoValidGrasp);
    }
    ranked.sort_by(|a, b| {
        b.total
            .total_cmp(&a.total)
            .then(b.candidate.confidence.total_cmp(&a.candidate.confidence))
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

const GRASP_HEADER: &str = "# grasp-candidates v1";
const GRASP_COLUMNS: &str =
    "# r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz confidence lx ly lz rx ry rz";

pub fn write_grasp_candidates(path: &Path, candidates: &[GraspCandidate]) -> std::io::Result<()> {
    let mut out = format!("{GRASP_HEADER}\n{GRASP_COLUMNS}\n");
    for c in candidates {
        let mut fields: Vec<String> = c
            .pose
            .to_row_major()
            .iter()
            .map(|v| v.to_string())
            .collect();
        fields.push(c.confidence.to_string());
        for p in [c.finger_base_left, c.finger_base_right] {
            fields.extend(p.iter().map(|v| v.to_string()));
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn parse_grasp_candidates(text: &str) -> Result<Vec<GraspCandidate>, GraspError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GRASP_HEADER) {
        return Err(GraspError::Format(format!(
            "missing `{GRASP_HEADER}` header"
        )));
    }
    let mut out = Vec::new();
    for line in lines
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let index = out.len();
        let bad = |message: String| GraspError::InvalidCandidate { index, message };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        if v.len() != 19 {
            return Err(bad(format!("expected 19 values, got {}", v.len())));
        }
        let mut pose = [0.0; 12];
        pose.copy_from_slice(&v[..12]);
        let c = GraspCandidate {
            pose: RigidTransform::from_row_major(&pose),
            confidence: v[12],
            finger_base_left: Vec3::new(v[13], v[14], v[15]),
            finger_base_right: Vec3::new(v[16], v[17], v[18]),
        };
        c.validate().map_err(bad)?;
        out.push(c);
    }
    Ok(out)
}
