//! Grounding of hand-landmark trajectories into metric SE(3) trajectories.
//!
//! Landmarks follow the 21-point skeleton convention: wrist 0, MCP joints
//! 1/5/9/13/17, fingertips 4/8/12/16/20. Raw landmarks live in the camera
//! frame at an unknown scale; calibration anchors them to metric object
//! geometry at contact onset and again at release.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3xX, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PinholeCamera;
use crate::depth::DepthFrame;
use crate::raster::Mask;
use crate::se3::{Mat3, RigidTransform, Vec3};

pub const LANDMARK_COUNT: usize = 21;
pub const WRIST: usize = 0;
pub const MCP_JOINTS: [usize; 5] = [1, 5, 9, 13, 17];
pub const MIDDLE_MCP: usize = 9;

pub type Landmarks = [Vec3; LANDMARK_COUNT];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandError {
    #[error("initial object mask is empty")]
    EmptyInitialMask,
    #[error("object mask never moves past the contact threshold")]
    NoContactDetected,
    #[error("no fingertip overlaps the object at frame {frame}")]
    NoFingertipContact { frame: usize },
    #[error("hand and object masks do not overlap at frame {frame}")]
    NoMaskOverlap { frame: usize },
    #[error("wrist and MCP landmarks are degenerate")]
    DegenerateLandmarks,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn tip(self) -> usize {
        4 * (self as usize + 1)
    }

    pub fn mcp(self) -> usize {
        MCP_JOINTS[self as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finger {
    type Err = HandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Finger::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| HandError::InvalidInput(format!("unknown finger `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    pub landmarks: Landmarks,
    pub confidence: f64,
}

impl HandFrame {
    pub fn tip(&self, finger: Finger) -> Vec3 {
        self.landmarks[finger.tip()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    frames: Vec<HandFrame>,
}

impl HandTrajectory {
    pub fn new(frames: Vec<HandFrame>) -> Result<Self, HandError> {
        for (t, f) in frames.iter().enumerate() {
            if !f.landmarks.iter().all(|p| p.iter().all(|v| v.is_finite())) {
                return Err(HandError::InvalidInput(format!(
                    "frame {t} has non-finite landmarks"
                )));
            }
            if !(0.0..=1.0).contains(&f.confidence) {
                return Err(HandError::InvalidInput(format!(
                    "frame {t} confidence {} outside [0, 1]",
                    f.confidence
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[HandFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-frame object (or hand) masks of constant size.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    masks: Vec<Mask>,
}

impl MaskSequence {
    pub fn new(masks: Vec<Mask>) -> Result<Self, HandError> {
        if let Some(first) = masks.first() {
            if let Some(t) = masks.iter().position(|m| m.dims() != first.dims()) {
                return Err(HandError::InvalidInput(format!(
                    "mask {t} is {:?}, expected {:?}",
                    masks[t].dims(),
                    first.dims()
                )));
            }
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactInterval {
    pub t_start: usize,
    pub t_end: usize,
    pub contact_finger: Finger,
    pub s_start: f64,
    pub s_end: f64,
    pub t_corr: usize,
    /// meters; zero in grasp mode
    pub translation_offset_start: [f64; 3],
}

impl ContactInterval {
    pub fn offset_start(&self) -> Vec3 {
        Vec3::from(self.translation_offset_start)
    }

    /// Raw landmark mapped by the start anchor: `s_start * p + offset_start`.
    pub fn anchor(&self, raw: &Vec3) -> Vec3 {
        raw * self.s_start + self.offset_start()
    }
}

/// Translation ramp applied near release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCorrection {
    /// meters
    pub offset: Vec3,
    pub t_corr: usize,
    pub t_end: usize,
    /// False when no frame before `t_end` came within the release radius;
    /// the correction then degrades to a step at `t_end`.
    pub window_found: bool,
}

impl DriftCorrection {
    pub fn none(t_end: usize) -> Self {
        Self {
            offset: Vec3::zeros(),
            t_corr: t_end,
            t_end,
            window_found: false,
        }
    }

    /// Ramp weight: 0 before `t_corr`, linear to 1 at `t_end`, held at 1 after.
    pub fn alpha(&self, t: usize) -> f64 {
        if t < self.t_corr {
            0.0
        } else if t >= self.t_end {
            1.0
        } else {
            (t - self.t_corr) as f64 / (self.t_end - self.t_corr) as f64
        }
    }

    /// Corrects a track indexed by absolute frame (`track[i]` is frame
    /// `first_frame + i`). Frames before `t_corr` are returned untouched.
    pub fn apply(&self, track: &[Vec3], first_frame: usize) -> Vec<Vec3> {
        track
            .iter()
            .enumerate()
            .map(|(i, p)| self.apply_at(first_frame + i, p))
            .collect()
    }

    pub fn apply_at(&self, t: usize, p: &Vec3) -> Vec3 {
        if t < self.t_corr {
            *p
        } else {
            p + self.offset * self.alpha(t)
        }
    }
}

/// First and last frame whose newly covered object area, relative to the
/// first mask, reaches `epsilon`.
pub fn detect_contact_interval(
    masks: &MaskSequence,
    epsilon: f64,
) -> Result<(usize, usize), HandError> {
    if !(epsilon > 0.0) {
        return Err(HandError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let first = masks.masks.first().ok_or(HandError::EmptyInitialMask)?;
    let base = first.count();
    if base == 0 {
        return Err(HandError::EmptyInitialMask);
    }
    let moving: Vec<usize> = masks
        .masks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.difference_count(first) as f64 / base as f64 >= epsilon)
        .map(|(t, _)| t)
        .collect();
    match (moving.first(), moving.last()) {
        (Some(&s), Some(&e)) => Ok((s, e)),
        _ => Err(HandError::NoContactDetected),
    }
}

/// Metric object points under a disk of `radius` pixels around `(u, v)`;
/// pixels without valid depth are skipped.
fn points_under_disk(
    (u, v): (f64, f64),
    radius: f64,
    mask: &Mask,
    depth: &DepthFrame,
    camera: &PinholeCamera,
) -> Vec<Vec3> {
    let (w, h) = mask.dims();
    let x0 = (u - radius).floor().max(0.0) as usize;
    let y0 = (v - radius).floor().max(0.0) as usize;
    let x1 = ((u + radius).ceil().max(-1.0) as i64).min(w as i64 - 1);
    let y1 = ((v + radius).ceil().max(-1.0) as i64).min(h as i64 - 1);
    let mut out = Vec::new();
    if x1 < 0 || y1 < 0 {
        return out;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let (dx, dy) = (x as f64 - u, y as f64 - v);
            if dx * dx + dy * dy > radius * radius || !mask.get(x, y) {
                continue;
            }
            if let Some(d) = depth.get(x, y) {
                out.push(camera.unproject(x as f64, y as f64, d));
            }
        }
    }
    out
}

fn centroid(points: &[Vec3]) -> Option<Vec3> {
    (!points.is_empty()).then(|| points.iter().sum::<Vec3>() / points.len() as f64)
}

/// Isotropic scale about the camera center that brings `tip` closest to `target`.
pub fn snap_scale(tip: &Vec3, target: &Vec3) -> Option<f64> {
    let s = tip.dot(target) / tip.norm_squared();
    (s.is_finite() && s > 0.0).then_some(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactScale {
    pub scale: f64,
    pub finger: Finger,
    /// Centroid of the object points the fingertip was snapped to.
    pub target: Vec3,
}

/// Candidate scale for one fingertip, or `None` when its projected disk does
/// not reach any object point.
pub fn fingertip_scale(
    landmarks: &Landmarks,
    finger: Finger,
    depth: &DepthFrame,
    object_mask: &Mask,
    camera: &PinholeCamera,
    tip_radius: f64,
) -> Option<ContactScale> {
    let tip = landmarks[finger.tip()];
    let uv = camera.project(&tip)?;
    let pts = points_under_disk(uv, tip_radius, object_mask, depth, camera);
    let target = centroid(&pts)?;
    let scale = snap_scale(&tip, &target)?;
    Some(ContactScale {
        scale,
        finger,
        target,
    })
}

/// Scale at contact: the largest candidate over fingertips whose projected
/// disk overlaps the object. Ties keep the earlier finger.
pub fn recover_scale_at_contact(
    landmarks: &Landmarks,
    depth: &DepthFrame,
    object_mask: &Mask,
    camera: &PinholeCamera,
    tip_radius: f64,
    frame: usize,
) -> Result<ContactScale, HandError> {
    check_frame_inputs(depth, object_mask, camera)?;
    Finger::ALL
        .into_iter()
        .filter_map(|f| fingertip_scale(landmarks, f, depth, object_mask, camera, tip_radius))
        .fold(None, |best: Option<ContactScale>, c| match best {
            Some(b) if b.scale >= c.scale => Some(b),
            _ => Some(c),
        })
        .ok_or(HandError::NoFingertipContact { frame })
}

fn check_frame_inputs(
    depth: &DepthFrame,
    mask: &Mask,
    camera: &PinholeCamera,
) -> Result<(), HandError> {
    if depth.dims() != mask.dims() {
        return Err(HandError::InvalidInput(format!(
            "depth {:?} and mask {:?} differ in size",
            depth.dims(),
            mask.dims()
        )));
    }
    if !camera.is_finite() {
        return Err(HandError::InvalidInput(
            "camera intrinsics are not finite".into(),
        ));
    }
    Ok(())
}

/// `s = |P_c| / |P_tip|` and `dt = P_c - s P_tip`, so that `s P_tip + dt = P_c`.
pub fn non_prehensile_anchor(tip: &Vec3, contact: &Vec3) -> Result<(f64, Vec3), HandError> {
    let n = tip.norm();
    if !(n > 0.0) || !contact.iter().all(|v| v.is_finite()) {
        return Err(HandError::InvalidInput(
            "fingertip at the camera center".into(),
        ));
    }
    let s = contact.norm() / n;
    Ok((s, contact - tip * s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonPrehensileScale {
    pub scale: f64,
    pub offset: Vec3,
    pub contact_point: Vec3,
}

/// Anchor for a planner-designated finger, using object points under the
/// hand/object mask intersection.
#[allow(clippy::too_many_arguments)]
pub fn recover_scale_non_prehensile(
    landmarks: &Landmarks,
    finger: Finger,
    hand_mask: &Mask,
    object_mask: &Mask,
    depth: &DepthFrame,
    camera: &PinholeCamera,
    frame: usize,
) -> Result<NonPrehensileScale, HandError> {
    check_frame_inputs(depth, object_mask, camera)?;
    if hand_mask.dims() != object_mask.dims() {
        return Err(HandError::InvalidInput(
            "hand and object masks differ in size".into(),
        ));
    }
    let overlap = hand_mask.intersection(object_mask);
    let pts: Vec<Vec3> = overlap
        .iter_set()
        .filter_map(|(x, y)| Some(camera.unproject(x as f64, y as f64, depth.get(x, y)?)))
        .collect();
    let contact_point = centroid(&pts).ok_or(HandError::NoMaskOverlap { frame })?;
    let (scale, offset) = non_prehensile_anchor(&landmarks[finger.tip()], &contact_point)?;
    Ok(NonPrehensileScale {
        scale,
        offset,
        contact_point,
    })
}

/// Drift ramp from a start-anchored tip track (indexed by absolute frame) and
/// the end-anchored tip position at `t_end`.
pub fn compute_drift_correction(
    track: &[Vec3],
    t_start: usize,
    t_end: usize,
    end_tip: &Vec3,
    delta: f64,
) -> Result<DriftCorrection, HandError> {
    if t_start > t_end || t_end >= track.len() {
        return Err(HandError::InvalidInput(format!(
            "interval [{t_start}, {t_end}] does not fit a track of {} frames",
            track.len()
        )));
    }
    let release = track[t_end];
    let offset = end_tip - release;
    let t_corr = (t_start..t_end).find(|&t| (track[t] - release).norm() < delta);
    let correction = match t_corr {
        Some(t_corr) => DriftCorrection {
            offset,
            t_corr,
            t_end,
            window_found: true,
        },
        None => {
            log::warn!("no frame in [{t_start}, {t_end}) within {delta} m of release; applying a step correction at {t_end}");
            DriftCorrection {
                offset,
                t_corr: t_end,
                t_end,
                window_found: false,
            }
        }
    };
    Ok(correction)
}

/// Palm orientation `[u, v, n]` from the wrist and MCP joints.
///
/// `n` is the total-least-squares plane normal, oriented toward the camera
/// (`-wrist`). If the wrist direction is perpendicular to the plane, `n` faces
/// `-z`, and failing that follows the index-to-pinky winding. `u` is the
/// wrist-to-middle-MCP direction projected into the plane, `v = n x u`.
pub fn palm_frame_rotation(landmarks: &Landmarks) -> Result<Mat3, HandError> {
    let idx = [
        WRIST,
        MCP_JOINTS[0],
        MCP_JOINTS[1],
        MCP_JOINTS[2],
        MCP_JOINTS[3],
        MCP_JOINTS[4],
    ];
    let pts: Vec<Vec3> = idx.iter().map(|&i| landmarks[i]).collect();
    let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let centered = Matrix3xX::from_columns(&pts.iter().map(|p| p - c).collect::<Vec<_>>());
    let svd = SVD::new(centered, true, false);
    let u_mat = svd.u.ok_or(HandError::DegenerateLandmarks)?;
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if !(sv[order[0]] > 0.0) || sv[order[1]] <= 1e-9 * sv[order[0]] {
        return Err(HandError::DegenerateLandmarks);
    }
    let mut n: Vec3 = u_mat.column(order[2]).into();
    n.normalize_mut();

    let wrist = landmarks[WRIST];
    let toward_camera = -wrist;
    let tie = 1e-12 * toward_camera.norm().max(1.0);
    let orient = toward_camera.dot(&n);
    let flip = if orient.abs() > tie {
        orient < 0.0
    } else if n.z.abs() > 1e-12 {
        n.z > 0.0
    } else {
        let winding = (landmarks[MCP_JOINTS[1]] - wrist).cross(&(landmarks[MCP_JOINTS[4]] - wrist));
        n.dot(&winding) < 0.0
    };
    if flip {
        n = -n;
    }

    let w = landmarks[MIDDLE_MCP] - wrist;
    let mut u = w - n * n.dot(&w);
    let un = u.norm();
    if !(un > 1e-9 * w.norm().max(f64::MIN_POSITIVE)) {
        return Err(HandError::DegenerateLandmarks);
    }
    u /= un;
    let v = n.cross(&u);
    Ok(Mat3::from_columns(&[u, v, n]))
}

/// Which anchoring rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundingMode {
    Grasp,
    NonPrehensile { finger: Finger },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandCalibrationParams {
    pub epsilon: f64,
    /// meters
    pub delta: f64,
    /// pixels
    pub tip_radius: f64,
}

impl HandCalibrationParams {
    pub fn grasp() -> Self {
        Self {
            epsilon: 0.9,
            delta: 0.05,
            tip_radius: 15.0,
        }
    }

    pub fn non_prehensile() -> Self {
        Self {
            epsilon: 0.95,
            delta: 0.02,
            tip_radius: 15.0,
        }
    }
}

/// Inputs for one hand-flow calibration.
pub struct HandObservation<'a> {
    pub hand: &'a HandTrajectory,
    pub object_masks: &'a MaskSequence,
    /// Required in non-prehensile mode.
    pub hand_masks: Option<&'a MaskSequence>,
    /// Metric depth per frame.
    pub depth: &'a [DepthFrame],
    pub camera: &'a PinholeCamera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandCalibration {
    pub interval: ContactInterval,
    pub correction: DriftCorrection,
}

/// Interval detection, start/end anchoring and drift ramp in one pass.
pub fn calibrate_hand(
    obs: &HandObservation<'_>,
    mode: GroundingMode,
    params: &HandCalibrationParams,
) -> Result<HandCalibration, HandError> {
    let frames = obs.hand.len();
    if obs.object_masks.len() != frames || obs.depth.len() != frames {
        return Err(HandError::InvalidInput(format!(
            "{frames} hand frames, {} masks, {} depth frames",
            obs.object_masks.len(),
            obs.depth.len()
        )));
    }
    let (t_start, t_end) = detect_contact_interval(obs.object_masks, params.epsilon)?;
    let masks = obs.object_masks.masks();
    let lm = |t: usize| &obs.hand.frames()[t].landmarks;

    let (finger, s_start, off_start, s_end, off_end) = match mode {
        GroundingMode::Grasp => {
            let start = recover_scale_at_contact(
                lm(t_start),
                &obs.depth[t_start],
                &masks[t_start],
                obs.camera,
                params.tip_radius,
                t_start,
            )?;
            let end = fingertip_scale(
                lm(t_end),
                start.finger,
                &obs.depth[t_end],
                &masks[t_end],
                obs.camera,
                params.tip_radius,
            )
            .ok_or(HandError::NoFingertipContact { frame: t_end })?;
            (
                start.finger,
                start.scale,
                Vec3::zeros(),
                end.scale,
                Vec3::zeros(),
            )
        }
        GroundingMode::NonPrehensile { finger } => {
            let hand_masks = obs.hand_masks.ok_or_else(|| {
                HandError::InvalidInput("non-prehensile mode needs hand masks".into())
            })?;
            if hand_masks.len() != frames {
                return Err(HandError::InvalidInput(
                    "hand mask count differs from frame count".into(),
                ));
            }
            let anchor = |t: usize| {
                recover_scale_non_prehensile(
                    lm(t),
                    finger,
                    &hand_masks.masks()[t],
                    &masks[t],
                    &obs.depth[t],
                    obs.camera,
                    t,
                )
            };
            let start = anchor(t_start)?;
            let end = anchor(t_end)?;
            (finger, start.scale, start.offset, end.scale, end.offset)
        }
    };

    let track: Vec<Vec3> = (0..=t_end)
        .map(|t| lm(t)[finger.tip()] * s_start + off_start)
        .collect();
    let end_tip = lm(t_end)[finger.tip()] * s_end + off_end;
    let correction = compute_drift_correction(&track, t_start, t_end, &end_tip, params.delta)?;
    Ok(HandCalibration {
        interval: ContactInterval {
            t_start,
            t_end,
            contact_finger: finger,
            s_start,
            s_end,
            t_corr: correction.t_corr,
            translation_offset_start: off_start.into(),
        },
        correction,
    })
}

/// Per-frame pose over `[t_start, t_end]`: translation is the calibrated
/// contact fingertip, rotation the palm frame.
pub fn hand_se3_trajectory(
    hand: &HandTrajectory,
    interval: &ContactInterval,
    correction: &DriftCorrection,
) -> Result<Vec<RigidTransform>, HandError> {
    if interval.t_start > interval.t_end || interval.t_end >= hand.len() {
        return Err(HandError::InvalidInput(format!(
            "interval [{}, {}] outside {} frames",
            interval.t_start,
            interval.t_end,
            hand.len()
        )));
    }
    (interval.t_start..=interval.t_end)
        .map(|t| {
            let frame = &hand.frames()[t];
            let tip = interval.anchor(&frame.tip(interval.contact_finger));
            Ok(RigidTransform {
                rotation: palm_frame_rotation(&frame.landmarks)?,
                translation: correction.apply_at(t, &tip),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    OutOfFrame { frame: usize, outside_fraction: f64 },
    CalibrationFailure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum HandFlowVerdict {
    Accept,
    Reject(RejectReason),
}

pub const MAX_OUTSIDE_FRACTION: f64 = 0.30;

/// Accepts a calibrated hand flow unless calibration failed or, in some
/// interaction frame, more than 30% of the projected landmarks fall outside
/// the image.
pub fn reject_hand_flow(
    hand: &HandTrajectory,
    image_size: (usize, usize),
    camera: &PinholeCamera,
    calibration: Result<&ContactInterval, &HandError>,
) -> HandFlowVerdict {
    let interval = match calibration {
        Ok(i) => i,
        Err(e) => {
            return HandFlowVerdict::Reject(RejectReason::CalibrationFailure {
                message: e.to_string(),
            })
        }
    };
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    for t in interval.t_start..=interval.t_end.min(hand.len().saturating_sub(1)) {
        let lm = &hand.frames()[t].landmarks;
        let outside = lm
            .iter()
            .filter(|p| match camera.project(&interval.anchor(p)) {
                Some((u, v)) => !(u >= 0.0 && u < w && v >= 0.0 && v < h),
                None => true,
            })
            .count();
        let fraction = outside as f64 / LANDMARK_COUNT as f64;
        if fraction > MAX_OUTSIDE_FRACTION {
            return HandFlowVerdict::Reject(RejectReason::OutOfFrame {
                frame: t,
                outside_fraction: fraction,
            });
        }
    }
    HandFlowVerdict::Accept
}

const LANDMARK_HEADER: &str = "# hand-landmarks v1";

/// Text landmark file: a header line, then per frame
/// `frame confidence x0 y0 z0 ... x20 y20 z20`.
pub fn write_hand_landmarks(path: &Path, hand: &HandTrajectory) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(LANDMARK_HEADER);
    out.push('\n');
    out.push_str("# frame confidence then 21 x y z triples\n");
    for (t, f) in hand.frames.iter().enumerate() {
        out.push_str(&format!("{t} {}", f.confidence));
        for p in &f.landmarks {
            out.push_str(&format!(" {} {} {}", p.x, p.y, p.z));
        }
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn parse_hand_landmarks(text: &str) -> Result<HandTrajectory, HandError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LANDMARK_HEADER) {
        return Err(HandError::InvalidInput(format!(
            "missing `{LANDMARK_HEADER}` header"
        )));
    }
    let mut frames = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| HandError::InvalidInput(format!("line {}: {m}", lineno + 2));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 + 3 * LANDMARK_COUNT {
            return Err(bad(&format!(
                "expected {} fields, got {}",
                2 + 3 * LANDMARK_COUNT,
                fields.len()
            )));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad frame index"))?;
        if index != frames.len() {
            return Err(bad(&format!("frame index {index} out of order")));
        }
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        let mut landmarks = [Vec3::zeros(); LANDMARK_COUNT];
        for (i, l) in landmarks.iter_mut().enumerate() {
            *l = Vec3::new(nums[1 + 3 * i], nums[2 + 3 * i], nums[3 + 3 * i]);
        }
        frames.push(HandFrame {
            landmarks,
            confidence: nums[0],
        });
    }
    HandTrajectory::new(frames)
}
