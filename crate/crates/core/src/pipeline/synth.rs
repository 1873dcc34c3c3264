//! Synthetic scene bundles with known ground truth.
//!
//! A sphere moves rigidly in front of a tilted background plane and is seen
//! by a pinhole camera. The generator renders metric depth, writes generated
//! depth through a planted affine model, corrupts the sensor frame with
//! outliers, tracks surface keypoints, attaches a hand rigidly to the object
//! and places four grasp candidates whose filter outcomes are known:
//!
//! | index | candidate   | confidence | outcome                     |
//! |-------|-------------|------------|-----------------------------|
//! | 0     | far away    | 0.95       | fails the contact filter    |
//! | 1     | colliding   | 0.99       | fails the collision filter  |
//! | 2     | good        | 0.8        | ranked first                |
//! | 3     | weak        | 0.2        | same geometry as 2, second  |
//!
//! The ground-truth file holds `E C_t G` for every frame, where `C_t` is the
//! cumulative object motion in the camera frame, `G` the good grasp in the
//! camera frame and `E` the camera-to-robot extrinsic.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::depth::{write_depth_sequence, DepthFrame};
use crate::grasp::{
    filter_by_collision, filter_by_contact, write_grasp_candidates, GraspCandidate, GraspParams,
    SceneCloud,
};
use crate::hand::{write_hand_landmarks, HandFrame, HandTrajectory, Landmarks, LANDMARK_COUNT};
use crate::raster::{write_pgm_mask, Mask};
use crate::se3::{FlowField, Mat3, RigidTransform, Vec3};

use super::bundle::{tracks_text, BundleManifest, MANIFEST_NAME};
use super::config::{CameraConfig, PipelineConfig, PoseConfig};
use super::trajectory::TRAJECTORY_HEADER;
use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectSpec {
    /// Sphere center at frame 0, camera frame, meters.
    pub center: [f64; 3],
    pub radius: f64,
    pub keypoints: usize,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            center: [0.0, 0.02, 0.6],
            radius: 0.05,
            keypoints: 40,
        }
    }
}

/// Background plane `z = depth + slope[0] x + slope[1] y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneSpec {
    pub depth: f64,
    pub slope: [f64; 2],
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            depth: 0.68,
            slope: [0.1, 0.05],
        }
    }
}

/// `frames` equal steps that together translate the object by
/// `translation` and rotate it by `angle_deg` about `axis` through its
/// current center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSegment {
    pub frames: usize,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub angle_deg: f64,
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl MotionSegment {
    pub fn still(frames: usize) -> Self {
        Self {
            frames,
            translation: [0.0; 3],
            axis: z_axis(),
            angle_deg: 0.0,
        }
    }

    pub fn translate(frames: usize, translation: [f64; 3]) -> Self {
        Self {
            translation,
            ..Self::still(frames)
        }
    }
}

/// Metric depth is `scale * generated + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthSpec {
    pub scale: f64,
    pub shift: f64,
    pub outlier_fraction: f64,
    /// Outlier pixels are pushed back by a uniform draw from this range, meters.
    pub outlier_offset: [f64; 2],
    /// Sensor columns lost on each side; a 2x2 valid island is left inside.
    pub invalid_border_px: usize,
}

impl Default for DepthSpec {
    fn default() -> Self {
        Self {
            scale: 2.0,
            shift: 0.1,
            outlier_fraction: 0.3,
            outlier_offset: [1.0, 2.0],
            invalid_border_px: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandSpec {
    pub enabled: bool,
    /// Landmarks are written divided by this factor, as a monocular hand
    /// estimator with the wrong scale would report them.
    pub scale: f64,
    pub mask_radius_px: f64,
}

impl Default for HandSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            scale: 1.25,
            mask_radius_px: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub name: String,
    pub goal: String,
    pub image: ImageSpec,
    pub camera: CameraConfig,
    pub extrinsic: PoseConfig,
    pub object: ObjectSpec,
    pub background: PlaneSpec,
    pub depth: DepthSpec,
    pub hand: HandSpec,
    pub motion: Vec<MotionSegment>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::pick_and_place()
    }
}

fn spec_error(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::SpecInvalid {
        field: field.into(),
        message: message.into(),
    }
}

impl SynthSpec {
    /// Hold, lift, carry with a slow turn, lower. 14 frames.
    pub fn pick_and_place() -> Self {
        Self {
            name: "pick-and-place".into(),
            goal: "pick up the ball and put it down to the right".into(),
            image: ImageSpec::default(),
            camera: CameraConfig::default(),
            extrinsic: PoseConfig {
                axis: [1.0, 0.0, 0.0],
                angle_deg: 150.0,
                translation_m: [0.45, 0.05, 0.55],
            },
            object: ObjectSpec::default(),
            background: PlaneSpec::default(),
            depth: DepthSpec::default(),
            hand: HandSpec::default(),
            motion: vec![
                MotionSegment::still(2),
                MotionSegment::translate(3, [0.0, -0.1, 0.0]),
                MotionSegment {
                    frames: 4,
                    translation: [0.1, 0.0, 0.0],
                    axis: [0.0, 1.0, 0.0],
                    angle_deg: 20.0,
                },
                MotionSegment::translate(3, [0.0, 0.1, 0.0]),
            ],
        }
    }

    /// Lift, then a single 60 degree turn, then carry.
    pub fn sharp_turn() -> Self {
        Self {
            name: "sharp-turn".into(),
            goal: "lift the ball and turn it over".into(),
            motion: vec![
                MotionSegment::still(2),
                MotionSegment::translate(3, [0.0, -0.1, 0.0]),
                MotionSegment {
                    frames: 1,
                    translation: [0.0; 3],
                    axis: [0.0, 0.0, 1.0],
                    angle_deg: -60.0,
                },
                MotionSegment::translate(3, [0.06, 0.0, 0.0]),
            ],
            ..Self::pick_and_place()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let spec: Self = toml::from_str(text).map_err(|e| spec_error("spec", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput {
            path: path.display().to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn frames(&self) -> usize {
        1 + self.motion.iter().map(|m| m.frames).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if self.image.width < 16 || self.image.height < 16 {
            return Err(spec_error("image", "width and height must be at least 16"));
        }
        let c = &self.camera;
        if !(c.fx > 0.0 && c.fy > 0.0) || !finite(&[c.fx, c.fy, c.cx, c.cy]) {
            return Err(spec_error(
                "camera",
                "focal lengths must be positive and finite",
            ));
        }
        let e = &self.extrinsic;
        if !finite(&e.axis) || !finite(&e.translation_m) || !e.angle_deg.is_finite() {
            return Err(spec_error("extrinsic", "values must be finite"));
        }
        if e.angle_deg != 0.0 && Vec3::from(e.axis).norm() == 0.0 {
            return Err(spec_error("extrinsic.axis", "zero axis with nonzero angle"));
        }
        let o = &self.object;
        if !(o.radius > 0.0) || !o.radius.is_finite() {
            return Err(spec_error("object.radius", "must be positive"));
        }
        if !finite(&o.center) || o.center[2] <= o.radius {
            return Err(spec_error(
                "object.center",
                "sphere must lie in front of the camera",
            ));
        }
        if o.keypoints < 4 {
            return Err(spec_error("object.keypoints", "need at least 4"));
        }
        if !finite(&[
            self.background.depth,
            self.background.slope[0],
            self.background.slope[1],
        ]) || !(self.background.depth > 0.0)
        {
            return Err(spec_error(
                "background.depth",
                "must be positive and finite",
            ));
        }
        let d = &self.depth;
        if !(d.scale > 0.0) || !d.scale.is_finite() {
            return Err(spec_error("depth.scale", "must be positive"));
        }
        if !d.shift.is_finite() {
            return Err(spec_error("depth.shift", "must be finite"));
        }
        if !(0.0..1.0).contains(&d.outlier_fraction) {
            return Err(spec_error("depth.outlier_fraction", "must lie in [0, 1)"));
        }
        let [lo, hi] = d.outlier_offset;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(spec_error("depth.outlier_offset", "need 0 < low <= high"));
        }
        if 2 * d.invalid_border_px >= self.image.width {
            return Err(spec_error(
                "depth.invalid_border_px",
                "border covers the whole image",
            ));
        }
        if !(self.hand.scale > 0.0) || !self.hand.scale.is_finite() {
            return Err(spec_error("hand.scale", "must be positive"));
        }
        if !(self.hand.mask_radius_px >= 0.0) {
            return Err(spec_error("hand.mask_radius_px", "must be non-negative"));
        }
        if self.motion.is_empty() {
            return Err(spec_error("motion", "need at least one segment"));
        }
        for (i, m) in self.motion.iter().enumerate() {
            if m.frames == 0 {
                return Err(spec_error(
                    &format!("motion[{i}].frames"),
                    "must be positive",
                ));
            }
            if !finite(&m.translation) || !finite(&m.axis) || !m.angle_deg.is_finite() {
                return Err(spec_error(&format!("motion[{i}]"), "values must be finite"));
            }
            if m.angle_deg != 0.0 && Vec3::from(m.axis).norm() == 0.0 {
                return Err(spec_error(
                    &format!("motion[{i}].axis"),
                    "zero axis with nonzero angle",
                ));
            }
        }
        Ok(())
    }

    fn pinhole(&self) -> PinholeCamera {
        PinholeCamera::new(
            self.camera.fx,
            self.camera.fy,
            self.camera.cx,
            self.camera.cy,
        )
    }

    /// Adjacent-frame motions in the camera frame.
    pub fn motions(&self) -> Vec<RigidTransform> {
        let mut center = Vec3::from(self.object.center);
        let mut out = Vec::new();
        for seg in &self.motion {
            let n = seg.frames as f64;
            let step = Vec3::from(seg.translation) / n;
            let rot = if seg.angle_deg == 0.0 {
                Mat3::identity()
            } else {
                RigidTransform::from_axis_angle(
                    &Vec3::from(seg.axis),
                    seg.angle_deg.to_radians() / n,
                    Vec3::zeros(),
                )
                .rotation
            };
            for _ in 0..seg.frames {
                out.push(RigidTransform {
                    rotation: rot,
                    translation: center + step - rot * center,
                });
                center += step;
            }
        }
        out
    }

    /// Cumulative object poses `C_t`, with `C_0` the identity.
    pub fn object_poses(&self) -> Vec<RigidTransform> {
        let mut poses = vec![RigidTransform::identity()];
        for m in self.motions() {
            let last = *poses.last().expect("non-empty");
            poses.push(m.compose(&last));
        }
        poses
    }
}

/// Paths inside a generated bundle.
pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const DEPTH_GENERATED: &str = "depth_generated.f32";
    pub const DEPTH_SENSOR: &str = "depth_sensor.f32";
    pub const TRACKS: &str = "tracks.txt";
    pub const LANDMARKS: &str = "hand_landmarks.txt";
    pub const GRASPS: &str = "grasps.txt";
    pub const GROUND_TRUTH: &str = "ground_truth.txt";
    pub const SPEC: &str = "spec.toml";
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub config: PipelineConfig,
    /// End-effector ground truth, robot frame, one pose per frame.
    pub ground_truth: Vec<RigidTransform>,
    pub grasps: Vec<GraspCandidate>,
    /// Index of the candidate the ranking must pick.
    pub best_grasp: usize,
}

pub const BEST_GRASP: usize = 2;

struct Scene<'a> {
    spec: &'a SynthSpec,
    camera: PinholeCamera,
}

impl Scene<'_> {
    fn ray(&self, x: usize, y: usize) -> Vec3 {
        self.camera.ray(x as f64, y as f64)
    }

    /// Depth of the near sphere intersection along `d` (z = 1 ray).
    fn sphere_depth(&self, d: &Vec3, center: &Vec3) -> Option<f64> {
        let r = self.spec.object.radius;
        let a = d.norm_squared();
        let b = d.dot(center);
        let disc = b * b - a * (center.norm_squared() - r * r);
        if disc < 0.0 {
            return None;
        }
        let z = (b - disc.sqrt()) / a;
        (z > 0.0).then_some(z)
    }

    fn plane_depth(&self, d: &Vec3) -> Option<f64> {
        let p = &self.spec.background;
        let denom = 1.0 - p.slope[0] * d.x - p.slope[1] * d.y;
        let z = p.depth / denom;
        (denom > 0.0 && z > 0.0 && z.is_finite()).then_some(z)
    }

    /// Metric depth and object mask for an object centered at `center`.
    fn render(&self, center: &Vec3) -> (Vec<f64>, Mask) {
        let ImageSpec { width, height } = self.spec.image;
        let mut values = Vec::with_capacity(width * height);
        let mut mask = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let d = self.ray(x, y);
                let z = match (self.sphere_depth(&d, center), self.plane_depth(&d)) {
                    (Some(s), Some(p)) if s <= p => {
                        mask.set(x, y, true);
                        s
                    }
                    (Some(s), None) => {
                        mask.set(x, y, true);
                        s
                    }
                    (_, Some(p)) => p,
                    (None, None) => f64::NAN,
                };
                values.push(z);
            }
        }
        (values, mask)
    }

    fn in_image(&self, p: &Vec3) -> Option<(f64, f64)> {
        let (u, v) = self.camera.project(p)?;
        let ImageSpec { width, height } = self.spec.image;
        (u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64).then_some((u, v))
    }
}

/// Evenly spread unit directions.
fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Right hand in its own frame: palm in the xy plane, fingers along +y,
/// index on the +x side. Meters.
fn hand_template() -> Landmarks {
    let mut lm = [Vec3::zeros(); LANDMARK_COUNT];
    let thumb = [[0.03, 0.02], [0.05, 0.04], [0.065, 0.06], [0.08, 0.075]];
    for (i, [x, y]) in thumb.into_iter().enumerate() {
        lm[1 + i] = Vec3::new(x, y, 0.0);
    }
    for (f, x) in [0.03, 0.01, -0.01, -0.03].into_iter().enumerate() {
        for (j, dy) in [0.0, 0.03, 0.05, 0.07].into_iter().enumerate() {
            lm[5 + 4 * f + j] = Vec3::new(x, 0.08 + dy, 0.0);
        }
    }
    lm
}

/// Hand pose at frame 0: fingers pointing along camera +x, index tip on the
/// sphere surface facing the camera.
fn hand_placement(center: &Vec3, radius: f64) -> RigidTransform {
    let rotation = Mat3::from_columns(&[Vec3::y(), Vec3::x(), -Vec3::z()]);
    let tip = Vec3::new(-0.6, 0.0, -0.8) * radius + center;
    let local_tip = hand_template()[8];
    RigidTransform {
        rotation,
        translation: tip - rotation * local_tip,
    }
}

fn disk(mask: &mut Mask, (u, v): (f64, f64), radius: f64) {
    let (w, h) = mask.dims();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - u, y as f64 - v);
            if dx * dx + dy * dy <= radius * radius {
                mask.set(x, y, true);
            }
        }
    }
}

/// Same layout as trajectory files, but with shortest round-trip decimals.
pub fn ground_truth_text(poses: &[RigidTransform]) -> String {
    let mut out = format!(
        "{TRAJECTORY_HEADER} source=object-flow poses={}\n",
        poses.len()
    );
    for (i, p) in poses.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in p.to_row_major() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(io(path))
}

/// Renders the scene described by `spec` into `out` and returns what was
/// written. The same spec and seed give byte-identical files.
pub fn generate_synthetic_bundle(
    spec: &SynthSpec,
    out: &Path,
    seed: u64,
) -> Result<SynthBundle, PipelineError> {
    spec.validate()?;
    let scene = Scene {
        spec,
        camera: spec.pinhole(),
    };
    let ImageSpec { width, height } = spec.image;
    let poses = spec.object_poses();
    let c0 = Vec3::from(spec.object.center);
    let r = spec.object.radius;
    let extrinsic = spec.extrinsic.transform();
    let DepthSpec { scale, shift, .. } = spec.depth;
    let to_generated = |m: f64| (m - shift) / scale;

    // Metric depth and masks.
    let mut metric = Vec::new();
    let mut object_masks = Vec::new();
    for (t, pose) in poses.iter().enumerate() {
        let (values, mask) = scene.render(&pose.transform_point(&c0));
        if mask.count() == 0 {
            return Err(spec_error(
                "motion",
                format!("object leaves the image at frame {t}"),
            ));
        }
        if values
            .iter()
            .any(|&m| m.is_finite() && !(to_generated(m) > 0.0))
        {
            return Err(spec_error(
                "depth.shift",
                "generated depth would be non-positive",
            ));
        }
        metric.push(values);
        object_masks.push(mask);
    }

    let generated: Vec<DepthFrame> = metric
        .iter()
        .map(|v| {
            DepthFrame::from_values(width, height, v.iter().map(|&m| to_generated(m)).collect())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| spec_error("image", e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = spec.depth.outlier_offset;
    let border = spec.depth.invalid_border_px;
    let island = |x: usize, y: usize| {
        border >= 3 && (1..3).contains(&x) && (height / 2..height / 2 + 2).contains(&y)
    };
    let mut sensor = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let outlier = rng.random_bool(spec.depth.outlier_fraction);
            let offset = rng.random_range(lo..=hi);
            let m = metric[0][y * width + x];
            let lost = (x < border || x >= width - border) && !island(x, y);
            sensor.push(if lost {
                f64::NAN
            } else if outlier {
                m + offset
            } else {
                m
            });
        }
    }
    let sensor = DepthFrame::from_values(width, height, sensor)
        .map_err(|e| spec_error("image", e.to_string()))?;

    // Keypoint tracks in generated-depth units.
    let dirs = fibonacci_sphere(spec.object.keypoints);
    let mut valid = Vec::with_capacity(dirs.len() * poses.len());
    let mut positions = Vec::with_capacity(dirs.len() * poses.len());
    for d in &dirs {
        for pose in &poses {
            let center = pose.transform_point(&c0);
            let q = pose.transform_point(&(c0 + d * r));
            let facing = (q - center).dot(&q) < 0.0;
            let g = to_generated(q.z);
            valid.push(facing && g > 0.0 && scene.in_image(&q).is_some());
            positions.push(q * (g / q.z));
        }
    }
    let tracks = FlowField::new(dirs.len(), poses.len(), positions, valid)
        .map_err(|e| spec_error("object", e.to_string()))?;
    for t in 1..poses.len() {
        let common = (0..dirs.len())
            .filter(|&k| tracks.is_valid(k, t - 1) && tracks.is_valid(k, t))
            .count();
        if common < 3 {
            return Err(spec_error(
                "motion",
                format!(
                    "only {common} keypoints visible across frames {} and {t}",
                    t - 1
                ),
            ));
        }
    }

    // Hand rigidly attached to the object.
    let hand = spec.hand.enabled.then(|| {
        let template = hand_template();
        let place = hand_placement(&c0, r);
        let frames: Vec<(Landmarks, Landmarks)> = poses
            .iter()
            .map(|pose| {
                let h = pose.compose(&place);
                let truth = template.map(|p| h.transform_point(&p));
                (truth, truth.map(|p| p / spec.hand.scale))
            })
            .collect();
        frames
    });

    // Grasp candidates, built in the camera frame.
    let good = RigidTransform::from_translation(c0 + Vec3::new(0.0, 0.0, -0.043));
    let palm_line = |pose: &RigidTransform| {
        (
            pose.transform_point(&Vec3::new(0.0, -0.03, 0.0)),
            pose.transform_point(&Vec3::new(0.0, 0.03, 0.0)),
        )
    };
    let (gl, gr) = palm_line(&good);
    let far = RigidTransform::from_translation(good.translation + Vec3::new(0.3, 0.0, 0.0));
    let (fl, fr) = palm_line(&far);
    // A finger probe 0.2 mm in front of a background point beside the sphere.
    let (u0, v0) = scene
        .camera
        .project(&c0)
        .ok_or_else(|| spec_error("object.center", "behind the camera"))?;
    let rim_px = (scene.camera.fx * r / (c0.z - r)).ceil() as usize + 4;
    let bx = u0.round() as usize + rim_px;
    let by = v0.round() as usize;
    if bx >= width - border || by >= height {
        return Err(spec_error(
            "object.center",
            "no background visible beside the object",
        ));
    }
    let bz = metric[0][by * width + bx];
    let background = scene.camera.unproject(bx as f64, by as f64, bz);
    let probe = Vec3::new(0.01, 0.045, 0.04);
    let colliding =
        RigidTransform::from_translation(background - probe - Vec3::new(0.0, 0.0, 0.0002));

    let to_robot = |pose: &RigidTransform, conf: f64, (l, rr): (Vec3, Vec3)| GraspCandidate {
        pose: extrinsic.compose(pose),
        confidence: conf,
        finger_base_left: extrinsic.transform_point(&l),
        finger_base_right: extrinsic.transform_point(&rr),
    };
    let grasps = vec![
        to_robot(&far, 0.95, (fl, fr)),
        to_robot(&colliding, 0.99, (gl, gr)),
        to_robot(&good, 0.8, (gl, gr)),
        to_robot(&good, 0.2, (gl, gr)),
    ];

    // The fixture must separate the candidates the way the table says.
    let params = GraspParams::default();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let m = metric[0][y * width + x];
            if m.is_finite() {
                points.push(
                    extrinsic.transform_point(&scene.camera.unproject(x as f64, y as f64, m)),
                );
                labels.push(u32::from(object_masks[0].get(x, y)));
            }
        }
    }
    let cloud =
        SceneCloud::new(points, labels, 1).map_err(|e| spec_error("background", e.to_string()))?;
    let contact: Vec<Vec3> = tracks
        .frame_points(0)
        .iter()
        .map(|p| extrinsic.transform_point(&(p * (scale + shift / p.z))))
        .collect();
    let near = filter_by_contact(&grasps, &contact, params.max_contact_dist);
    let clear = filter_by_collision(&grasps, &cloud, &params.probes, params.clearance);
    if near != [1, 2, 3] || clear != [0, 2, 3] {
        return Err(spec_error(
            "object",
            format!("grasp fixture does not separate (contact {near:?}, collision {clear:?})"),
        ));
    }

    let ground_truth: Vec<RigidTransform> = poses
        .iter()
        .map(|c| extrinsic.compose(c).compose(&good))
        .collect();

    // Files.
    std::fs::create_dir_all(out.join("masks")).map_err(io(out))?;
    let depth_err = |e: crate::depth::DepthError| PipelineError::Stage {
        module: "synth",
        path: None,
        message: e.to_string(),
    };
    write_depth_sequence(&out.join(files::DEPTH_GENERATED), &generated).map_err(depth_err)?;
    write_depth_sequence(
        &out.join(files::DEPTH_SENSOR),
        std::slice::from_ref(&sensor),
    )
    .map_err(depth_err)?;
    write_file(&out.join(files::TRACKS), &tracks_text(&tracks))?;

    let mask_err = |e: crate::raster::RasterError| PipelineError::Stage {
        module: "synth",
        path: None,
        message: e.to_string(),
    };
    let mut object_paths = Vec::new();
    for (t, m) in object_masks.iter().enumerate() {
        let rel = format!("masks/object_{t:03}.pgm");
        write_pgm_mask(&out.join(&rel), m).map_err(mask_err)?;
        object_paths.push(rel);
    }

    let mut hand_paths = Vec::new();
    if let Some(frames) = &hand {
        for (t, (truth, _)) in frames.iter().enumerate() {
            let mut m = Mask::new(width, height);
            for p in truth {
                if let Some(uv) = scene.camera.project(p) {
                    disk(&mut m, uv, spec.hand.mask_radius_px);
                }
            }
            let rel = format!("masks/hand_{t:03}.pgm");
            write_pgm_mask(&out.join(&rel), &m).map_err(mask_err)?;
            hand_paths.push(rel);
        }
        let trajectory = HandTrajectory::new(
            frames
                .iter()
                .map(|(_, reported)| HandFrame {
                    landmarks: *reported,
                    confidence: 1.0,
                })
                .collect(),
        )
        .map_err(|e| spec_error("hand", e.to_string()))?;
        let p = out.join(files::LANDMARKS);
        write_hand_landmarks(&p, &trajectory).map_err(io(&p))?;
    }

    let p = out.join(files::GRASPS);
    write_grasp_candidates(&p, &grasps).map_err(io(&p))?;
    write_file(
        &out.join(files::GROUND_TRUTH),
        &ground_truth_text(&ground_truth),
    )?;

    let config = PipelineConfig {
        seed,
        camera: spec.camera.clone(),
        extrinsic: spec.extrinsic.clone(),
        ..PipelineConfig::default()
    };
    write_file(&out.join(files::CONFIG), &config.to_toml())?;
    write_file(&out.join(files::SPEC), &spec.to_toml())?;

    let manifest = BundleManifest {
        name: spec.name.clone(),
        goal: spec.goal.clone(),
        depth_generated: files::DEPTH_GENERATED.into(),
        depth_sensor: files::DEPTH_SENSOR.into(),
        tracks: files::TRACKS.into(),
        object_masks: object_paths,
        hand_masks: hand_paths,
        landmarks: spec.hand.enabled.then(|| files::LANDMARKS.into()),
        grasps: files::GRASPS.into(),
        scenario: None,
        config: Some(files::CONFIG.into()),
        ground_truth: Some(files::GROUND_TRUTH.into()),
    };
    write_file(
        &out.join(MANIFEST_NAME),
        &toml::to_string(&manifest).expect("manifest serializes"),
    )?;

    Ok(SynthBundle {
        dir: out.to_path_buf(),
        manifest,
        config,
        ground_truth,
        grasps,
        best_grasp: BEST_GRASP,
    })
}
