//! Bundle ingestion and end-to-end orchestration: depth calibration, object
//! flow, flow switching, hand grounding, grasp ranking and the planner loop.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{apply_depth_model, calibrate_depth_affine, AffineDepthModel, DepthFrame};
use crate::flow::{
    hand_flow_to_ee, hand_flow_to_ee_with_tool, object_flow_to_ee, should_switch_to_hand,
    FlowSource, GroundedPlan,
};
use crate::grasp::{rank_grasps, RankedGrasp, SceneCloud};
use crate::hand::{
    calibrate_hand, hand_se3_trajectory, reject_hand_flow, GroundingMode, HandCalibration,
    HandFlowVerdict, HandObservation, RejectReason,
};
use crate::planner::scripted::{Entry, ProposeResponse, Scenario, ScenarioError, ScriptedRoles};
use crate::planner::{
    run_loop, select_horizon_mode, ExecutionReport, Grounder, GroundingOutcome, GroundingRequest,
    HorizonMode, Proposal, Role, RoleError, Roles, RunStatus,
};
use crate::se3::{flow_to_motion, FlowField, RigidTransform, Vec3};

mod bundle;
mod config;
pub mod synth;
mod trajectory;

pub use bundle::{parse_tracks, tracks_text, Bundle, BundleManifest, MANIFEST_NAME, TRACKS_HEADER};
pub use config::{
    CameraConfig, DepthConfig, FlowConfig, GraspConfig, HandConfig, ModeThresholds, PipelineConfig,
    PlannerConfig, PoseConfig,
};
pub use trajectory::{
    emit_trajectory, format_sig9, parse_trajectory, read_trajectory, trajectory_text,
    TRAJECTORY_HEADER,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing input: {path}")]
    MissingInput { path: String },
    #[error("invalid config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{module}: bad input {path}: {message}")]
    Input {
        module: &'static str,
        path: String,
        message: String,
    },
    #[error("{module} failed{}: {message}", .path.as_ref().map(|p| format!(" on {p}")).unwrap_or_default())]
    Stage {
        module: &'static str,
        path: Option<String>,
        message: String,
    },
    #[error("invalid synth spec field {field}: {message}")]
    SpecInvalid { field: String, message: String },
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<ScenarioError> for PipelineError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { path, .. } => PipelineError::MissingInput { path },
            ScenarioError::Parse { path, message } => PipelineError::Input {
                module: "planner_loop",
                path,
                message,
            },
        }
    }
}

impl PipelineError {
    /// 2 for bad or missing input, 3 for pipeline failures, 4 for planning
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput { .. }
            | PipelineError::Config { .. }
            | PipelineError::Input { .. }
            | PipelineError::SpecInvalid { .. } => 2,
            PipelineError::Stage { .. } | PipelineError::Io { .. } => 3,
            PipelineError::Planning(_) => 4,
        }
    }

    fn stage(module: &'static str, path: Option<&Path>, message: impl ToString) -> Self {
        PipelineError::Stage {
            module,
            path: path.map(|p| p.display().to_string()),
            message: message.to_string(),
        }
    }
}

/// Calibrated depth: the affine model and the metric sequence.
#[derive(Debug, Clone)]
pub struct DepthStage {
    pub model: AffineDepthModel,
    pub metric: Vec<DepthFrame>,
}

pub fn calibrate_bundle_depth(
    bundle: &Bundle,
    cfg: &PipelineConfig,
) -> Result<DepthStage, PipelineError> {
    let generated = bundle.generated_depth()?;
    let sensor = bundle.sensor_depth()?;
    let first = generated.first().ok_or_else(|| PipelineError::Input {
        module: "depth_calibration",
        path: bundle
            .path(&bundle.manifest.depth_generated)
            .display()
            .to_string(),
        message: "no frames".into(),
    })?;
    let model = calibrate_depth_affine(first, &sensor, &cfg.ransac()).map_err(|e| {
        PipelineError::stage(
            "depth_calibration",
            Some(&bundle.path(&bundle.manifest.depth_generated)),
            e,
        )
    })?;
    log::info!(
        "depth model scale {} shift {} ({} / {} inliers)",
        model.scale,
        model.shift,
        model.inlier_count,
        model.candidate_count
    );
    Ok(DepthStage {
        metric: apply_depth_model(&model, &generated),
        model,
    })
}

/// Tracks in generated-depth units to metric: a point at generated depth
/// `z` moves along its ray to depth `scale * z + shift`.
pub fn lift_tracks(flow: &FlowField, model: &AffineDepthModel) -> FlowField {
    flow.map_positions(|p| p * (model.scale + model.shift / p.z))
}

#[derive(Debug, Clone)]
pub struct ObjectStage {
    /// Metric keypoints, camera frame.
    pub tracks: FlowField,
    /// Adjacent-frame motions, camera frame.
    pub motions_camera: Vec<RigidTransform>,
    /// Adjacent-frame motions, robot base frame.
    pub motions_robot: Vec<RigidTransform>,
    pub max_rotation: f64,
    pub switch_to_hand: bool,
}

pub fn ground_object_flow(
    bundle: &Bundle,
    cfg: &PipelineConfig,
    depth: &DepthStage,
) -> Result<ObjectStage, PipelineError> {
    let tracks = lift_tracks(&bundle.tracks()?, &depth.model);
    let motions_camera = flow_to_motion(&tracks).map_err(|e| {
        PipelineError::stage(
            "se3_geometry",
            Some(&bundle.path(&bundle.manifest.tracks)),
            e,
        )
    })?;
    let extrinsic = cfg.extrinsic.transform();
    let motions_robot = motions_camera
        .iter()
        .map(|m| m.conjugate_by(&extrinsic))
        .collect();
    let max_rotation = motions_camera
        .iter()
        .map(RigidTransform::rotation_angle)
        .fold(0.0, f64::max);
    Ok(ObjectStage {
        switch_to_hand: should_switch_to_hand(&motions_camera, cfg.theta_max()),
        tracks,
        motions_camera,
        motions_robot,
        max_rotation,
    })
}

#[derive(Debug, Clone)]
pub struct HandStage {
    pub calibration: HandCalibration,
    /// Poses over `[t_start, t_end]`, camera frame.
    pub poses_camera: Vec<RigidTransform>,
    pub poses_robot: Vec<RigidTransform>,
}

pub fn ground_hand_flow(
    bundle: &Bundle,
    cfg: &PipelineConfig,
    depth: &DepthStage,
    mode: GroundingMode,
) -> Result<HandStage, PipelineError> {
    let hand = bundle.landmarks()?;
    let object_masks = bundle.object_masks()?;
    let hand_masks = match mode {
        GroundingMode::NonPrehensile { .. } => Some(bundle.hand_masks()?),
        GroundingMode::Grasp => None,
    };
    let camera = cfg.camera();
    let params = match mode {
        GroundingMode::Grasp => cfg.hand_grasp(),
        GroundingMode::NonPrehensile { .. } => cfg.hand_non_prehensile(),
    };
    let obs = HandObservation {
        hand: &hand,
        object_masks: &object_masks,
        hand_masks: hand_masks.as_ref(),
        depth: &depth.metric,
        camera: &camera,
    };
    let landmarks_path = bundle.manifest.landmarks.as_deref().map(|r| bundle.path(r));
    let fail = |e: &dyn std::fmt::Display| {
        PipelineError::stage("hand_grounding", landmarks_path.as_deref(), e)
    };
    let calibration = calibrate_hand(&obs, mode, &params);
    let dims = depth.metric.first().map_or((0, 0), DepthFrame::dims);
    if let HandFlowVerdict::Reject(reason) = reject_hand_flow(
        &hand,
        dims,
        &camera,
        calibration.as_ref().map(|c| &c.interval),
    ) {
        return Err(match reason {
            RejectReason::CalibrationFailure { message } => fail(&message),
            RejectReason::OutOfFrame {
                frame,
                outside_fraction,
            } => fail(&format!(
                "hand flow rejected: {:.0}% of landmarks outside the image at frame {frame}",
                outside_fraction * 100.0
            )),
        });
    }
    let calibration = calibration.map_err(|e| fail(&e))?;
    let poses_camera = hand_se3_trajectory(&hand, &calibration.interval, &calibration.correction)
        .map_err(|e| fail(&e))?;
    let extrinsic = cfg.extrinsic.transform();
    let poses_robot = poses_camera.iter().map(|p| extrinsic * *p).collect();
    Ok(HandStage {
        calibration,
        poses_camera,
        poses_robot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactSource {
    /// Calibrated contact fingertip at onset, carried back to the first frame.
    Fingertip,
    /// First-frame object keypoints.
    Keypoints,
}

#[derive(Debug, Clone)]
pub struct GraspStage {
    pub ranked: Vec<RankedGrasp>,
    pub contact_source: ContactSource,
    pub contact_points: Vec<Vec3>,
}

/// Frame-0 metric point cloud in the robot frame, labeled 1 on the object
/// mask and 0 elsewhere.
pub fn scene_cloud(
    frame: &DepthFrame,
    object_mask: &crate::raster::Mask,
    cfg: &PipelineConfig,
) -> SceneCloud {
    let camera = cfg.camera();
    let extrinsic = cfg.extrinsic.transform();
    let (w, h) = frame.dims();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = frame.get(x, y) {
                let p = camera.unproject(x as f64, y as f64, d);
                points.push(extrinsic.transform_point(&p));
                labels.push(u32::from(object_mask.get(x, y)));
            }
        }
    }
    SceneCloud::new(points, labels, 1).expect("depth frames hold finite values")
}

pub fn select_grasp(
    bundle: &Bundle,
    cfg: &PipelineConfig,
    depth: &DepthStage,
    object: &ObjectStage,
    hand: Option<&HandStage>,
) -> Result<GraspStage, PipelineError> {
    let candidates = bundle.grasps()?;
    for (i, c) in candidates.iter().enumerate() {
        c.validate().map_err(|message| PipelineError::Input {
            module: "grasp_selection",
            path: bundle.path(&bundle.manifest.grasps).display().to_string(),
            message: format!("candidate {i}: {message}"),
        })?;
    }
    let masks = bundle.object_masks()?;
    let first = depth
        .metric
        .first()
        .ok_or_else(|| PipelineError::stage("grasp_selection", None, "no depth frames"))?;
    let scene = scene_cloud(first, &masks.masks()[0], cfg);
    let object_points: Vec<Vec3> = scene.target_points().copied().collect();
    let extrinsic = cfg.extrinsic.transform();

    let (contact_source, contact_points) = match hand {
        Some(h) => {
            let interval = &h.calibration.interval;
            let tip = h.poses_camera[0].translation;
            let back = object.motions_camera[..interval.t_start]
                .iter()
                .fold(RigidTransform::identity(), |acc, m| *m * acc)
                .inverse();
            (
                ContactSource::Fingertip,
                vec![extrinsic.transform_point(&back.transform_point(&tip))],
            )
        }
        None => (
            ContactSource::Keypoints,
            object
                .tracks
                .frame_points(0)
                .iter()
                .map(|p| extrinsic.transform_point(p))
                .collect(),
        ),
    };
    let ranked = rank_grasps(
        &candidates,
        &object_points,
        &contact_points,
        &scene,
        &cfg.grasp_params(),
    )
    .map_err(|e| {
        PipelineError::stage(
            "grasp_selection",
            Some(&bundle.path(&bundle.manifest.grasps)),
            e,
        )
    })?;
    Ok(GraspStage {
        ranked,
        contact_source,
        contact_points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub scale: f64,
    pub shift: f64,
    pub inlier_count: usize,
    pub candidate_count: usize,
    pub inlier_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub keypoints: usize,
    pub frames: usize,
    pub max_rotation_deg: f64,
    pub theta_max_deg: f64,
    pub source: FlowSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSummary {
    pub t_start: usize,
    pub t_end: usize,
    pub contact_finger: crate::hand::Finger,
    pub s_start: f64,
    pub s_end: f64,
    pub t_corr: usize,
    pub window_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSummary {
    pub index: usize,
    pub confidence: f64,
    pub support: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSummary {
    pub contact_source: ContactSource,
    /// Survivors of both filters, best first.
    pub ranked: Vec<RankedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSummary {
    pub depth: DepthSummary,
    pub flow: FlowSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<HandSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp: Option<GraspSummary>,
    /// Set when hand flow was grounded without a grasp candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_failure: Option<String>,
    pub poses: usize,
}

/// Everything grounding produced for one bundle.
#[derive(Debug, Clone)]
pub struct Grounding {
    pub depth: DepthStage,
    pub object: ObjectStage,
    pub hand: Option<HandStage>,
    pub grasp: Option<GraspStage>,
    pub plan: GroundedPlan,
    pub summary: GroundingSummary,
}

fn hand_summary(h: &HandStage) -> HandSummary {
    let i = &h.calibration.interval;
    HandSummary {
        t_start: i.t_start,
        t_end: i.t_end,
        contact_finger: i.contact_finger,
        s_start: i.s_start,
        s_end: i.s_end,
        t_corr: i.t_corr,
        window_found: h.calibration.correction.window_found,
    }
}

/// Depth calibration, object flow, switching, hand grounding and grasp
/// ranking, producing the end-effector plan for the bundle's rollout.
pub fn ground_bundle(bundle: &Bundle, cfg: &PipelineConfig) -> Result<Grounding, PipelineError> {
    let depth = calibrate_bundle_depth(bundle, cfg)?;
    let object = ground_object_flow(bundle, cfg, &depth)?;
    let source = if object.switch_to_hand {
        FlowSource::HandFlow
    } else {
        FlowSource::ObjectFlow
    };
    log::info!(
        "max inter-frame rotation {:.3} deg, using {}",
        object.max_rotation.to_degrees(),
        source.as_str()
    );

    let hand = match source {
        FlowSource::HandFlow => Some(ground_hand_flow(bundle, cfg, &depth, GroundingMode::Grasp)?),
        FlowSource::ObjectFlow if bundle.has_landmarks() => {
            match ground_hand_flow(bundle, cfg, &depth, GroundingMode::Grasp) {
                Ok(h) => Some(h),
                Err(e) => {
                    log::warn!("hand grounding failed ({e}); using keypoints as contact points");
                    None
                }
            }
        }
        FlowSource::ObjectFlow => None,
    };

    let grasp = select_grasp(bundle, cfg, &depth, &object, hand.as_ref());
    let (plan, grasp, grasp_failure) = match (source, grasp) {
        (FlowSource::ObjectFlow, Ok(g)) => (
            object_flow_to_ee(&object.motions_robot, &g.ranked[0].candidate),
            Some(g),
            None,
        ),
        (FlowSource::ObjectFlow, Err(e)) => return Err(e),
        (FlowSource::HandFlow, Ok(g)) => {
            let h = hand.as_ref().expect("hand stage present in hand-flow mode");
            let plan =
                hand_flow_to_ee(&h.poses_robot, &g.ranked[0].candidate).ok_or_else(|| {
                    PipelineError::stage("flow_selection", None, "empty hand trajectory")
                })?;
            (plan, Some(g), None)
        }
        (FlowSource::HandFlow, Err(e)) => {
            log::warn!("no grasp candidate ({e}); grounding hand flow through the tool offset");
            let h = hand.as_ref().expect("hand stage present in hand-flow mode");
            let plan = hand_flow_to_ee_with_tool(&h.poses_robot, &cfg.tool.transform())
                .ok_or_else(|| {
                    PipelineError::stage("flow_selection", None, "empty hand trajectory")
                })?;
            (plan, None, Some(e.to_string()))
        }
    };

    let summary = GroundingSummary {
        depth: DepthSummary {
            scale: depth.model.scale,
            shift: depth.model.shift,
            inlier_count: depth.model.inlier_count,
            candidate_count: depth.model.candidate_count,
            inlier_ratio: depth.model.inlier_ratio,
        },
        flow: FlowSummary {
            keypoints: object.tracks.keypoints(),
            frames: object.tracks.frames(),
            max_rotation_deg: object.max_rotation.to_degrees(),
            theta_max_deg: cfg.flow.theta_max_deg,
            source,
        },
        hand: hand.as_ref().map(hand_summary),
        grasp: grasp.as_ref().map(|g| GraspSummary {
            contact_source: g.contact_source,
            ranked: g
                .ranked
                .iter()
                .map(|r| RankedSummary {
                    index: r.index,
                    confidence: r.candidate.confidence,
                    support: r.support,
                    total: r.total,
                })
                .collect(),
        }),
        grasp_failure,
        poses: plan.ee_trajectory.len(),
    };
    Ok(Grounding {
        depth,
        object,
        hand,
        grasp,
        plan,
        summary,
    })
}

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const REPORT_FILE: &str = "report.json";

/// Report of one `run`: the inputs used, the grounding summary and the
/// planner's execution record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub bundle: String,
    /// Manifest-relative paths of every input read.
    pub inputs: Vec<String>,
    pub grounding: GroundingSummary,
    pub trajectory: String,
    pub execution: ExecutionReport,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn succeeded(&self) -> bool {
        self.execution.status == RunStatus::Success
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where `trajectory.txt` and `report.json` go.
    pub out_dir: PathBuf,
    /// Forces a horizon mode instead of asking the scenario.
    pub mode: Option<HorizonMode>,
    /// `section.key=value` config overrides.
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

/// Grounder that serves the bundle's precomputed plan, and re-grounds
/// non-prehensile recovery requests with the requested finger.
struct BundleGrounder<'a> {
    bundle: &'a Bundle,
    cfg: &'a PipelineConfig,
    depth: &'a DepthStage,
    outcome: GroundingOutcome,
}

impl Grounder for BundleGrounder<'_> {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingOutcome, RoleError> {
        match req.contact_finger {
            None => Ok(self.outcome.clone()),
            Some(finger) => {
                let h = ground_hand_flow(
                    self.bundle,
                    self.cfg,
                    self.depth,
                    GroundingMode::NonPrehensile { finger },
                )
                .map_err(|e| RoleError::new(Role::Ground, e.to_string()))?;
                Ok(GroundingOutcome {
                    source: FlowSource::HandFlow,
                    poses: h.poses_robot.len(),
                    trajectory_ref: None,
                })
            }
        }
    }
}

/// Single-step scenario used when the bundle brings none.
pub fn default_scenario(manifest: &BundleManifest) -> Scenario {
    Scenario {
        goal: manifest.goal.clone(),
        propose: vec![Entry::new(
            "o0",
            ProposeResponse {
                proposals: vec![Proposal {
                    action: format!("execute {}", manifest.name),
                    track_object: "object".into(),
                    context: None,
                }],
            },
        )],
        ..Scenario::default()
    }
}

pub fn resolve_config(
    bundle: &Bundle,
    config_path: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match (config_path, &bundle.manifest.config) {
        (Some(p), _) => PipelineConfig::load(p)?,
        (None, Some(rel)) => PipelineConfig::load(&bundle.path(rel))?,
        (None, None) => PipelineConfig::default(),
    };
    if !overrides.is_empty() {
        cfg = cfg.with_overrides(overrides)?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Grounds the bundle, writes the trajectory, runs the planner loop against
/// the scripted environment and writes the report.
///
/// A failing loop is not an error here: the report carries the status.
pub fn run_pipeline(
    config_path: Option<&Path>,
    bundle_dir: &Path,
    opts: &RunOptions,
) -> Result<PipelineReport, PipelineError> {
    let bundle = Bundle::open(bundle_dir)?;
    let cfg = resolve_config(&bundle, config_path, &opts.overrides, opts.seed)?;
    let grounding = ground_bundle(&bundle, &cfg)?;

    std::fs::create_dir_all(&opts.out_dir).map_err(|source| PipelineError::Io {
        path: opts.out_dir.display().to_string(),
        source,
    })?;
    emit_trajectory(&grounding.plan, &opts.out_dir.join(TRAJECTORY_FILE))?;

    let m = &bundle.manifest;
    let scenario = match &m.scenario {
        Some(rel) => Scenario::load(bundle.path(rel))?,
        None => default_scenario(m),
    };
    let scripted = ScriptedRoles::new(scenario);
    let grounder = BundleGrounder {
        bundle: &bundle,
        cfg: &cfg,
        depth: &grounding.depth,
        outcome: GroundingOutcome {
            source: grounding.plan.source,
            poses: grounding.plan.ee_trajectory.len(),
            trajectory_ref: Some(TRAJECTORY_FILE.into()),
        },
    };
    let roles = Roles {
        grounder: &grounder,
        ..Roles::uniform(&scripted)
    };
    let task = scripted.scenario().task();
    let mode = opts
        .mode
        .unwrap_or_else(|| select_horizon_mode(&task, &scripted));
    let execution = run_loop(
        &task,
        mode,
        &roles,
        &cfg.loop_params(scripted.scenario().horizon),
    );

    let mut inputs = vec![
        m.depth_generated.clone(),
        m.depth_sensor.clone(),
        m.tracks.clone(),
    ];
    inputs.extend(m.object_masks.iter().cloned());
    if grounding.hand.is_some() {
        inputs.extend(m.landmarks.iter().cloned());
    }
    inputs.push(m.grasps.clone());
    if config_path.is_none() {
        inputs.extend(m.config.iter().cloned());
    }
    inputs.extend(m.scenario.iter().cloned());

    let report = PipelineReport {
        bundle: m.name.clone(),
        inputs,
        grounding: grounding.summary,
        trajectory: TRAJECTORY_FILE.into(),
        execution,
    };
    let report_path = opts.out_dir.join(REPORT_FILE);
    std::fs::write(&report_path, report.to_json() + "\n").map_err(|source| PipelineError::Io {
        path: report_path.display().to_string(),
        source,
    })?;
    Ok(report)
}
