//! Pipeline configuration.
//!
//! The file uses the units thresholds are usually quoted in (degrees,
//! centimeters, millimeters, pixels); accessors return meters and radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::depth::RansacParams;
use crate::grasp::GraspParams;
use crate::hand::HandCalibrationParams;
use crate::planner::{LoopParams, SearchParams};
use crate::se3::{RigidTransform, Vec3};

use super::PipelineError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub depth: DepthConfig,
    #[serde(default)]
    pub hand: HandConfig,
    #[serde(default)]
    pub grasp: GraspConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    /// Camera frame to robot base frame.
    #[serde(default)]
    pub extrinsic: PoseConfig,
    /// Gripper pose relative to the hand frame, used when hand flow is
    /// grounded without a grasp candidate.
    #[serde(default)]
    pub tool: PoseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub theta_max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthConfig {
    pub inlier_threshold_m: f64,
    pub iterations: usize,
    pub min_component_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeThresholds {
    pub epsilon: f64,
    pub delta_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandConfig {
    pub tip_radius_px: f64,
    pub grasp: ModeThresholds,
    pub non_prehensile: ModeThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspConfig {
    pub max_contact_dist_cm: f64,
    pub clearance_mm: f64,
    pub support_band_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// N_c
    pub beam_width: usize,
    pub actions_per_beam: usize,
    /// K during tree search.
    pub rollouts_strategic: usize,
    /// K when re-grounding a step during execution.
    pub rollouts_greedy: usize,
    pub s_min: f64,
    pub max_recoveries: usize,
    /// Plan length in strategic mode.
    pub horizon: usize,
    pub max_greedy_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseConfig {
    pub axis: [f64; 3],
    pub angle_deg: f64,
    pub translation_m: [f64; 3],
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            theta_max_deg: 45.0,
        }
    }
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            inlier_threshold_m: 0.15,
            iterations: 1000,
            min_component_area: 50,
        }
    }
}

impl Default for HandConfig {
    fn default() -> Self {
        Self {
            tip_radius_px: 15.0,
            grasp: ModeThresholds {
                epsilon: 0.9,
                delta_cm: 5.0,
            },
            non_prehensile: ModeThresholds {
                epsilon: 0.95,
                delta_cm: 2.0,
            },
        }
    }
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            max_contact_dist_cm: 5.0,
            clearance_mm: 1.0,
            support_band_cm: 0.5,
        }
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            beam_width: 2,
            actions_per_beam: 2,
            rollouts_strategic: 4,
            rollouts_greedy: 8,
            s_min: 0.0,
            max_recoveries: 2,
            horizon: 3,
            max_greedy_steps: 16,
        }
    }
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fx: 200.0,
            fy: 200.0,
            cx: 80.0,
            cy: 60.0,
        }
    }
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            axis: [0.0, 0.0, 1.0],
            angle_deg: 0.0,
            translation_m: [0.0; 3],
        }
    }
}

impl PoseConfig {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let aa = crate::se3::to_axis_angle(&t.rotation).expect("valid rotation");
        Self {
            axis: aa.axis.into(),
            angle_deg: aa.angle.to_degrees(),
            translation_m: t.translation.into(),
        }
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_axis_angle(
            &Vec3::from(self.axis),
            self.angle_deg.to_radians(),
            Vec3::from(self.translation_m),
        )
    }
}

fn invalid(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        path: field.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput {
            path: path.display().to_string(),
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides, value in TOML syntax.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("own output parses");
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| invalid(o, "expected key=value"))?;
            let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
                .map(|mut t| t.remove("v").expect("key present"))
                .or_else(|_| Ok::<_, PipelineError>(toml::Value::String(value.to_string())))?;
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let leaf = parts.pop().expect("split yields one part");
            let mut table = &mut doc;
            for p in parts {
                table = table
                    .entry(p)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| invalid(key, "not a section"))?;
            }
            table.insert(leaf.to_string(), parsed);
        }
        let cfg: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| invalid("<override>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("flow.theta_max_deg", self.flow.theta_max_deg),
            ("depth.inlier_threshold_m", self.depth.inlier_threshold_m),
            ("hand.tip_radius_px", self.hand.tip_radius_px),
            ("hand.grasp.epsilon", self.hand.grasp.epsilon),
            ("hand.grasp.delta_cm", self.hand.grasp.delta_cm),
            (
                "hand.non_prehensile.epsilon",
                self.hand.non_prehensile.epsilon,
            ),
            (
                "hand.non_prehensile.delta_cm",
                self.hand.non_prehensile.delta_cm,
            ),
            ("grasp.max_contact_dist_cm", self.grasp.max_contact_dist_cm),
            ("grasp.clearance_mm", self.grasp.clearance_mm),
            ("grasp.support_band_cm", self.grasp.support_band_cm),
            ("camera.fx", self.camera.fx),
            ("camera.fy", self.camera.fy),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        let counts = [
            ("depth.iterations", self.depth.iterations),
            ("planner.beam_width", self.planner.beam_width),
            ("planner.actions_per_beam", self.planner.actions_per_beam),
            (
                "planner.rollouts_strategic",
                self.planner.rollouts_strategic,
            ),
            ("planner.rollouts_greedy", self.planner.rollouts_greedy),
            ("planner.horizon", self.planner.horizon),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !self.planner.s_min.is_finite() {
            return Err(invalid("planner.s_min", "must be finite"));
        }
        if !(self.camera.cx.is_finite() && self.camera.cy.is_finite()) {
            return Err(invalid("camera", "principal point must be finite"));
        }
        for (field, pose) in [("extrinsic", &self.extrinsic), ("tool", &self.tool)] {
            let finite = pose
                .axis
                .iter()
                .chain(&pose.translation_m)
                .all(|v| v.is_finite())
                && pose.angle_deg.is_finite();
            if !finite || Vec3::from(pose.axis).norm() == 0.0 {
                return Err(invalid(field, "axis must be nonzero and all values finite"));
            }
        }
        Ok(())
    }

    pub fn theta_max(&self) -> f64 {
        self.flow.theta_max_deg.to_radians()
    }

    pub fn camera(&self) -> PinholeCamera {
        PinholeCamera::new(
            self.camera.fx,
            self.camera.fy,
            self.camera.cx,
            self.camera.cy,
        )
    }

    pub fn ransac(&self) -> RansacParams {
        RansacParams {
            iterations: self.depth.iterations,
            inlier_threshold: self.depth.inlier_threshold_m,
            seed: self.seed,
            min_component_area: self.depth.min_component_area,
        }
    }

    pub fn hand_grasp(&self) -> HandCalibrationParams {
        HandCalibrationParams {
            epsilon: self.hand.grasp.epsilon,
            delta: self.hand.grasp.delta_cm / 100.0,
            tip_radius: self.hand.tip_radius_px,
        }
    }

    pub fn hand_non_prehensile(&self) -> HandCalibrationParams {
        HandCalibrationParams {
            epsilon: self.hand.non_prehensile.epsilon,
            delta: self.hand.non_prehensile.delta_cm / 100.0,
            tip_radius: self.hand.tip_radius_px,
        }
    }

    pub fn grasp_params(&self) -> GraspParams {
        GraspParams {
            max_contact_dist: self.grasp.max_contact_dist_cm / 100.0,
            clearance: self.grasp.clearance_mm / 1000.0,
            support_band: self.grasp.support_band_cm / 100.0,
            ..GraspParams::default()
        }
    }

    pub fn loop_params(&self, horizon: Option<usize>) -> LoopParams {
        LoopParams {
            search: SearchParams {
                horizon: horizon.unwrap_or(self.planner.horizon),
                beam_width: self.planner.beam_width,
                actions_per_beam: self.planner.actions_per_beam,
                rollouts_per_action: self.planner.rollouts_strategic,
                s_min: self.planner.s_min,
            },
            execution_rollouts: self.planner.rollouts_greedy,
            max_recoveries_per_step: self.planner.max_recoveries,
            max_greedy_steps: self.planner.max_greedy_steps,
            record_timings: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_units() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.theta_max(), 45f64.to_radians());
        assert_eq!(cfg.hand_grasp(), HandCalibrationParams::grasp());
        assert_eq!(
            cfg.hand_non_prehensile(),
            HandCalibrationParams::non_prehensile()
        );
        assert_eq!(cfg.grasp_params(), GraspParams::default());
        assert_eq!(cfg.ransac(), RansacParams::default());
        let lp = cfg.loop_params(None);
        assert_eq!(
            (lp.search.beam_width, lp.search.rollouts_per_action),
            (2, 4)
        );
        assert_eq!((lp.execution_rollouts, lp.max_recoveries_per_step), (8, 2));
        assert_eq!(lp.search.s_min, 0.0);
    }

    #[test]
    fn round_trip_is_fixed_point() {
        let text = "seed = 7\n[flow]\ntheta_max_deg = 30.5\n[extrinsic]\naxis = [1.0, 0.0, 0.0]\nangle_deg = 120.0\ntranslation_m = [0.4, 0.0, 0.3]\n";
        let a = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(a.seed, 7);
        assert_eq!(a.depth.iterations, 1000);
        let b = PipelineConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
    }

    #[test]
    fn rejects_bad_values() {
        let err = PipelineConfig::from_toml("[grasp]\nclearance_mm = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("grasp.clearance_mm"), "{err}");
        assert!(PipelineConfig::from_toml("[flow]\ntheta = 3\n").is_err());
        assert!(PipelineConfig::from_toml("[planner]\nbeam_width = 0\n").is_err());
    }

    #[test]
    fn overrides() {
        let cfg = PipelineConfig::default()
            .with_overrides(&[
                "flow.theta_max_deg=60".into(),
                "planner.beam_width=3".into(),
                "seed=4".into(),
            ])
            .unwrap();
        assert_eq!(cfg.flow.theta_max_deg, 60.0);
        assert_eq!(cfg.planner.beam_width, 3);
        assert_eq!(cfg.seed, 4);
        assert!(PipelineConfig::default()
            .with_overrides(&["nope".into()])
            .is_err());
        assert!(PipelineConfig::default()
            .with_overrides(&["depth.iterations=0".into()])
            .is_err());
    }

    #[test]
    fn pose_config_round_trip() {
        let t = RigidTransform::from_axis_angle(
            &Vec3::new(1.0, 2.0, -1.0),
            2.0,
            Vec3::new(0.1, 0.2, 0.3),
        );
        let back = PoseConfig::from_transform(&t).transform();
        assert!(back.max_abs_diff(&t) < 1e-12);
    }
}
