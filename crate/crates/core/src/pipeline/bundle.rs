//! Scene bundles: a directory with a `bundle.toml` manifest naming every
//! input file relative to the directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth::{read_depth_sequence, DepthFrame};
use crate::grasp::{parse_grasp_candidates, GraspCandidate};
use crate::hand::{parse_hand_landmarks, HandTrajectory, MaskSequence};
use crate::raster::read_pgm_mask;
use crate::se3::{FlowField, Vec3};

use super::PipelineError;

pub const MANIFEST_NAME: &str = "bundle.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub name: String,
    #[serde(default)]
    pub goal: String,
    /// Generated (relative) depth, one frame per video frame.
    pub depth_generated: String,
    /// Sensor depth; its first frame is aligned with the first generated frame.
    pub depth_sensor: String,
    pub tracks: String,
    pub object_masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hand_masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<String>,
    pub grasps: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

/// A manifest plus the directory it lives in.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
}

fn missing(path: &Path) -> PipelineError {
    PipelineError::MissingInput {
        path: path.display().to_string(),
    }
}

impl Bundle {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|_| missing(&path))?;
        let manifest = toml::from_str(&text).map_err(|e| PipelineError::Input {
            module: "bundle",
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self { dir, manifest })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn existing(&self, rel: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(missing(&p))
        }
    }

    fn depth(&self, rel: &str) -> Result<Vec<DepthFrame>, PipelineError> {
        let p = self.existing(rel)?;
        read_depth_sequence(&p).map_err(|e| PipelineError::Input {
            module: "depth_calibration",
            path: p.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn generated_depth(&self) -> Result<Vec<DepthFrame>, PipelineError> {
        self.depth(&self.manifest.depth_generated)
    }

    pub fn sensor_depth(&self) -> Result<DepthFrame, PipelineError> {
        let rel = &self.manifest.depth_sensor;
        self.depth(rel)?
            .into_iter()
            .next()
            .ok_or_else(|| PipelineError::Input {
                module: "depth_calibration",
                path: self.path(rel).display().to_string(),
                message: "sensor depth has no frames".into(),
            })
    }

    pub fn tracks(&self) -> Result<FlowField, PipelineError> {
        let p = self.existing(&self.manifest.tracks)?;
        let text = std::fs::read_to_string(&p).map_err(|_| missing(&p))?;
        parse_tracks(&text).map_err(|message| PipelineError::Input {
            module: "se3_geometry",
            path: p.display().to_string(),
            message,
        })
    }

    fn masks(&self, list: &[String], module: &'static str) -> Result<MaskSequence, PipelineError> {
        let masks = list
            .iter()
            .map(|rel| {
                let p = self.existing(rel)?;
                read_pgm_mask(&p).map_err(|e| PipelineError::Input {
                    module,
                    path: p.display().to_string(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        MaskSequence::new(masks).map_err(|e| PipelineError::Input {
            module,
            path: self.dir.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn object_masks(&self) -> Result<MaskSequence, PipelineError> {
        self.masks(&self.manifest.object_masks, "hand_grounding")
    }

    /// Hand masks; a missing list is reported against the manifest.
    pub fn hand_masks(&self) -> Result<MaskSequence, PipelineError> {
        if self.manifest.hand_masks.is_empty() {
            return Err(PipelineError::MissingInput {
                path: format!("{} (hand_masks)", self.path(MANIFEST_NAME).display()),
            });
        }
        self.masks(&self.manifest.hand_masks, "hand_grounding")
    }

    pub fn has_landmarks(&self) -> bool {
        self.manifest
            .landmarks
            .as_deref()
            .is_some_and(|rel| self.path(rel).exists())
    }

    pub fn landmarks(&self) -> Result<HandTrajectory, PipelineError> {
        let rel =
            self.manifest
                .landmarks
                .as_deref()
                .ok_or_else(|| PipelineError::MissingInput {
                    path: format!("{} (landmarks)", self.path(MANIFEST_NAME).display()),
                })?;
        let p = self.existing(rel)?;
        let text = std::fs::read_to_string(&p).map_err(|_| missing(&p))?;
        parse_hand_landmarks(&text).map_err(|e| PipelineError::Input {
            module: "hand_grounding",
            path: p.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn grasps(&self) -> Result<Vec<GraspCandidate>, PipelineError> {
        let p = self.existing(&self.manifest.grasps)?;
        let text = std::fs::read_to_string(&p).map_err(|_| missing(&p))?;
        parse_grasp_candidates(&text).map_err(|e| PipelineError::Input {
            module: "grasp_selection",
            path: p.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub const TRACKS_HEADER: &str = "# object-tracks v1";

/// Tracks file: header, then `keypoint frame x y z valid` per line with the
/// point in generated-depth units (camera frame).
pub fn tracks_text(flow: &FlowField) -> String {
    let mut out = format!(
        "{TRACKS_HEADER}\n# keypoints={} frames={}\n",
        flow.keypoints(),
        flow.frames()
    );
    for k in 0..flow.keypoints() {
        for t in 0..flow.frames() {
            let p = flow.position(k, t);
            out.push_str(&format!(
                "{k} {t} {} {} {} {}\n",
                p.x,
                p.y,
                p.z,
                u8::from(flow.is_valid(k, t))
            ));
        }
    }
    out
}

pub fn parse_tracks(text: &str) -> Result<FlowField, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRACKS_HEADER) {
        return Err(format!("missing `{TRACKS_HEADER}` header"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(format!(
                "line {}: expected 6 fields, found {}",
                n + 2,
                f.len()
            ));
        }
        let bad = |e: &dyn std::fmt::Display| format!("line {}: {e}", n + 2);
        let k: usize = f[0].parse().map_err(|e| bad(&e))?;
        let t: usize = f[1].parse().map_err(|e| bad(&e))?;
        let xyz: Vec<f64> = f[2..5]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(&e))?;
        let valid = match f[5] {
            "1" => true,
            "0" => false,
            other => return Err(bad(&format!("valid flag `{other}`"))),
        };
        rows.push((k, t, Vec3::new(xyz[0], xyz[1], xyz[2]), valid));
    }
    let keypoints = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let frames = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if keypoints == 0 || frames == 0 {
        return Err("no track samples".into());
    }
    let mut positions = vec![Vec3::zeros(); keypoints * frames];
    let mut valid = vec![false; keypoints * frames];
    let mut seen = vec![false; keypoints * frames];
    for (k, t, p, v) in rows {
        let i = k * frames + t;
        if std::mem::replace(&mut seen[i], true) {
            return Err(format!("duplicate sample for keypoint {k} frame {t}"));
        }
        positions[i] = p;
        valid[i] = v;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(format!(
            "missing sample for keypoint {} frame {}",
            i / frames,
            i % frames
        ));
    }
    FlowField::new(keypoints, frames, positions, valid).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_round_trip() {
        let mut flow = FlowField::from_fn(3, 4, |k, t| {
            Vec3::new(k as f64 * 0.1, t as f64 / 3.0, 0.6 + 1e-12)
        });
        flow.set_valid(1, 2, false);
        let back = parse_tracks(&tracks_text(&flow)).unwrap();
        assert_eq!(back, flow);
        assert!(
            parse_tracks("# object-tracks v1\n0 0 1 2 3 1\n0 1 1 2 3 1\n1 0 1 2 3 1\n").is_err()
        );
        assert!(parse_tracks("0 0 1 2 3 1\n").is_err());
    }
}
