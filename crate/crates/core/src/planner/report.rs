use serde::{Deserialize, Serialize};

use super::{GroundingOutcome, HorizonMode, ObsRef, SearchStepTrace, ValidatedScore, Verification};
use crate::hand::Finger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPhase {
    Planning,
    Executing,
    Verifying,
    Recovering,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// 0 while planning, otherwise the 1-based plan step.
    pub step: usize,
    pub phase: LoopPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttemptKind {
    Initial,
    Grasp,
    NonPrehensile { finger: Finger },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub kind: AttemptKind,
    pub action: String,
    pub observation_before: ObsRef,
    /// Chosen rollout video.
    pub rollout: Option<String>,
    pub scores: Vec<ValidatedScore>,
    pub grounding: Option<GroundingOutcome>,
    pub observation_after: Option<ObsRef>,
    pub verdict: Option<Verification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock milliseconds; only filled when timing is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: String,
    pub track_object: String,
    /// I_target for this step; unchanged across recoveries.
    pub target: Option<ObsRef>,
    pub attempts: Vec<AttemptRecord>,
}

impl StepRecord {
    pub fn recoveries(&self) -> usize {
        self.attempts
            .iter()
            .filter(|a| a.kind != AttemptKind::Initial)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Success,
    StepFailed { step: usize, reason: String },
    PlanningFailed { reason: String },
}

/// Append-only record of a planning and execution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub mode: HorizonMode,
    pub goal: String,
    pub initial_observation: ObsRef,
    /// Actions chosen by tree search (strategic mode only).
    pub plan: Vec<String>,
    pub search: Vec<SearchStepTrace>,
    pub transitions: Vec<Transition>,
    pub steps: Vec<StepRecord>,
    pub status: RunStatus,
}

impl ExecutionReport {
    pub fn new(mode: HorizonMode, goal: &str, initial_observation: &str) -> Self {
        Self {
            mode,
            goal: goal.to_string(),
            initial_observation: initial_observation.to_string(),
            plan: Vec::new(),
            search: Vec::new(),
            transitions: Vec::new(),
            steps: Vec::new(),
            status: RunStatus::Running,
        }
    }

    pub fn phases(&self) -> Vec<LoopPhase> {
        self.transitions.iter().map(|t| t.phase).collect()
    }

    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Success
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub(crate) fn enter(&mut self, step: usize, phase: LoopPhase) {
        log::debug!("step {step}: {phase:?}");
        self.transitions.push(Transition { step, phase });
    }
}
