//! Closed-loop planning over pluggable model roles.
//!
//! Every model-backed role (action proposal, rollout generation, rollout
//! ranking, verification, recovery selection, horizon selection) is a trait.
//! The crate ships a scenario-driven scripted implementation
//! ([`scripted::ScriptedRoles`]) and a line-delimited JSON client for roles
//! served by another process ([`remote::RemoteRoles`]).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowSource;
use crate::hand::Finger;

mod executor;
pub mod remote;
mod report;
mod scores;
pub mod scripted;
mod search;

pub use executor::{run_loop, select_horizon_mode, select_recovery, LoopParams, RecoveryPlan};
pub use report::{
    AttemptKind, AttemptRecord, ExecutionReport, LoopPhase, RunStatus, StepRecord, Transition,
};
pub use scores::{validate_rollout_scores, ValidatedScore};
pub use search::{plan_strategic, SearchOutcome, SearchParams, SearchStepTrace};

/// Opaque observation / frame identifier.
pub type ObsRef = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Propose,
    Generate,
    Rank,
    Verify,
    Recover,
    Horizon,
    Execute,
    Ground,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Propose => "propose",
            Role::Generate => "generate",
            Role::Rank => "rank",
            Role::Verify => "verify",
            Role::Recover => "recover",
            Role::Horizon => "horizon",
            Role::Execute => "execute",
            Role::Ground => "ground",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{role} role failed: {message}")]
pub struct RoleError {
    pub role: Role,
    pub message: String,
}

impl RoleError {
    pub fn new(role: Role, message: impl Into<String>) -> Self {
        Self {
            role,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("no rollout candidates at step 1")]
    EmptyCandidateSet,
    #[error("step {step}: {source}")]
    Interface {
        step: usize,
        #[source]
        source: RoleError,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    /// h = 1: one proposal per step, executed immediately.
    #[default]
    Greedy,
    /// h = N: full-plan tree search before execution.
    Strategic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub goal: String,
    pub initial_observation: ObsRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub action: String,
    #[serde(default)]
    pub track_object: String,
    /// Constraint context carried to the next proposal on this branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

/// Per-step metadata stored on a beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMeta {
    pub action: String,
    pub track_object: String,
    pub candidate_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

/// A search node: current frame, action history, per-step metadata, score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanBeam {
    pub observation: ObsRef,
    pub history: Vec<String>,
    pub metadata: Vec<StepMeta>,
    pub score: f64,
}

impl PlanBeam {
    pub fn root(observation: impl Into<ObsRef>) -> Self {
        Self {
            observation: observation.into(),
            history: Vec::new(),
            metadata: Vec::new(),
            score: 0.0,
        }
    }

    /// Most recent carried context, if any.
    pub fn context(&self) -> Option<&str> {
        self.metadata
            .iter()
            .rev()
            .find_map(|m| m.context.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub video_ref: String,
    pub final_frame_ref: ObsRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutCandidate {
    pub id: usize,
    /// Index of the parent beam within the current step.
    pub parent: usize,
    pub action: String,
    pub track_object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub video_ref: String,
    pub flow_ref: String,
    pub final_frame_ref: ObsRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutScore {
    pub candidate_id: usize,
    pub success: bool,
    pub score: f64,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub step: usize,
    pub observation: ObsRef,
    pub goal: String,
    pub count: usize,
    pub history: Vec<String>,
    pub remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRequest {
    pub step: usize,
    pub observation: ObsRef,
    pub action: String,
    pub count: usize,
    /// Required last frame, set for recovery rollouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ObsRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_finger: Option<Finger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub step: usize,
    pub goal: String,
    pub candidates: Vec<RolloutCandidate>,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub step: usize,
    pub start: ObsRef,
    pub current: ObsRef,
    pub target: ObsRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub success: bool,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRequest {
    pub step: usize,
    pub current: ObsRef,
    pub target: ObsRef,
    pub failure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum RecoveryDecision {
    Grasp {
        action: String,
    },
    NonPrehensile {
        action: String,
        finger: Finger,
        annotated_observation: ObsRef,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRequest {
    pub step: usize,
    pub action: String,
    pub track_object: String,
    pub video_ref: String,
    pub flow_ref: String,
    pub final_frame_ref: ObsRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_finger: Option<Finger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingOutcome {
    pub source: FlowSource,
    pub poses: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteRequest {
    pub step: usize,
    pub observation: ObsRef,
    pub action: String,
    pub target: ObsRef,
    pub grounding: GroundingOutcome,
}

pub trait ActionProposer: Send + Sync {
    fn propose(&self, req: &ProposeRequest) -> Result<Vec<Proposal>, RoleError>;
}

pub trait RolloutGenerator: Send + Sync {
    fn generate(&self, req: &RolloutRequest) -> Result<Vec<Rollout>, RoleError>;

    /// Reference to the object flow tracked in `video_ref`.
    fn track_flow(&self, video_ref: &str, track_object: &str) -> Result<String, RoleError> {
        Ok(format!("{video_ref}@flow:{track_object}"))
    }
}

pub trait RolloutRanker: Send + Sync {
    fn rank(&self, req: &RankRequest) -> Result<Vec<RolloutScore>, RoleError>;
}

pub trait Verifier: Send + Sync {
    fn verify(&self, req: &VerifyRequest) -> Result<Verification, RoleError>;
}

pub trait RecoverySelector: Send + Sync {
    fn select(&self, req: &RecoveryRequest) -> Result<RecoveryDecision, RoleError>;
}

pub trait HorizonSelector: Send + Sync {
    fn select(&self, task: &TaskDescriptor) -> Result<HorizonMode, RoleError>;
}

/// Turns a chosen rollout into an executable trajectory.
pub trait Grounder: Send + Sync {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingOutcome, RoleError>;
}

/// Executes a grounded step and returns the next real observation.
pub trait Environment: Send + Sync {
    fn execute(&self, req: &ExecuteRequest) -> Result<ObsRef, RoleError>;
}

/// The full set of roles the loop talks to.
#[derive(Clone, Copy)]
pub struct Roles<'a> {
    pub proposer: &'a dyn ActionProposer,
    pub generator: &'a dyn RolloutGenerator,
    pub ranker: &'a dyn RolloutRanker,
    pub verifier: &'a dyn Verifier,
    pub recovery: &'a dyn RecoverySelector,
    pub horizon: &'a dyn HorizonSelector,
    pub grounder: &'a dyn Grounder,
    pub environment: &'a dyn Environment,
}

impl<'a> Roles<'a> {
    /// All roles served by one implementation.
    pub fn uniform<T>(imp: &'a T) -> Self
    where
        T: ActionProposer
            + RolloutGenerator
            + RolloutRanker
            + Verifier
            + RecoverySelector
            + HorizonSelector
            + Grounder
            + Environment,
    {
        Self {
            proposer: imp,
            generator: imp,
            ranker: imp,
            verifier: imp,
            recovery: imp,
            horizon: imp,
            grounder: imp,
            environment: imp,
        }
    }
}
