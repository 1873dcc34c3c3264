//! Table-driven roles read from a TOML scenario file.
//!
//! Each role has a list of entries keyed by an observation id and optionally
//! an action. An entry either gives one response used for every call, or a
//! `calls` list consumed in order (the last one repeats). Any call may set
//! `fail = "message"` to make that call return an interface error.
//! Recovery entries name their action `recovery_action`, since `action` is
//! always the entry filter.
//!
//! What `observation` matches per role:
//!
//! | role       | key                                   | default when no entry          |
//! |------------|---------------------------------------|--------------------------------|
//! | `propose`  | observation the action starts from    | no proposals                   |
//! | `generate` | observation the rollout starts from   | `count` rollouts `obs|action#k`, or ending at the target |
//! | `rank`     | candidate's final frame               | candidate left unranked        |
//! | `ground`   | chosen rollout's final frame          | object flow                    |
//! | `execute`  | observation before execution          | the target frame               |
//! | `verify`   | observation after execution           | success iff it equals the target |
//! | `recover`  | observation after the failed attempt  | grasp, re-issuing the action   |
//!
//! ```toml
//! goal = "put the cup on the plate"
//! initial_observation = "o0"
//! mode = "greedy"
//!
//! [[propose]]
//! observation = "o0"
//! proposals = [{ action = "pick cup", track_object = "cup" }]
//!
//! [[execute]]
//! observation = "o0"
//! [[execute.calls]]
//! fail = "gripper timeout"
//! [[execute.calls]]
//! next = "o1"
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ActionProposer, Environment, ExecuteRequest, Grounder, GroundingOutcome, GroundingRequest,
    HorizonMode, HorizonSelector, ObsRef, Proposal, ProposeRequest, RankRequest, RecoveryDecision,
    RecoveryRequest, RecoverySelector, Role, RoleError, Rollout, RolloutGenerator, RolloutRanker,
    RolloutRequest, RolloutScore, TaskDescriptor, Verification, Verifier, VerifyRequest,
};
use crate::flow::FlowSource;
use crate::hand::Finger;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Call<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
    #[serde(flatten)]
    pub response: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Entry<T> {
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<Call<T>>,
    #[serde(flatten)]
    pub single: Call<T>,
}

impl<T> Entry<T> {
    pub fn new(observation: impl Into<String>, response: T) -> Self {
        Self {
            observation: observation.into(),
            action: None,
            calls: Vec::new(),
            single: Call {
                fail: None,
                response,
            },
        }
    }

    pub fn with_calls(observation: impl Into<String>, calls: Vec<Call<T>>) -> Self
    where
        T: Default,
    {
        Self {
            observation: observation.into(),
            action: None,
            calls,
            single: Call::default(),
        }
    }

    fn call(&self, n: usize) -> &Call<T> {
        match self.calls.len() {
            0 => &self.single,
            len => &self.calls[n.min(len - 1)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposeResponse {
    #[serde(default)]
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    /// Final frame of each rollout.
    #[serde(default)]
    pub finals: Vec<ObsRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub success: bool,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<FlowSource>,
    #[serde(default)]
    pub poses: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecuteResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<ObsRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    #[serde(default)]
    pub success: bool,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Grasp,
    NonPrehensile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoverResponse {
    #[serde(default)]
    pub strategy: Strategy,
    /// `recovery_action` in scenario files; `action` is the entry filter.
    #[serde(
        default,
        rename = "recovery_action",
        skip_serializing_if = "Option::is_none"
    )]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger: Option<Finger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated_observation: Option<ObsRef>,
}

/// A declarative world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub goal: String,
    #[serde(default = "default_initial")]
    pub initial_observation: ObsRef,
    /// Answer of the horizon selector.
    #[serde(default)]
    pub mode: HorizonMode,
    /// Plan length for strategic mode; overrides the configured value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub propose: Vec<Entry<ProposeResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generate: Vec<Entry<GenerateResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rank: Vec<Entry<RankResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ground: Vec<Entry<GroundResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub execute: Vec<Entry<ExecuteResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<Entry<VerifyResponse>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recover: Vec<Entry<RecoverResponse>>,
}

fn default_initial() -> ObsRef {
    "o0".to_string()
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            goal: String::new(),
            initial_observation: default_initial(),
            mode: HorizonMode::default(),
            horizon: None,
            propose: Vec::new(),
            generate: Vec::new(),
            rank: Vec::new(),
            ground: Vec::new(),
            execute: Vec::new(),
            verify: Vec::new(),
            recover: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: "<scenario>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn task(&self) -> TaskDescriptor {
        TaskDescriptor {
            goal: self.goal.clone(),
            initial_observation: self.initial_observation.clone(),
        }
    }
}

/// Every role answered from a [`Scenario`].
#[derive(Debug)]
pub struct ScriptedRoles {
    scenario: Scenario,
    counters: Mutex<HashMap<(Role, usize), usize>>,
    log: Mutex<Vec<(Role, String)>>,
}

impl ScriptedRoles {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            counters: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Every request received so far, as `(role, JSON payload)`.
    pub fn call_log(&self) -> Vec<(Role, String)> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn calls_to(&self, role: Role) -> Vec<serde_json::Value> {
        self.call_log()
            .into_iter()
            .filter(|(r, _)| *r == role)
            .map(|(_, j)| serde_json::from_str(&j).expect("logged json"))
            .collect()
    }

    fn record<R: Serialize>(&self, role: Role, req: &R) {
        let json = serde_json::to_string(req).expect("request serializes");
        self.log.lock().expect("log lock").push((role, json));
    }

    /// Next scripted response for `observation`/`action`, if any entry
    /// matches.
    fn lookup<T: Clone + DeserializeOwned>(
        &self,
        role: Role,
        entries: &[Entry<T>],
        observation: &str,
        action: Option<&str>,
    ) -> Result<Option<T>, RoleError> {
        let found = entries.iter().enumerate().find(|(_, e)| {
            e.observation == observation
                && match (&e.action, action) {
                    (None, _) => true,
                    (Some(a), Some(b)) => a == b,
                    (Some(_), None) => false,
                }
        });
        let Some((idx, entry)) = found else {
            return Ok(None);
        };
        let n = {
            let mut counters = self.counters.lock().expect("counter lock");
            let c = counters.entry((role, idx)).or_insert(0);
            *c += 1;
            *c - 1
        };
        let call = entry.call(n);
        match &call.fail {
            Some(msg) => Err(RoleError::new(role, msg.clone())),
            None => Ok(Some(call.response.clone())),
        }
    }
}

impl ActionProposer for ScriptedRoles {
    fn propose(&self, req: &ProposeRequest) -> Result<Vec<Proposal>, RoleError> {
        self.record(Role::Propose, req);
        let r = self.lookup(
            Role::Propose,
            &self.scenario.propose,
            &req.observation,
            None,
        )?;
        Ok(r.map(|r| r.proposals).unwrap_or_default())
    }
}

impl RolloutGenerator for ScriptedRoles {
    fn generate(&self, req: &RolloutRequest) -> Result<Vec<Rollout>, RoleError> {
        self.record(Role::Generate, req);
        let r = self.lookup(
            Role::Generate,
            &self.scenario.generate,
            &req.observation,
            Some(&req.action),
        )?;
        let finals: Vec<ObsRef> = match (r, &req.target) {
            (Some(r), _) => r.finals,
            (None, Some(target)) => vec![target.clone(); req.count],
            (None, None) => (0..req.count)
                .map(|k| format!("{}|{}#{k}", req.observation, req.action))
                .collect(),
        };
        Ok(finals
            .into_iter()
            .enumerate()
            .map(|(k, f)| Rollout {
                video_ref: format!("video:s{}:{}|{}#{k}", req.step, req.observation, req.action),
                final_frame_ref: f,
            })
            .collect())
    }
}

impl RolloutRanker for ScriptedRoles {
    fn rank(&self, req: &RankRequest) -> Result<Vec<RolloutScore>, RoleError> {
        self.record(Role::Rank, req);
        let mut out = Vec::new();
        for c in &req.candidates {
            if let Some(r) = self.lookup(
                Role::Rank,
                &self.scenario.rank,
                &c.final_frame_ref,
                Some(&c.action),
            )? {
                out.push(RolloutScore {
                    candidate_id: c.id,
                    success: r.success,
                    score: r.score,
                    reason: r.reason,
                });
            }
        }
        Ok(out)
    }
}

impl Grounder for ScriptedRoles {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingOutcome, RoleError> {
        self.record(Role::Ground, req);
        let r = self.lookup(
            Role::Ground,
            &self.scenario.ground,
            &req.final_frame_ref,
            Some(&req.action),
        )?;
        let r = r.unwrap_or_default();
        Ok(GroundingOutcome {
            source: r.source.unwrap_or(if req.contact_finger.is_some() {
                FlowSource::HandFlow
            } else {
                FlowSource::ObjectFlow
            }),
            poses: r.poses,
            trajectory_ref: r.trajectory,
        })
    }
}

impl Environment for ScriptedRoles {
    fn execute(&self, req: &ExecuteRequest) -> Result<ObsRef, RoleError> {
        self.record(Role::Execute, req);
        let r = self.lookup(
            Role::Execute,
            &self.scenario.execute,
            &req.observation,
            Some(&req.action),
        )?;
        Ok(r.and_then(|r| r.next).unwrap_or_else(|| req.target.clone()))
    }
}

impl Verifier for ScriptedRoles {
    fn verify(&self, req: &VerifyRequest) -> Result<Verification, RoleError> {
        self.record(Role::Verify, req);
        let r = self.lookup(Role::Verify, &self.scenario.verify, &req.current, None)?;
        Ok(match r {
            Some(r) => Verification {
                success: r.success,
                reason: r.reason,
            },
            None if req.current == req.target => Verification {
                success: true,
                reason: String::new(),
            },
            None => Verification {
                success: false,
                reason: format!("observed {} instead of {}", req.current, req.target),
            },
        })
    }
}

impl RecoverySelector for ScriptedRoles {
    fn select(&self, req: &RecoveryRequest) -> Result<RecoveryDecision, RoleError> {
        self.record(Role::Recover, req);
        let r = self
            .lookup(Role::Recover, &self.scenario.recover, &req.current, None)?
            .unwrap_or_default();
        let action = r
            .action
            .unwrap_or_else(|| format!("recover towards {}", req.target));
        Ok(match r.strategy {
            Strategy::Grasp => RecoveryDecision::Grasp { action },
            Strategy::NonPrehensile => RecoveryDecision::NonPrehensile {
                action,
                finger: r.finger.unwrap_or(Finger::Index),
                annotated_observation: r
                    .annotated_observation
                    .unwrap_or_else(|| format!("{}+annotated", req.current)),
            },
        })
    }
}

impl HorizonSelector for ScriptedRoles {
    fn select(&self, task: &TaskDescriptor) -> Result<HorizonMode, RoleError> {
        self.record(Role::Horizon, task);
        Ok(self.scenario.mode)
    }
}
