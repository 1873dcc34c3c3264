use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{AttemptKind, AttemptRecord, LoopPhase, RunStatus, StepRecord};
use super::{
    plan_strategic, validate_rollout_scores, ExecuteRequest, ExecutionReport, GroundingRequest,
    HorizonMode, HorizonSelector, ObsRef, ProposeRequest, RankRequest, RecoveryDecision,
    RecoveryRequest, RecoverySelector, RoleError, Roles, RolloutCandidate, RolloutRequest,
    SearchParams, TaskDescriptor, VerifyRequest,
};
use crate::hand::Finger;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    /// Tree-search settings for strategic mode; `horizon` is the plan length.
    pub search: SearchParams,
    /// Rollouts generated when re-grounding a step against the real
    /// observation.
    pub execution_rollouts: usize,
    pub max_recoveries_per_step: usize,
    /// Step cap for greedy mode.
    pub max_greedy_steps: usize,
    /// Record wall-clock timings in the report (makes it nondeterministic).
    pub record_timings: bool,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            search: SearchParams::default(),
            execution_rollouts: 8,
            max_recoveries_per_step: 2,
            max_greedy_steps: 16,
            record_timings: false,
        }
    }
}

/// Asks the horizon selector for a mode. A failing selector falls back to
/// greedy, which needs no up-front plan.
pub fn select_horizon_mode(task: &TaskDescriptor, selector: &dyn HorizonSelector) -> HorizonMode {
    match selector.select(task) {
        Ok(mode) => mode,
        Err(e) => {
            log::warn!("horizon selection failed ({e}); using greedy mode");
            HorizonMode::Greedy
        }
    }
}

/// A recovery decision together with the rollout request it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub decision: RecoveryDecision,
    pub rollout: RolloutRequest,
}

impl RecoveryPlan {
    pub fn contact_finger(&self) -> Option<Finger> {
        self.rollout.contact_finger
    }
}

/// Picks a recovery strategy after a failed verification.
///
/// Grasp recovery re-enters the normal single-step rollout from the current
/// observation; non-prehensile recovery starts from the annotated
/// observation and carries the contact finger into grounding. Either way the
/// rollout targets the step's original target frame.
pub fn select_recovery(
    req: &RecoveryRequest,
    rollouts: usize,
    selector: &dyn RecoverySelector,
) -> Result<RecoveryPlan, RoleError> {
    let decision = selector.select(req)?;
    let rollout = match &decision {
        RecoveryDecision::Grasp { action } => RolloutRequest {
            step: req.step,
            observation: req.current.clone(),
            action: action.clone(),
            count: rollouts,
            target: Some(req.target.clone()),
            contact_finger: None,
        },
        RecoveryDecision::NonPrehensile {
            action,
            finger,
            annotated_observation,
        } => RolloutRequest {
            step: req.step,
            observation: annotated_observation.clone(),
            action: action.clone(),
            count: rollouts,
            target: Some(req.target.clone()),
            contact_finger: Some(*finger),
        },
    };
    Ok(RecoveryPlan { decision, rollout })
}

struct StepOutcome {
    observation: ObsRef,
    failure: Option<String>,
}

/// Runs the plan-execute-verify-recover loop and returns the full report.
///
/// Failures never panic: planning problems end in `PlanningFailed`, step
/// problems (interface errors or an exhausted recovery budget) in
/// `StepFailed` with everything recorded so far.
pub fn run_loop(
    task: &TaskDescriptor,
    mode: HorizonMode,
    roles: &Roles<'_>,
    params: &LoopParams,
) -> ExecutionReport {
    let mut report = ExecutionReport::new(mode, &task.goal, &task.initial_observation);
    report.enter(0, LoopPhase::Planning);

    let mut plan: Vec<(String, String, Option<String>)> = Vec::new();
    if mode == HorizonMode::Strategic {
        match plan_strategic(&task.initial_observation, &task.goal, &params.search, roles) {
            Ok(outcome) => {
                plan = outcome
                    .best
                    .metadata
                    .iter()
                    .map(|m| (m.action.clone(), m.track_object.clone(), m.context.clone()))
                    .collect();
                report.plan = outcome.best.history.clone();
                report.search = outcome.trace;
            }
            Err(e) => {
                report.status = RunStatus::PlanningFailed {
                    reason: e.to_string(),
                };
                report.enter(0, LoopPhase::Failed);
                return report;
            }
        }
    }

    let mut current = task.initial_observation.clone();
    let mut history: Vec<String> = Vec::new();
    let mut context: Option<String> = None;
    let mut step = 0;
    loop {
        step += 1;
        let next = match mode {
            HorizonMode::Strategic => match plan.get(step - 1) {
                Some(p) => p.clone(),
                None => break,
            },
            HorizonMode::Greedy => {
                if step > params.max_greedy_steps {
                    log::warn!("greedy step cap {} reached", params.max_greedy_steps);
                    break;
                }
                let req = ProposeRequest {
                    step,
                    observation: current.clone(),
                    goal: task.goal.clone(),
                    count: 1,
                    history: history.clone(),
                    remaining: params.max_greedy_steps - step + 1,
                    context: context.clone(),
                };
                match roles.proposer.propose(&req) {
                    Ok(p) => match p.into_iter().next() {
                        Some(p) => (p.action, p.track_object, p.context),
                        None => break,
                    },
                    Err(e) => {
                        fail(&mut report, step, e.to_string());
                        return report;
                    }
                }
            }
        };
        let (action, track_object, step_context) = next;

        report.steps.push(StepRecord {
            step,
            action: action.clone(),
            track_object: track_object.clone(),
            target: None,
            attempts: Vec::new(),
        });
        let outcome = run_step(
            &mut report,
            step,
            &current,
            &action,
            &track_object,
            roles,
            params,
        );
        match outcome.failure {
            Some(reason) => {
                fail(&mut report, step, reason);
                return report;
            }
            None => {
                current = outcome.observation;
                history.push(action);
                if step_context.is_some() {
                    context = step_context;
                }
            }
        }
    }

    report.status = RunStatus::Success;
    report.enter(step - 1, LoopPhase::Done);
    report
}

fn fail(report: &mut ExecutionReport, step: usize, reason: String) {
    log::warn!("step {step} failed: {reason}");
    report.status = RunStatus::StepFailed { step, reason };
    report.enter(step, LoopPhase::Failed);
}

fn run_step(
    report: &mut ExecutionReport,
    step: usize,
    start: &str,
    action: &str,
    track_object: &str,
    roles: &Roles<'_>,
    params: &LoopParams,
) -> StepOutcome {
    let failed = |reason: String| StepOutcome {
        observation: start.to_string(),
        failure: Some(reason),
    };

    let mut observation = start.to_string();
    let mut target: Option<ObsRef> = None;
    let mut kind = AttemptKind::Initial;
    let mut request = RolloutRequest {
        step,
        observation: observation.clone(),
        action: action.to_string(),
        count: params.execution_rollouts,
        target: None,
        contact_finger: None,
    };

    loop {
        report.enter(step, LoopPhase::Executing);
        let clock = params.record_timings.then(Instant::now);
        let mut attempt = AttemptRecord {
            kind: kind.clone(),
            action: request.action.clone(),
            observation_before: observation.clone(),
            rollout: None,
            scores: Vec::new(),
            grounding: None,
            observation_after: None,
            verdict: None,
            error: None,
            timing_ms: None,
        };

        let result = execute_attempt(
            &mut attempt,
            &request,
            track_object,
            target.as_deref(),
            roles,
            params,
        );
        let record = |report: &mut ExecutionReport, mut attempt: AttemptRecord| {
            attempt.timing_ms = clock.map(|c| c.elapsed().as_millis() as u64);
            let rec = report.steps.last_mut().expect("step record exists");
            rec.attempts.push(attempt);
        };
        let (chosen_target, after) = match result {
            Ok(v) => v,
            Err(e) => {
                attempt.error = Some(e.clone());
                record(report, attempt);
                return failed(e);
            }
        };
        if target.is_none() {
            target = Some(chosen_target);
            report.steps.last_mut().expect("step record exists").target = target.clone();
        }
        let target_ref = target.clone().expect("target set");

        report.enter(step, LoopPhase::Verifying);
        let verdict = roles.verifier.verify(&VerifyRequest {
            step,
            start: observation.clone(),
            current: after.clone(),
            target: target_ref.clone(),
        });
        let verdict = match verdict {
            Ok(v) => v,
            Err(e) => {
                attempt.error = Some(e.to_string());
                record(report, attempt);
                return failed(e.to_string());
            }
        };
        attempt.verdict = Some(verdict.clone());
        record(report, attempt);
        observation = after;

        if verdict.success {
            return StepOutcome {
                observation,
                failure: None,
            };
        }
        let used = report.steps.last().map_or(0, StepRecord::recoveries);
        if used >= params.max_recoveries_per_step {
            let why = if verdict.reason.is_empty() {
                "verification failed".to_string()
            } else {
                verdict.reason.clone()
            };
            return failed(format!("{why} after {used} recovery attempts"));
        }

        report.enter(step, LoopPhase::Recovering);
        let rreq = RecoveryRequest {
            step,
            current: observation.clone(),
            target: target_ref,
            failure: verdict.reason.clone(),
        };
        let plan = match select_recovery(&rreq, params.execution_rollouts, roles.recovery) {
            Ok(p) => p,
            Err(e) => return failed(e.to_string()),
        };
        kind = match &plan.decision {
            RecoveryDecision::Grasp { .. } => AttemptKind::Grasp,
            RecoveryDecision::NonPrehensile { finger, .. } => {
                AttemptKind::NonPrehensile { finger: *finger }
            }
        };
        request = plan.rollout;
    }
}

/// Re-ground, ground and execute one attempt. Returns the rollout's final
/// frame and the observation after execution.
fn execute_attempt(
    attempt: &mut AttemptRecord,
    request: &RolloutRequest,
    track_object: &str,
    target: Option<&str>,
    roles: &Roles<'_>,
    params: &LoopParams,
) -> Result<(ObsRef, ObsRef), String> {
    let step = request.step;
    let rollouts = roles
        .generator
        .generate(request)
        .map_err(|e| e.to_string())?;
    let mut candidates = Vec::new();
    for r in rollouts.into_iter().take(request.count.max(1)) {
        let flow_ref = roles
            .generator
            .track_flow(&r.video_ref, track_object)
            .map_err(|e| e.to_string())?;
        candidates.push(RolloutCandidate {
            id: candidates.len(),
            parent: 0,
            action: request.action.clone(),
            track_object: track_object.to_string(),
            context: None,
            video_ref: r.video_ref,
            flow_ref,
            final_frame_ref: r.final_frame_ref,
        });
    }
    if candidates.is_empty() {
        return Err(format!("no rollouts generated for '{}'", request.action));
    }

    let raw = roles
        .ranker
        .rank(&RankRequest {
            step,
            goal: request.action.clone(),
            candidates: candidates.clone(),
            top_n: 1,
        })
        .map_err(|e| e.to_string())?;
    attempt.scores = validate_rollout_scores(&raw);
    let score = |id: usize| {
        attempt
            .scores
            .iter()
            .rev()
            .find(|s| s.score.candidate_id == id)
            .map_or(params.search.s_min, |s| s.score.score)
    };
    let best = candidates
        .iter()
        .max_by(|a, b| score(a.id).total_cmp(&score(b.id)).then(b.id.cmp(&a.id)))
        .expect("non-empty");
    attempt.rollout = Some(best.video_ref.clone());

    let grounding = roles
        .grounder
        .ground(&GroundingRequest {
            step,
            action: request.action.clone(),
            track_object: track_object.to_string(),
            video_ref: best.video_ref.clone(),
            flow_ref: best.flow_ref.clone(),
            final_frame_ref: best.final_frame_ref.clone(),
            contact_finger: request.contact_finger,
        })
        .map_err(|e| e.to_string())?;
    attempt.grounding = Some(grounding.clone());

    let target = target.map_or_else(|| best.final_frame_ref.clone(), str::to_string);
    let after = roles
        .environment
        .execute(&ExecuteRequest {
            step,
            observation: attempt.observation_before.clone(),
            action: request.action.clone(),
            target: target.clone(),
            grounding,
        })
        .map_err(|e| e.to_string())?;
    attempt.observation_after = Some(after.clone());
    Ok((target, after))
}
