use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    validate_rollout_scores, PlanBeam, PlannerError, Proposal, ProposeRequest, RankRequest, Roles,
    RolloutCandidate, RolloutRequest, StepMeta, ValidatedScore,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Plan length H.
    pub horizon: usize,
    /// Beams kept after each step (N_c).
    pub beam_width: usize,
    /// Actions proposed per beam.
    pub actions_per_beam: usize,
    /// Rollouts generated per action (K).
    pub rollouts_per_action: usize,
    /// Score of candidates the ranker leaves out.
    pub s_min: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            horizon: 1,
            beam_width: 2,
            actions_per_beam: 2,
            rollouts_per_action: 4,
            s_min: 0.0,
        }
    }
}

/// What happened at one search depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStepTrace {
    pub step: usize,
    pub candidates: Vec<RolloutCandidate>,
    pub scores: Vec<ValidatedScore>,
    /// Candidate ids of the beams kept, best first.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: PlanBeam,
    pub trace: Vec<SearchStepTrace>,
}

/// Beam search for a full action plan.
///
/// Per step every beam proposes actions (with its carried context), each
/// action yields rollouts, all candidates are ranked in one batch and the
/// best `beam_width` children survive. Unranked candidates score `s_min`;
/// ties keep the lower candidate id. Stops early when a step produces no
/// candidates.
pub fn plan_strategic(
    initial_observation: &str,
    goal: &str,
    params: &SearchParams,
    roles: &Roles<'_>,
) -> Result<SearchOutcome, PlannerError> {
    let horizon = params.horizon.max(1);
    let mut beams = vec![PlanBeam::root(initial_observation)];
    let mut trace = Vec::new();

    for step in 1..=horizon {
        let iface = |source| PlannerError::Interface { step, source };

        let mut jobs: Vec<(usize, Proposal)> = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            let req = ProposeRequest {
                step,
                observation: beam.observation.clone(),
                goal: goal.to_string(),
                count: params.actions_per_beam,
                history: beam.history.clone(),
                remaining: horizon - step + 1,
                context: beam.context().map(str::to_string),
            };
            let proposals = roles.proposer.propose(&req).map_err(iface)?;
            jobs.extend(
                proposals
                    .into_iter()
                    .take(params.actions_per_beam)
                    .map(|p| (b, p)),
            );
        }

        let generated: Vec<Vec<(String, String, String)>> = jobs
            .par_iter()
            .map(|(b, p)| {
                let req = RolloutRequest {
                    step,
                    observation: beams[*b].observation.clone(),
                    action: p.action.clone(),
                    count: params.rollouts_per_action,
                    target: None,
                    contact_finger: None,
                };
                let rollouts = roles.generator.generate(&req)?;
                rollouts
                    .into_iter()
                    .take(params.rollouts_per_action)
                    .map(|r| {
                        let flow = roles.generator.track_flow(&r.video_ref, &p.track_object)?;
                        Ok((r.video_ref, flow, r.final_frame_ref))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()
            .map_err(iface)?;

        let mut candidates = Vec::new();
        for ((b, p), rollouts) in jobs.iter().zip(generated) {
            for (video_ref, flow_ref, final_frame_ref) in rollouts {
                candidates.push(RolloutCandidate {
                    id: candidates.len(),
                    parent: *b,
                    action: p.action.clone(),
                    track_object: p.track_object.clone(),
                    context: p.context.clone(),
                    video_ref,
                    flow_ref,
                    final_frame_ref,
                });
            }
        }

        if candidates.is_empty() {
            if step == 1 {
                return Err(PlannerError::EmptyCandidateSet);
            }
            log::info!("no candidates at step {step}, stopping search early");
            break;
        }

        let raw = roles
            .ranker
            .rank(&RankRequest {
                step,
                goal: goal.to_string(),
                candidates: candidates.clone(),
                top_n: params.beam_width,
            })
            .map_err(iface)?;
        let scores = validate_rollout_scores(&raw);
        let mut score_of: HashMap<usize, f64> = HashMap::new();
        for s in &scores {
            if s.score.candidate_id < candidates.len() {
                score_of.insert(s.score.candidate_id, s.score.score);
            }
        }

        let mut children: Vec<(usize, PlanBeam)> = candidates
            .iter()
            .map(|c| {
                let parent = &beams[c.parent];
                let mut child = parent.clone();
                child.observation = c.final_frame_ref.clone();
                child.history.push(c.action.clone());
                child.metadata.push(StepMeta {
                    action: c.action.clone(),
                    track_object: c.track_object.clone(),
                    candidate_id: c.id,
                    context: c.context.clone(),
                });
                child.score = score_of.get(&c.id).copied().unwrap_or(params.s_min);
                (c.id, child)
            })
            .collect();
        children.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
        children.truncate(params.beam_width.max(1));

        trace.push(SearchStepTrace {
            step,
            candidates,
            scores,
            kept: children.iter().map(|c| c.0).collect(),
        });
        beams = children.into_iter().map(|c| c.1).collect();
    }

    // Beams are kept sorted, so the first one is the argmax.
    let best = beams.swap_remove(0);
    Ok(SearchOutcome { best, trace })
}
