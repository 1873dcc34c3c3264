//! Beam search over a scripted world where the greedy first choice is a
//! dead end.

use flowground::planner::scripted::{Scenario, ScriptedRoles};
use flowground::planner::{plan_strategic, Roles, SearchParams};

const WORLD: &str = r#"
goal = "put the block in the bin"

[[propose]]
observation = "o0"
proposals = [{ action = "push block", track_object = "block" }, { action = "pick block", track_object = "block" }]

[[propose]]
observation = "o0|push block#0"
proposals = [{ action = "nudge block" }]

[[propose]]
observation = "o0|pick block#0"
proposals = [{ action = "drop in bin" }]

[[rank]]
observation = "o0|push block#0"
score = 0.9
success = true

[[rank]]
observation = "o0|pick block#0"
score = 0.6
success = true

[[rank]]
observation = "o0|push block#0|nudge block#0"
score = 0.1
success = false

[[rank]]
observation = "o0|pick block#0|drop in bin#0"
score = 0.95
success = true
"#;

fn main() {
    let scenario = Scenario::from_toml(WORLD).unwrap();
    let roles = ScriptedRoles::new(scenario);
    let params = SearchParams {
        horizon: 2,
        beam_width: 2,
        actions_per_beam: 2,
        rollouts_per_action: 1,
        s_min: 0.0,
    };
    let outcome = plan_strategic(
        "o0",
        &roles.scenario().goal,
        &params,
        &Roles::uniform(&roles),
    )
    .unwrap();
    for step in &outcome.trace {
        let kept: Vec<&str> = step
            .kept
            .iter()
            .map(|&id| step.candidates[id].final_frame_ref.as_str())
            .collect();
        println!(
            "step {}: {} candidates, kept {:?}",
            step.step,
            step.candidates.len(),
            kept
        );
    }
    println!(
        "plan {:?} (score {:.2})",
        outcome.best.history, outcome.best.score
    );
}
