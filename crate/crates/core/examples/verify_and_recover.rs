//! Closed loop with one failed execution: the verifier catches it, the
//! recovery selector asks for a non-prehensile push with the index finger,
//! and the retry succeeds.

use flowground::planner::scripted::{Scenario, ScriptedRoles};
use flowground::planner::{run_loop, HorizonMode, LoopParams, Roles};

const WORLD: &str = r#"
goal = "close the drawer"

[[propose]]
observation = "o0"
proposals = [{ action = "push drawer", track_object = "drawer" }]

[[execute]]
observation = "o0"
[[execute.calls]]
next = "half-closed"
[[execute.calls]]
next = "closed"

[[execute]]
observation = "half-closed+annotated"
next = "closed"

[[verify]]
observation = "half-closed"
success = false
reason = "drawer stopped halfway"

[[verify]]
observation = "closed"
success = true

[[recover]]
observation = "half-closed"
strategy = "non-prehensile"
recovery_action = "push the drawer front with the index finger"
finger = "index"

[[generate]]
observation = "o0"
finals = ["closed"]
"#;

fn main() {
    let roles = ScriptedRoles::new(Scenario::from_toml(WORLD).unwrap());
    let task = roles.scenario().task();
    let report = run_loop(
        &task,
        HorizonMode::Greedy,
        &Roles::uniform(&roles),
        &LoopParams::default(),
    );
    let phases: Vec<String> = report.phases().iter().map(|p| format!("{p:?}")).collect();
    println!("{}", phases.join(" -> "));
    for step in &report.steps {
        for a in &step.attempts {
            println!(
                "step {}: {:?} `{}` -> {:?}",
                step.step, a.kind, a.action, a.verdict
            );
        }
    }
    println!("{:?}", report.status);
}
