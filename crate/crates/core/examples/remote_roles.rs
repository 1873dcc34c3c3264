//! Serve scripted roles on one end of a socket pair and drive the planner
//! loop through the line-JSON client on the other end, as if the models
//! lived in another process.

use std::os::unix::net::UnixStream;
use std::time::Duration;

use flowground::planner::remote::{serve, RemoteRoles};
use flowground::planner::scripted::{Scenario, ScriptedRoles};
use flowground::planner::{run_loop, HorizonMode, LoopParams, Roles};

const WORLD: &str = r#"
goal = "stack the cubes"

[[propose]]
observation = "o0"
proposals = [{ action = "pick red cube", track_object = "red cube" }]

[[propose]]
observation = "o1"
proposals = [{ action = "place on blue cube", track_object = "red cube" }]

[[execute]]
observation = "o0"
next = "o1"

[[execute]]
observation = "o1"
next = "o2"

[[verify]]
observation = "o1"
success = true

[[verify]]
observation = "o2"
success = true
"#;

fn main() -> std::io::Result<()> {
    let (client, server) = UnixStream::pair()?;
    let closer = client.try_clone()?;
    let worker = std::thread::spawn(move || {
        let scripted = ScriptedRoles::new(Scenario::from_toml(WORLD).unwrap());
        let reader = server.try_clone().unwrap();
        serve(reader, server, &Roles::uniform(&scripted))
    });

    let remote = RemoteRoles::from_streams(client.try_clone()?, client, Duration::from_secs(5));
    let task = Scenario::from_toml(WORLD).unwrap().task();
    let report = run_loop(
        &task,
        HorizonMode::Greedy,
        &Roles::uniform(&remote),
        &LoopParams::default(),
    );
    println!("{:?} after {} steps", report.status, report.steps.len());

    closer.shutdown(std::net::Shutdown::Both)?;
    drop(remote);
    worker.join().expect("server thread")?;
    Ok(())
}
