//! Generate a pick-and-place scene, run the whole pipeline on it and compare
//! the emitted trajectory with the ground truth the generator wrote.

use flowground::pipeline::synth::{generate_synthetic_bundle, SynthSpec};
use flowground::pipeline::{read_trajectory, run_pipeline, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let bundle = dir.path().join("scene");
    let synth = generate_synthetic_bundle(&SynthSpec::pick_and_place(), &bundle, 42)?;

    let opts = RunOptions {
        out_dir: dir.path().join("out"),
        ..RunOptions::default()
    };
    let report = run_pipeline(None, &bundle, &opts)?;
    let g = &report.grounding;
    println!(
        "depth model: scale {:.6} shift {:.6}",
        g.depth.scale, g.depth.shift
    );
    println!(
        "flow source: {} (max rotation {:.2} deg)",
        g.flow.source.as_str(),
        g.flow.max_rotation_deg
    );
    if let Some(grasp) = &g.grasp {
        println!(
            "grasp ranking: {:?}",
            grasp.ranked.iter().map(|r| r.index).collect::<Vec<_>>()
        );
    }

    let emitted = read_trajectory(&opts.out_dir.join(&report.trajectory))?;
    let worst = emitted
        .iter()
        .zip(&synth.ground_truth)
        .map(|(a, b)| a.distance(b))
        .fold((0f64, 0f64), |(t, r), (dt, dr)| (t.max(dt), r.max(dr)));
    println!(
        "{} poses, worst error {:.2e} m / {:.2e} rad",
        emitted.len(),
        worst.0,
        worst.1
    );
    println!("planner: {:?}", report.execution.status);
    Ok(())
}
