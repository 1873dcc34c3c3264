//! Calibrate a scale-ambiguous hand track against metric depth and turn it
//! into end-effector poses. The input is a generated scene whose object
//! turns by 60 degrees in one frame, so object flow is unreliable.

use flowground::hand::GroundingMode;
use flowground::pipeline::synth::{generate_synthetic_bundle, SynthSpec};
use flowground::pipeline::{
    calibrate_bundle_depth, ground_hand_flow, ground_object_flow, Bundle, PipelineConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec::sharp_turn();
    generate_synthetic_bundle(&spec, dir.path(), 0)?;

    let bundle = Bundle::open(dir.path())?;
    let cfg = PipelineConfig::load(&dir.path().join("config.toml"))?;
    let depth = calibrate_bundle_depth(&bundle, &cfg)?;
    let object = ground_object_flow(&bundle, &cfg, &depth)?;
    println!(
        "largest object rotation {:.1} deg, switch to hand: {}",
        object.max_rotation.to_degrees(),
        object.switch_to_hand
    );

    let hand = ground_hand_flow(&bundle, &cfg, &depth, GroundingMode::Grasp)?;
    let i = &hand.calibration.interval;
    println!(
        "contact frames {}..={} with the {} finger",
        i.t_start,
        i.t_end,
        i.contact_finger.name()
    );
    println!(
        "scale at contact {:.4}, at release {:.4} (landmarks were shrunk by {})",
        i.s_start, i.s_end, spec.hand.scale
    );
    for (t, pose) in (i.t_start..).zip(&hand.poses_robot) {
        let p = pose.translation;
        println!(
            "frame {t:>2}: tip at ({:.4}, {:.4}, {:.4}) m",
            p.x, p.y, p.z
        );
    }
    Ok(())
}
