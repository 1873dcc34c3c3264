use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use flowground::flow::{hand_flow_to_ee, hand_flow_to_ee_with_tool, object_flow_to_ee};
use flowground::hand::{Finger, GroundingMode};
use flowground::pipeline::synth::{generate_synthetic_bundle, SynthSpec};
use flowground::pipeline::{
    calibrate_bundle_depth, emit_trajectory, ground_bundle, ground_hand_flow, ground_object_flow,
    resolve_config, run_pipeline, select_grasp, Bundle, PipelineConfig, PipelineError, RunOptions,
};
use flowground::planner::remote::RemoteRoles;
use flowground::planner::scripted::{Scenario, ScriptedRoles};
use flowground::planner::{run_loop, select_horizon_mode, HorizonMode, Roles, RunStatus};

#[derive(Parser)]
#[command(
    name = "flowground",
    version,
    about = "Ground generated videos into robot trajectories"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML). Defaults to the bundle's own config, if any.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set flow.theta_max_deg=30`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the JSON result to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Strategic,
}

impl From<Mode> for HorizonMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Greedy => HorizonMode::Greedy,
            Mode::Strategic => HorizonMode::Strategic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PickAndPlace,
    SharpTurn,
}

#[derive(Subcommand)]
enum Verb {
    /// Fit the generated-to-metric depth model of a bundle.
    CalibrateDepth {
        #[arg(long)]
        bundle: PathBuf,
        /// Write the calibrated metric depth sequence here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Object-flow motions and the trajectory they give with the best grasp.
    GroundObject {
        #[arg(long)]
        bundle: PathBuf,
        /// Trajectory file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrated hand flow and the trajectory it gives.
    GroundHand {
        #[arg(long)]
        bundle: PathBuf,
        /// Non-prehensile contact finger; grasp mode when omitted.
        #[arg(long)]
        finger: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter and rank the bundle's grasp candidates.
    RankGrasps {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Run the planner loop on a scripted scenario or remote roles.
    Plan {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Command serving the roles over stdin/stdout, e.g. `--remote "python roles.py"`.
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Full pipeline on a bundle; writes trajectory.txt and report.json.
    Run {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Generate a synthetic bundle with ground truth.
    Synth {
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::PickAndPlace)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Output {
    json: serde_json::Value,
    text: Vec<String>,
    /// 0, or 4 when planning failed.
    code: u8,
}

impl Output {
    fn new(json: serde_json::Value, text: Vec<String>) -> Self {
        Self {
            json,
            text,
            code: 0,
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn parse_finger(name: &str) -> Result<Finger, PipelineError> {
    Finger::ALL
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| PipelineError::Config {
            path: "--finger".into(),
            message: format!("unknown finger `{name}`"),
        })
}

fn open(common: &Common, dir: &Path) -> Result<(Bundle, PipelineConfig), PipelineError> {
    let bundle = Bundle::open(dir)?;
    let cfg = resolve_config(
        &bundle,
        common.config.as_deref(),
        &common.overrides,
        common.seed,
    )?;
    Ok((bundle, cfg))
}

fn pose_rows(poses: &[flowground::se3::RigidTransform]) -> serde_json::Value {
    poses.iter().map(|p| p.to_row_major().to_vec()).collect()
}

fn execute(cli: &Cli) -> Result<Output, PipelineError> {
    let common = &cli.common;
    match &cli.verb {
        Verb::CalibrateDepth { bundle, out } => {
            let (bundle, cfg) = open(common, bundle)?;
            let depth = calibrate_bundle_depth(&bundle, &cfg)?;
            if let Some(out) = out {
                flowground::depth::write_depth_sequence(out, &depth.metric).map_err(|e| {
                    PipelineError::Stage {
                        module: "depth_calibration",
                        path: Some(out.display().to_string()),
                        message: e.to_string(),
                    }
                })?;
            }
            let m = depth.model;
            Ok(Output::new(
                json!({"scale": m.scale, "shift": m.shift, "inlier_count": m.inlier_count,
                       "candidate_count": m.candidate_count, "inlier_ratio": m.inlier_ratio}),
                vec![
                    format!("scale {}", m.scale),
                    format!("shift {}", m.shift),
                    format!(
                        "inliers {}/{} ({:.3})",
                        m.inlier_count, m.candidate_count, m.inlier_ratio
                    ),
                ],
            ))
        }
        Verb::GroundObject { bundle, out } => {
            let (bundle, cfg) = open(common, bundle)?;
            let depth = calibrate_bundle_depth(&bundle, &cfg)?;
            let object = ground_object_flow(&bundle, &cfg, &depth)?;
            let grasp = select_grasp(&bundle, &cfg, &depth, &object, None)?;
            let plan = object_flow_to_ee(&object.motions_robot, &grasp.ranked[0].candidate);
            if let Some(out) = out {
                emit_trajectory(&plan, out)?;
            }
            let deg = object.max_rotation.to_degrees();
            let mut text = vec![
                format!(
                    "{} motions, max rotation {deg:.4} deg",
                    object.motions_robot.len()
                ),
                format!("grasp candidate {}", grasp.ranked[0].index),
            ];
            if object.switch_to_hand {
                text.push(format!(
                    "warning: rotation exceeds {} deg, hand flow is preferred",
                    cfg.flow.theta_max_deg
                ));
            }
            Ok(Output::new(
                json!({"max_rotation_deg": deg, "switch_to_hand": object.switch_to_hand,
                       "grasp": grasp.ranked[0].index, "motions": pose_rows(&object.motions_robot),
                       "trajectory": pose_rows(&plan.ee_trajectory)}),
                text,
            ))
        }
        Verb::GroundHand {
            bundle,
            finger,
            out,
        } => {
            let (bundle, cfg) = open(common, bundle)?;
            let mode = match finger {
                Some(name) => GroundingMode::NonPrehensile {
                    finger: parse_finger(name)?,
                },
                None => GroundingMode::Grasp,
            };
            let depth = calibrate_bundle_depth(&bundle, &cfg)?;
            let hand = ground_hand_flow(&bundle, &cfg, &depth, mode)?;
            let object = ground_object_flow(&bundle, &cfg, &depth)?;
            let plan = match select_grasp(&bundle, &cfg, &depth, &object, Some(&hand)) {
                Ok(g) => hand_flow_to_ee(&hand.poses_robot, &g.ranked[0].candidate),
                Err(e) => {
                    log::warn!("{e}; using the tool offset");
                    hand_flow_to_ee_with_tool(&hand.poses_robot, &cfg.tool.transform())
                }
            }
            .expect("calibrated interval is non-empty");
            if let Some(out) = out {
                emit_trajectory(&plan, out)?;
            }
            let i = &hand.calibration.interval;
            Ok(Output::new(
                json!({"t_start": i.t_start, "t_end": i.t_end, "contact_finger": i.contact_finger,
                       "s_start": i.s_start, "s_end": i.s_end, "t_corr": i.t_corr,
                       "window_found": hand.calibration.correction.window_found,
                       "trajectory": pose_rows(&plan.ee_trajectory)}),
                vec![
                    format!(
                        "contact [{}, {}] with {}",
                        i.t_start,
                        i.t_end,
                        i.contact_finger.name()
                    ),
                    format!("scale {} -> {}", i.s_start, i.s_end),
                    format!("drift ramp from frame {}", i.t_corr),
                ],
            ))
        }
        Verb::RankGrasps { bundle } => {
            let (bundle, cfg) = open(common, bundle)?;
            let g = ground_bundle(&bundle, &cfg)?;
            let summary = g.summary.grasp.ok_or_else(|| PipelineError::Stage {
                module: "grasp_selection",
                path: None,
                message: g.summary.grasp_failure.unwrap_or_default(),
            })?;
            let text = summary
                .ranked
                .iter()
                .map(|r| {
                    format!(
                        "{} conf {:.3} support {:.4} total {:.4}",
                        r.index, r.confidence, r.support, r.total
                    )
                })
                .collect();
            Ok(Output::new(to_json(&summary), text))
        }
        Verb::Plan {
            scenario,
            mode,
            remote,
            timeout_ms,
        } => {
            let cfg = match &common.config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            }
            .with_overrides(&common.overrides)?;
            let scenario = match scenario {
                Some(p) => Scenario::load(p)?,
                None if remote.is_some() => Scenario::default(),
                None => {
                    return Err(PipelineError::MissingInput {
                        path: "--scenario".into(),
                    })
                }
            };
            let task = scenario.task();
            let horizon = scenario.horizon;
            let scripted;
            let remote_roles;
            let roles = match remote {
                Some(cmd) => {
                    let mut parts = cmd.split_whitespace().map(str::to_string);
                    let program = parts.next().ok_or_else(|| PipelineError::MissingInput {
                        path: "--remote".into(),
                    })?;
                    let args: Vec<String> = parts.collect();
                    remote_roles =
                        RemoteRoles::spawn(&program, &args, Duration::from_millis(*timeout_ms))
                            .map_err(|source| PipelineError::Io {
                                path: program,
                                source,
                            })?;
                    Roles::uniform(&remote_roles)
                }
                None => {
                    scripted = ScriptedRoles::new(scenario);
                    Roles::uniform(&scripted)
                }
            };
            let mode = mode
                .map(HorizonMode::from)
                .unwrap_or_else(|| select_horizon_mode(&task, roles.horizon));
            let report = run_loop(&task, mode, &roles, &cfg.loop_params(horizon));
            let mut out = Output::new(to_json(&report), status_lines(&report.status));
            out.code = if report.succeeded() { 0 } else { 4 };
            Ok(out)
        }
        Verb::Run { bundle, out, mode } => {
            let opts = RunOptions {
                out_dir: out.clone(),
                mode: mode.map(HorizonMode::from),
                overrides: common.overrides.clone(),
                seed: common.seed,
            };
            let report = run_pipeline(common.config.as_deref(), bundle, &opts)?;
            let mut text = vec![
                format!("flow source {}", report.grounding.flow.source.as_str()),
                format!(
                    "{} poses -> {}",
                    report.grounding.poses,
                    out.join(&report.trajectory).display()
                ),
            ];
            text.extend(status_lines(&report.execution.status));
            let mut o = Output::new(to_json(&report), text);
            o.code = if report.succeeded() { 0 } else { 4 };
            Ok(o)
        }
        Verb::Synth { spec, preset, out } => {
            let spec = match spec {
                Some(p) => SynthSpec::load(p)?,
                None => match preset {
                    Preset::PickAndPlace => SynthSpec::pick_and_place(),
                    Preset::SharpTurn => SynthSpec::sharp_turn(),
                },
            };
            let b = generate_synthetic_bundle(&spec, out, common.seed.unwrap_or(0))?;
            Ok(Output::new(
                json!({"bundle": out, "frames": spec.frames(), "best_grasp": b.best_grasp}),
                vec![format!("{} frames -> {}", spec.frames(), out.display())],
            ))
        }
    }
}

fn status_lines(status: &RunStatus) -> Vec<String> {
    vec![match status {
        RunStatus::Success => "status success".to_string(),
        RunStatus::Running => "status running".to_string(),
        RunStatus::StepFailed { step, reason } => format!("status failed at step {step}: {reason}"),
        RunStatus::PlanningFailed { reason } => format!("status planning failed: {reason}"),
    }]
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(out) => {
            let body = serde_json::to_string_pretty(&out.json).expect("json");
            if let Some(path) = &cli.common.report {
                if let Err(e) = std::fs::write(path, format!("{body}\n")) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            }
            match cli.common.format {
                Format::Machine => println!("{body}"),
                Format::Text => out.text.iter().for_each(|l| println!("{l}")),
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            match cli.common.format {
                Format::Machine => println!(
                    "{}",
                    json!({"error": e.to_string(), "exit_code": e.exit_code()})
                ),
                Format::Text => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
