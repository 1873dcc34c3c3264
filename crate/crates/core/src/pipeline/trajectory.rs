//! End-effector trajectory files.
//!
//! One header line, then one pose per line: frame index, the 9 rotation
//! entries row-major, and the translation in meters. [`emit_trajectory`]
//! writes every value with 9 significant digits in plain decimal notation;
//! [`parse_trajectory`] accepts any decimal float text.

use std::fmt::Write as _;
use std::path::Path;

use crate::flow::{FlowSource, GroundedPlan};
use crate::se3::{Mat3, RigidTransform, Vec3};

use super::PipelineError;

pub const TRAJECTORY_HEADER: &str = "# ee-trajectory v1";

/// Magnitudes below this print as zero; they are round-off, not signal.
pub const ZERO_FLUSH: f64 = 1e-12;

/// `v` with 9 significant digits, no exponent. Negative zero and values
/// below [`ZERO_FLUSH`] print as zero.
pub fn format_sig9(v: f64) -> String {
    if v.abs() < ZERO_FLUSH {
        return "0.00000000".to_string();
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("exponent in scientific format");
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn trajectory_text(source: FlowSource, poses: &[RigidTransform]) -> String {
    let mut out = format!(
        "{TRAJECTORY_HEADER} source={} poses={}\n",
        source.as_str(),
        poses.len()
    );
    for (i, p) in poses.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in p.to_row_major() {
            out.push(' ');
            out.push_str(&format_sig9(v));
        }
        out.push('\n');
    }
    out
}

pub fn emit_trajectory(plan: &GroundedPlan, path: &Path) -> Result<(), PipelineError> {
    std::fs::write(path, trajectory_text(plan.source, &plan.ee_trajectory)).map_err(|source| {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

/// Poses from trajectory text. Rotations are taken as written (9-digit
/// values are orthonormal only to about 1e-9).
pub fn parse_trajectory(text: &str) -> Result<Vec<RigidTransform>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.starts_with(TRAJECTORY_HEADER) => {}
        _ => return Err(format!("missing `{TRAJECTORY_HEADER}` header")),
    }
    let mut poses = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", n + 2))?;
        if fields.len() != 13 {
            return Err(format!(
                "line {}: expected 13 values, found {}",
                n + 2,
                fields.len()
            ));
        }
        if fields[0] != poses.len() as f64 {
            return Err(format!(
                "line {}: frame index {} out of order",
                n + 2,
                fields[0]
            ));
        }
        poses.push(RigidTransform {
            rotation: Mat3::from_row_slice(&fields[1..10]),
            translation: Vec3::new(fields[10], fields[11], fields[12]),
        });
    }
    Ok(poses)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<RigidTransform>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput {
        path: path.display().to_string(),
    })?;
    parse_trajectory(&text).map_err(|message| PipelineError::Input {
        module: "trajectory",
        path: path.display().to_string(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(-0.0), "0.00000000");
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(-123.456789012), "-123.456789");
        assert_eq!(format_sig9(0.9999999999), "1.00000000");
        assert_eq!(format_sig9(1.5e-7), "0.000000150000000");
        assert_eq!(format_sig9(123456789012.0), "123456789012");
        assert_eq!(format_sig9(-7.5e-18), "0.00000000");
        assert_eq!(format_sig9(1e-12), "0.00000000000100000000");
    }

    #[test]
    fn identity_line() {
        let text = trajectory_text(FlowSource::ObjectFlow, &[RigidTransform::identity()]);
        assert_eq!(
            text,
            "# ee-trajectory v1 source=object-flow poses=1\n\
             0 1.00000000 0.00000000 0.00000000 0.00000000 1.00000000 0.00000000 0.00000000 0.00000000 1.00000000 0.00000000 0.00000000 0.00000000\n"
        );
    }

    #[test]
    fn parse_back() {
        let poses: Vec<RigidTransform> = (0..5)
            .map(|i| {
                RigidTransform::from_axis_angle(
                    &Vec3::new(1.0, -2.0, 0.5),
                    0.3 * i as f64 - 0.7,
                    Vec3::new(0.4 + 0.01 * i as f64, -0.123456789, 0.002),
                )
            })
            .collect();
        let text = trajectory_text(FlowSource::HandFlow, &poses);
        assert_eq!(text.lines().count(), poses.len() + 1);
        let back = parse_trajectory(&text).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert!(a.max_abs_diff(b) < 1e-8);
        }
        assert!(parse_trajectory("0 1 2").is_err());
    }
}
