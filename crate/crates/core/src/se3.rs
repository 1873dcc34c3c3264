//! Rigid transforms, axis-angle conversion and the Kabsch solver that turns
//! keypoint flow into per-frame rigid motion.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3, SVD};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance used when validating rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Below this angle the rotation axis is undefined and defaults to +z.
pub const SMALL_ANGLE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point sets differ in size ({src} vs {dst})")]
    SizeMismatch { src: usize, dst: usize },
    #[error("need at least 3 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate geometry: centered cross-covariance has rank < 2")]
    DegenerateGeometry,
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("frame pair ({prev}, {frame}) has only {valid} keypoints valid in both frames")]
    InsufficientKeypoints {
        prev: usize,
        frame: usize,
        valid: usize,
    },
    #[error("invalid flow field: {0}")]
    InvalidFlow(String),
}

/// A rigid motion in SE(3): `x -> rotation * x + translation`, translation in meters.
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.rotation;
        write!(
            f,
            "RigidTransform {{ R: [[{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}]], t: [{:.6}, {:.6}, {:.6}] }}",
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            self.translation.x, self.translation.y, self.translation.z
        )
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not orthonormal with det +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation(f64::NAN));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        Self {
            rotation: AxisAngle::new(angle, *axis).to_rotation(),
            translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `Q * self * Q^-1`: the same motion expressed in the frame `q` maps into.
    pub fn conjugate_by(&self, q: &Self) -> Self {
        q.compose(self).compose(&q.inverse())
    }

    /// Rotation magnitude in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Geodesic rotation distance (radians) and translation distance (meters).
    pub fn distance(&self, other: &Self) -> (f64, f64) {
        let rel = self.rotation.transpose() * other.rotation;
        (
            rotation_angle(&rel),
            (self.translation - other.translation).norm(),
        )
    }

    /// Largest elementwise difference across rotation and translation.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let dr = (self.rotation - other.rotation).amax();
        let dt = (self.translation - other.translation).amax();
        dr.max(dt)
    }

    /// Row-major rotation followed by translation.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Self {
        Self {
            rotation: Mat3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]),
            translation: Vec3::new(v[9], v[10], v[11]),
        }
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a RigidTransform> for &'a RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Largest elementwise deviation of `R^T R` from identity.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

pub fn check_rotation(r: &Mat3) -> Result<(), GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NotARotation(f64::NAN));
    }
    let err = orthonormality_error(r);
    let det = r.determinant();
    if err > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(GeometryError::NotARotation(err.max((det - 1.0).abs())));
    }
    Ok(())
}

/// Rotation magnitude via `atan2(|vee(R - R^T)| / 2, (tr R - 1) / 2)`, which stays
/// accurate near zero where `acos` of the trace loses half the digits.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let sin = axial_vector(r).norm() * 0.5;
    let cos = (r.trace() - 1.0) * 0.5;
    sin.atan2(cos)
}

fn axial_vector(r: &Mat3) -> Vec3 {
    Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    )
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation in axis-angle form. `angle` is in `[0, pi]`, `axis` is unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub angle: f64,
    pub axis: Vec3,
}

impl AxisAngle {
    /// Normalizes the axis and folds negative angles onto the flipped axis.
    pub fn new(angle: f64, axis: Vec3) -> Self {
        let n = axis.norm();
        let axis = if n > 0.0 { axis / n } else { Vec3::z() };
        if angle < 0.0 {
            Self {
                angle: -angle,
                axis: -axis,
            }
        } else {
            Self { angle, axis }
        }
    }

    /// Rodrigues' formula.
    pub fn to_rotation(&self) -> Mat3 {
        let k = skew(&self.axis);
        let (s, c) = self.angle.sin_cos();
        Mat3::identity() + k * s + k * k * (1.0 - c)
    }
}

pub fn to_axis_angle(r: &Mat3) -> Result<AxisAngle, GeometryError> {
    check_rotation(r)?;
    let axial = axial_vector(r);
    let sin = axial.norm() * 0.5;
    let cos = (r.trace() - 1.0) * 0.5;
    let angle = sin.atan2(cos);
    if angle < SMALL_ANGLE {
        return Ok(AxisAngle {
            angle: 0.0,
            axis: Vec3::z(),
        });
    }
    if sin > 1e-3 || cos > 0.0 {
        return Ok(AxisAngle {
            angle,
            axis: axial / (2.0 * sin),
        });
    }
    // Near pi the axial vector vanishes; read the axis off the symmetric part,
    // (R + R^T)/2 = cos I + (1 - cos) u u^T.
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * cos;
    let outer = sym / (1.0 - cos);
    let (col, _) = (0..3)
        .map(|i| (i, outer[(i, i)]))
        .fold(
            (0, f64::MIN),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let mut axis: Vec3 = outer.column(col).into();
    axis.normalize_mut();
    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    Ok(AxisAngle { angle, axis })
}

/// Least-squares rigid motion taking `src` onto `dst` (uniform weights).
///
/// Rotation comes from the SVD of the centered cross-covariance; an improper
/// solution is corrected by flipping the singular vector with the smallest
/// singular value. Translation is `c_dst - R c_src`.
pub fn kabsch_rigid_transform(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::SizeMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(GeometryError::TooFewPoints(src.len()));
    }
    let n = src.len() as f64;
    let c_src = src.iter().sum::<Vec3>() / n;
    let c_dst = dst.iter().sum::<Vec3>() / n;

    let mut cov = Mat3::zeros();
    for (a, b) in src.iter().zip(dst) {
        cov += (a - c_src) * (b - c_dst).transpose();
    }
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::DegenerateGeometry);
    }

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateGeometry),
    };
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    if largest <= 0.0 || sv[order[1]] <= 1e-12 * largest {
        return Err(GeometryError::DegenerateGeometry);
    }

    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let mut diag = Vec3::new(1.0, 1.0, 1.0);
    diag[order[2]] = d;
    let rotation = v * Mat3::from_diagonal(&diag) * u.transpose();
    let translation = c_dst - rotation * c_src;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Sum of squared residuals `|R (a - c_a) - (b - c_b)|^2` about the centroids.
pub fn centered_residual(rotation: &Mat3, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let n = src.len() as f64;
    let c_src = src.iter().sum::<Vec3>() / n;
    let c_dst = dst.iter().sum::<Vec3>() / n;
    src.iter()
        .zip(dst)
        .map(|(a, b)| (rotation * (a - c_src) - (b - c_dst)).norm_squared())
        .sum()
}

/// K keypoints tracked over T frames, with per-entry validity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    keypoints: usize,
    frames: usize,
    // keypoint-major: index = k * frames + t
    positions: Vec<Vec3>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(
        keypoints: usize,
        frames: usize,
        positions: Vec<Vec3>,
        valid: Vec<bool>,
    ) -> Result<Self, GeometryError> {
        let n = keypoints * frames;
        if positions.len() != n || valid.len() != n {
            return Err(GeometryError::InvalidFlow(format!(
                "expected {n} entries for {keypoints}x{frames}, got {} positions / {} flags",
                positions.len(),
                valid.len()
            )));
        }
        if let Some(i) = positions
            .iter()
            .zip(&valid)
            .position(|(p, &ok)| ok && !p.iter().all(|v| v.is_finite()))
        {
            return Err(GeometryError::InvalidFlow(format!(
                "keypoint {} frame {} is marked valid but not finite",
                i / frames,
                i % frames
            )));
        }
        Ok(Self {
            keypoints,
            frames,
            positions,
            valid,
        })
    }

    /// Builds a fully valid flow from `f(keypoint, frame)`.
    pub fn from_fn(
        keypoints: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize) -> Vec3,
    ) -> Self {
        let mut positions = Vec::with_capacity(keypoints * frames);
        for k in 0..keypoints {
            for t in 0..frames {
                positions.push(f(k, t));
            }
        }
        Self {
            keypoints,
            frames,
            valid: vec![true; positions.len()],
            positions,
        }
    }

    pub fn keypoints(&self) -> usize {
        self.keypoints
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn position(&self, keypoint: usize, frame: usize) -> &Vec3 {
        &self.positions[keypoint * self.frames + frame]
    }

    pub fn is_valid(&self, keypoint: usize, frame: usize) -> bool {
        self.valid[keypoint * self.frames + frame]
    }

    pub fn set_valid(&mut self, keypoint: usize, frame: usize, valid: bool) {
        self.valid[keypoint * self.frames + frame] = valid;
    }

    /// Applies `f` to every position, keeping validity.
    pub fn map_positions(&self, f: impl FnMut(&Vec3) -> Vec3) -> Self {
        Self {
            keypoints: self.keypoints,
            frames: self.frames,
            positions: self.positions.iter().map(f).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Valid positions of frame `t` in keypoint order.
    pub fn frame_points(&self, frame: usize) -> Vec<Vec3> {
        (0..self.keypoints)
            .filter(|&k| self.is_valid(k, frame))
            .map(|k| *self.position(k, frame))
            .collect()
    }
}

/// Rigid motion between every adjacent frame pair, element `t - 1` mapping
/// frame `t - 1` onto frame `t`. Each pair uses the keypoints valid in both frames.
pub fn flow_to_motion(flow: &FlowField) -> Result<Vec<RigidTransform>, GeometryError> {
    if flow.frames < 2 {
        return Err(GeometryError::InvalidFlow(format!(
            "need at least 2 frames, got {}",
            flow.frames
        )));
    }
    (1..flow.frames)
        .map(|t| {
            let (src, dst): (Vec<Vec3>, Vec<Vec3>) = (0..flow.keypoints)
                .filter(|&k| flow.is_valid(k, t - 1) && flow.is_valid(k, t))
                .map(|k| (*flow.position(k, t - 1), *flow.position(k, t)))
                .unzip();
            if src.len() < 3 {
                return Err(GeometryError::InsufficientKeypoints {
                    prev: t - 1,
                    frame: t,
                    valid: src.len(),
                });
            }
            kabsch_rigid_transform(&src, &dst)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cube() -> Vec<Vec3> {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        pts
    }

    #[test]
    fn identity_on_three_points() {
        let pts = vec![
            Vec3::new(0.3, -0.1, 1.2),
            Vec3::new(-0.4, 0.2, 0.9),
            Vec3::new(0.1, 0.5, 1.5),
        ];
        let t = kabsch_rigid_transform(&pts, &pts).unwrap();
        assert!(t.max_abs_diff(&RigidTransform::identity()) < 1e-12);
    }

    #[test]
    fn cube_quarter_turn_about_z() {
        // Rz(90) maps (x, y, z) -> (-y, x, z).
        let src = cube();
        let dst: Vec<Vec3> = src
            .iter()
            .map(|p| Vec3::new(-p.y + 0.1, p.x, p.z))
            .collect();
        let t = kabsch_rigid_transform(&src, &dst).unwrap();
        let expected = RigidTransform {
            rotation: Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            translation: Vec3::new(0.1, 0.0, 0.0),
        };
        assert!(t.max_abs_diff(&expected) < 1e-9, "{t:?}");
    }

    #[test]
    fn reflection_is_corrected() {
        // Mirror image of a planar set: best proper rotation has det +1.
        let src = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(0.2, 0.1, 0.0),
        ];
        let dst: Vec<Vec3> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let t = kabsch_rigid_transform(&src, &dst).unwrap();
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!(orthonormality_error(&t.rotation) < 1e-12);
    }

    #[test]
    fn errors() {
        let a = vec![Vec3::zeros(); 3];
        assert_eq!(
            kabsch_rigid_transform(&a, &a[..2]),
            Err(GeometryError::SizeMismatch { src: 3, dst: 2 })
        );
        assert_eq!(
            kabsch_rigid_transform(&a[..2], &a[..2]),
            Err(GeometryError::TooFewPoints(2))
        );
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            kabsch_rigid_transform(&line, &line),
            Err(GeometryError::DegenerateGeometry)
        );
    }

    #[test]
    fn axis_angle_cases() {
        let aa = to_axis_angle(&Mat3::identity()).unwrap();
        assert_eq!(aa.angle, 0.0);
        assert_eq!(aa.axis, Vec3::z());

        let rx = AxisAngle::new(FRAC_PI_2, Vec3::x()).to_rotation();
        let aa = to_axis_angle(&rx).unwrap();
        assert!((aa.angle - FRAC_PI_2).abs() < 1e-12);
        assert!((aa.axis - Vec3::x()).norm() < 1e-12);

        let near_pi = AxisAngle::new(PI - 1e-7, Vec3::new(1.0, 2.0, -0.5)).to_rotation();
        let aa = to_axis_angle(&near_pi).unwrap();
        assert!((aa.to_rotation() - near_pi).amax() < 1e-9);

        let exact_pi = AxisAngle::new(PI, Vec3::y()).to_rotation();
        let aa = to_axis_angle(&exact_pi).unwrap();
        assert!((aa.angle - PI).abs() < 1e-12);
        assert!((aa.to_rotation() - exact_pi).amax() < 1e-9);
    }

    #[test]
    fn not_a_rotation() {
        let m = Mat3::identity() * 2.0;
        assert!(matches!(
            to_axis_angle(&m),
            Err(GeometryError::NotARotation(_))
        ));
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(to_axis_angle(&reflect).is_err());
    }

    #[test]
    fn inverse_and_compose() {
        let t = RigidTransform::from_axis_angle(
            &Vec3::new(0.3, -1.0, 0.2),
            1.1,
            Vec3::new(0.4, 0.1, -2.0),
        );
        let id = t * t.inverse();
        assert!(id.max_abs_diff(&RigidTransform::identity()) < 1e-12);
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert!((t.inverse().transform_point(&t.transform_point(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn static_flow_gives_identities() {
        let flow = FlowField::from_fn(5, 4, |k, _| {
            Vec3::new(k as f64, (k * k) as f64 * 0.1, 1.0 + k as f64 * 0.3)
        });
        let motions = flow_to_motion(&flow).unwrap();
        assert_eq!(motions.len(), 3);
        for m in motions {
            assert!(m.max_abs_diff(&RigidTransform::identity()) < 1e-12);
        }
    }

    #[test]
    fn insufficient_keypoints_names_frame() {
        let mut flow =
            FlowField::from_fn(4, 5, |k, t| Vec3::new(k as f64, t as f64, (k % 2) as f64));
        flow.set_valid(0, 3, false);
        flow.set_valid(1, 3, false);
        assert_eq!(
            flow_to_motion(&flow),
            Err(GeometryError::InsufficientKeypoints {
                prev: 2,
                frame: 3,
                valid: 2
            })
        );
    }

    #[test]
    fn flow_rejects_nonfinite_valid_entries() {
        let err = FlowField::new(1, 1, vec![Vec3::new(f64::NAN, 0.0, 0.0)], vec![true]);
        assert!(err.is_err());
        assert!(FlowField::new(1, 1, vec![Vec3::new(f64::NAN, 0.0, 0.0)], vec![false]).is_ok());
    }
}
