//! Pinhole camera model. The camera looks down +z; pixel centers sit at
//! integer coordinates.

use serde::{Deserialize, Serialize};

use crate::se3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn is_finite(&self) -> bool {
        [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite())
            && self.fx != 0.0
            && self.fy != 0.0
    }

    /// Pixel coordinates of `p`, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Ray through pixel `(u, v)` scaled so its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// 3D point at pixel `(u, v)` with z-depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.ray(u, v) * depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_unproject_roundtrip() {
        let cam = PinholeCamera::new(150.0, 140.0, 64.0, 48.0);
        let p = Vec3::new(0.05, -0.02, 0.7);
        let (u, v) = cam.project(&p).unwrap();
        assert!((cam.unproject(u, v, p.z) - p).norm() < 1e-12);
        assert!(cam.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
    }
}
