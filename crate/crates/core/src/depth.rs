//! Metric alignment of generated depth against a sensor frame.
//!
//! A global affine model `d_metric = scale * d_gen + shift` is fitted with
//! two-point RANSAC over a cleaned calibration mask and refined by ordinary
//! least squares on the winning inlier set.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::raster::Mask;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("depth frames differ in size: {expected:?} vs {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("calibration mask has {0} pixels, need at least 2")]
    InsufficientPixels(usize),
    #[error("no RANSAC round produced two samples with distinct generated depth")]
    DegenerateSample,
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense depth in meters. Invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthFrame {
    /// Pixels that are not finite and strictly positive are marked invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        if values.len() != width * height {
            return Err(DepthError::DimensionMismatch {
                expected: (width, height),
                got: (values.len(), 1),
            });
        }
        let valid: Vec<bool> = values.iter().map(|&v| v.is_finite() && v > 0.0).collect();
        let values = values
            .into_iter()
            .zip(&valid)
            .map(|(v, &ok)| if ok { v } else { f64::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::from_values(width, height, values).expect("size matches by construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Depth at `(x, y)` if valid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mask(&self) -> Mask {
        Mask::from_vec(self.width, self.height, self.valid.clone()).expect("same size")
    }

    fn check_dims(&self, other: &DepthFrame) -> Result<(), DepthError> {
        if self.dims() != other.dims() {
            return Err(DepthError::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDepthModel {
    pub scale: f64,
    /// meters
    pub shift: f64,
    pub inlier_count: usize,
    pub candidate_count: usize,
    pub inlier_ratio: f64,
}

impl AffineDepthModel {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            shift: 0.0,
            inlier_count: 0,
            candidate_count: 0,
            inlier_ratio: 0.0,
        }
    }

    pub fn apply(&self, depth: f64) -> f64 {
        self.scale * depth + self.shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// meters
    pub inlier_threshold: f64,
    pub seed: u64,
    pub min_component_area: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.15,
            seed: 0,
            min_component_area: 50,
        }
    }
}

/// Pixels valid in both frames, minus 4-connected components smaller than
/// `min_component_area`.
pub fn build_calibration_mask(
    gen: &DepthFrame,
    sensor: &DepthFrame,
    min_component_area: usize,
) -> Result<Mask, DepthError> {
    gen.check_dims(sensor)?;
    let both = gen.valid_mask().intersection(&sensor.valid_mask());
    Ok(both.remove_small_components(min_component_area))
}

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    round: usize,
    scale: f64,
    shift: f64,
    inliers: usize,
    residual_sum: f64,
}

impl Hypothesis {
    /// More inliers wins, then lower residual sum, then earlier round.
    fn better_than(&self, other: &Hypothesis) -> bool {
        (other.inliers, self.residual_sum, self.round)
            .partial_cmp(&(self.inliers, other.residual_sum, other.round))
            .is_some_and(|o| o.is_lt())
    }
}

fn score(pairs: &[(f64, f64)], scale: f64, shift: f64, tau: f64) -> (usize, f64) {
    pairs.iter().fold((0, 0.0), |(n, sum), &(g, s)| {
        let r = (scale * g + shift - s).abs();
        if r < tau {
            (n + 1, sum + r)
        } else {
            (n, sum)
        }
    })
}

const SAMPLE_ATTEMPTS: usize = 16;

/// Draws the two-point sample for `round`. The generator is keyed on
/// `(seed, round)` so rounds can be evaluated in any order.
fn sample_round(pairs: &[(f64, f64)], seed: u64, round: usize) -> Option<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    let n = pairs.len();
    for _ in 0..SAMPLE_ATTEMPTS {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (g1, s1) = pairs[i];
        let (g2, s2) = pairs[j];
        if g1 != g2 {
            let scale = (s2 - s1) / (g2 - g1);
            let shift = s1 - scale * g1;
            if scale.is_finite() && shift.is_finite() {
                return Some((scale, shift));
            }
        }
    }
    None
}

fn least_squares(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Option<(f64, f64)> {
    let (n, sg, ss) = pairs.clone().fold((0usize, 0.0, 0.0), |(n, a, b), (g, s)| {
        (n + 1, a + g, b + s)
    });
    if n < 2 {
        return None;
    }
    let mg = sg / n as f64;
    let ms = ss / n as f64;
    let (sxx, sxy) = pairs.fold((0.0, 0.0), |(xx, xy), (g, s)| {
        let dg = g - mg;
        (xx + dg * dg, xy + dg * (s - ms))
    });
    if sxx <= 0.0 {
        return None;
    }
    let scale = sxy / sxx;
    Some((scale, ms - scale * mg))
}

/// Fits `sensor ~ scale * gen + shift` over the cleaned calibration mask.
pub fn calibrate_depth_affine(
    gen: &DepthFrame,
    sensor: &DepthFrame,
    params: &RansacParams,
) -> Result<AffineDepthModel, DepthError> {
    let mask = build_calibration_mask(gen, sensor, params.min_component_area)?;
    calibrate_depth_affine_masked(gen, sensor, &mask, params)
}

/// Same as [`calibrate_depth_affine`] with a caller-supplied mask.
pub fn calibrate_depth_affine_masked(
    gen: &DepthFrame,
    sensor: &DepthFrame,
    mask: &Mask,
    params: &RansacParams,
) -> Result<AffineDepthModel, DepthError> {
    gen.check_dims(sensor)?;
    if mask.dims() != gen.dims() {
        return Err(DepthError::DimensionMismatch {
            expected: gen.dims(),
            got: mask.dims(),
        });
    }
    let pairs: Vec<(f64, f64)> = mask
        .iter_set()
        .filter_map(|(x, y)| Some((gen.get(x, y)?, sensor.get(x, y)?)))
        .collect();
    if pairs.len() < 2 {
        return Err(DepthError::InsufficientPixels(pairs.len()));
    }
    let tau = params.inlier_threshold;

    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|round| {
            let (scale, shift) = sample_round(&pairs, params.seed, round)?;
            let (inliers, residual_sum) = score(&pairs, scale, shift, tau);
            Some(Hypothesis {
                round,
                scale,
                shift,
                inliers,
                residual_sum,
            })
        })
        .reduce_with(|a, b| if b.better_than(&a) { b } else { a })
        .ok_or(DepthError::DegenerateSample)?;

    let inliers = pairs
        .iter()
        .copied()
        .filter(|&(g, s)| (best.scale * g + best.shift - s).abs() < tau);
    let (mut scale, mut shift, mut count) = (best.scale, best.shift, best.inliers);
    if let Some((s, t)) = least_squares(inliers) {
        let (refit_count, _) = score(&pairs, s, t, tau);
        if refit_count >= best.inliers {
            (scale, shift, count) = (s, t, refit_count);
        } else {
            log::debug!(
                "least-squares refit lost inliers ({refit_count} < {}), keeping the sampled model",
                best.inliers
            );
        }
    }

    if !(scale > 0.0) || !shift.is_finite() {
        return Err(DepthError::CalibrationFailure(format!(
            "recovered non-positive scale {scale}"
        )));
    }
    Ok(AffineDepthModel {
        scale,
        shift,
        inlier_count: count,
        candidate_count: pairs.len(),
        inlier_ratio: count as f64 / pairs.len() as f64,
    })
}

/// Maps every valid pixel through the model; results `<= 0` become invalid.
pub fn apply_depth_model(model: &AffineDepthModel, sequence: &[DepthFrame]) -> Vec<DepthFrame> {
    sequence
        .iter()
        .map(|frame| {
            let values = frame
                .values
                .iter()
                .zip(&frame.valid)
                .map(|(&v, &ok)| if ok { model.apply(v) } else { f64::NAN })
                .collect();
            DepthFrame::from_values(frame.width, frame.height, values).expect("same size")
        })
        .collect()
}

/// Header path for a raw depth file: the data path with `.hdr` appended.
pub fn depth_header_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes frames as little-endian f32, row-major, NaN for invalid, plus a
/// `width/height/frames` text sidecar.
pub fn write_depth_sequence(path: &Path, frames: &[DepthFrame]) -> Result<(), DepthError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| DepthError::Io { path: p, source }
    };
    let (w, h) = frames.first().map(|f| f.dims()).unwrap_or((0, 0));
    if let Some(f) = frames.iter().find(|f| f.dims() != (w, h)) {
        return Err(DepthError::DimensionMismatch {
            expected: (w, h),
            got: f.dims(),
        });
    }
    let mut bytes = Vec::with_capacity(w * h * frames.len() * 4);
    for f in frames {
        for (&v, &ok) in f.values.iter().zip(&f.valid) {
            let v = if ok { v as f32 } else { f32::NAN };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(io(path))?;
    let header = depth_header_path(path);
    let mut file = fs::File::create(&header).map_err(io(&header))?;
    write!(file, "width {w}\nheight {h}\nframes {}\n", frames.len()).map_err(io(&header))?;
    Ok(())
}

pub fn read_depth_sequence(path: &Path) -> Result<Vec<DepthFrame>, DepthError> {
    let header = depth_header_path(path);
    let format = |p: &Path, message: String| DepthError::Format {
        path: p.display().to_string(),
        message,
    };
    let text = fs::read_to_string(&header).map_err(|source| DepthError::Io {
        path: header.display().to_string(),
        source,
    })?;
    let (mut width, mut height, mut count) = (None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default();
        let value: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format(&header, format!("bad header line `{line}`")))?;
        match key {
            "width" => width = Some(value),
            "height" => height = Some(value),
            "frames" => count = Some(value),
            other => return Err(format(&header, format!("unknown header key `{other}`"))),
        }
    }
    let (Some(w), Some(h), Some(n)) = (width, height, count) else {
        return Err(format(
            &header,
            "header needs width, height and frames".into(),
        ));
    };
    let bytes = fs::read(path).map_err(|source| DepthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() != w * h * n * 4 {
        return Err(format(
            path,
            format!(
                "expected {} bytes for {w}x{h}x{n}, found {}",
                w * h * n * 4,
                bytes.len()
            ),
        ));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    floats
        .chunks(w * h.max(1))
        .take(n)
        .map(|chunk| DepthFrame::from_values(w, h, chunk.to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> DepthFrame {
        DepthFrame::from_fn(w, h, |x, y| 0.5 + 0.01 * x as f64 + 0.013 * y as f64)
    }

    #[test]
    fn full_valid_mask_is_all_true() {
        let f = ramp(20, 10);
        let m = build_calibration_mask(&f, &f, 50).unwrap();
        assert_eq!(m.count(), 200);
    }

    fn sensor_with_blob(area: usize) -> (DepthFrame, DepthFrame) {
        // Main valid block on the left, an isolated blob of `area` pixels on the right.
        let gen = DepthFrame::from_fn(40, 20, |_, _| 1.0);
        let sensor = DepthFrame::from_fn(40, 20, |x, y| {
            let main = x < 15;
            let blob = x >= 25 && (y * 10 + (x - 25)) < area && x < 35;
            if main || blob {
                1.0
            } else {
                f64::NAN
            }
        });
        (gen, sensor)
    }

    #[test]
    fn small_blob_removed_large_blob_kept() {
        let (gen, sensor) = sensor_with_blob(30);
        let m = build_calibration_mask(&gen, &sensor, 50).unwrap();
        assert_eq!(m.count(), 15 * 20);

        let (gen, sensor) = sensor_with_blob(60);
        let m = build_calibration_mask(&gen, &sensor, 50).unwrap();
        // oracle: count of pixels in components of size >= 50
        let both = gen.valid_mask().intersection(&sensor.valid_mask());
        let (sizes, _) = both.components();
        let expected: usize = sizes.iter().filter(|&&s| s >= 50).sum();
        assert_eq!(sizes.len(), 2);
        assert_eq!(m.count(), expected);
        assert_eq!(m.count(), 300 + 60);
    }

    #[test]
    fn mask_dimension_mismatch() {
        assert!(matches!(
            build_calibration_mask(&ramp(3, 3), &ramp(4, 3), 1),
            Err(DepthError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identical_frames_give_identity() {
        let f = ramp(30, 20);
        let m = calibrate_depth_affine(&f, &f, &RansacParams::default()).unwrap();
        assert!((m.scale - 1.0).abs() < 1e-12);
        assert!(m.shift.abs() < 1e-12);
        assert_eq!(m.inlier_ratio, 1.0);
    }

    #[test]
    fn planted_affine_recovered() {
        let gen = ramp(30, 20);
        let sensor = DepthFrame::from_fn(30, 20, |x, y| 2.0 * gen.get(x, y).unwrap() + 0.1);
        let m = calibrate_depth_affine(&gen, &sensor, &RansacParams::default()).unwrap();
        assert!((m.scale - 2.0).abs() < 1e-6);
        assert!((m.shift - 0.1).abs() < 1e-6);
    }

    #[test]
    fn too_few_pixels_and_degenerate_samples() {
        let gen = DepthFrame::from_fn(4, 1, |x, _| if x == 0 { 1.0 } else { f64::NAN });
        let params = RansacParams {
            min_component_area: 1,
            ..Default::default()
        };
        assert!(matches!(
            calibrate_depth_affine(&gen, &gen, &params),
            Err(DepthError::InsufficientPixels(1))
        ));
        let flat = DepthFrame::from_fn(10, 10, |_, _| 1.0);
        assert!(matches!(
            calibrate_depth_affine(&flat, &flat, &params),
            Err(DepthError::DegenerateSample)
        ));
    }

    #[test]
    fn negative_scale_is_calibration_failure() {
        let gen = ramp(20, 10);
        let sensor = DepthFrame::from_fn(20, 10, |x, y| 3.0 - gen.get(x, y).unwrap());
        assert!(matches!(
            calibrate_depth_affine(&gen, &sensor, &RansacParams::default()),
            Err(DepthError::CalibrationFailure(_))
        ));
    }

    #[test]
    fn apply_model_cases() {
        let f = DepthFrame::from_fn(4, 3, |_, _| 0.5);
        let id = apply_depth_model(&AffineDepthModel::identity(), std::slice::from_ref(&f));
        assert_eq!(id[0], f);

        let m = AffineDepthModel {
            scale: 2.0,
            shift: 0.1,
            ..AffineDepthModel::identity()
        };
        let out = apply_depth_model(&m, std::slice::from_ref(&f));
        assert!(out[0].values().iter().all(|&v| (v - 1.1).abs() < 1e-15));

        let m = AffineDepthModel {
            scale: 1.0,
            shift: -2.0,
            ..AffineDepthModel::identity()
        };
        let out = apply_depth_model(&m, &[f]);
        assert!(out[0].valid().iter().all(|&v| !v));
    }

    #[test]
    fn depth_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let a = DepthFrame::from_fn(5, 4, |x, y| {
            if x == y {
                f64::NAN
            } else {
                0.25 * (x + 1) as f64
            }
        });
        let b = ramp(5, 4);
        write_depth_sequence(&path, &[a.clone(), b]).unwrap();
        let hdr = fs::read_to_string(depth_header_path(&path)).unwrap();
        assert_eq!(hdr, "width 5\nheight 4\nframes 2\n");
        assert_eq!(fs::metadata(&path).unwrap().len(), 5 * 4 * 2 * 4);
        let back = read_depth_sequence(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].valid(), a.valid());
        for (x, y) in a.values().iter().zip(back[0].values()) {
            assert!(x.is_nan() && y.is_nan() || (x - y).abs() < 1e-6);
        }
    }
}
