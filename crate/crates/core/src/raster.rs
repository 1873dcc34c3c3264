//! Binary masks, connected components and P5 PGM mask files.

use std::collections::VecDeque;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("mask dimensions {got:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
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

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn check_dims(&self, other: &Mask) -> Result<(), RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    /// `|self \ other|`.
    pub fn difference_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && !b)
            .count()
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    /// Iterates set pixels as `(x, y)`.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Sizes of the 4-connected components, one entry per component, plus a
    /// per-pixel label (`usize::MAX` for unset pixels).
    pub fn components(&self) -> (Vec<usize>, Vec<usize>) {
        let mut labels = vec![usize::MAX; self.data.len()];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || labels[start] != usize::MAX {
                continue;
            }
            let label = sizes.len();
            let mut size = 0;
            labels[start] = label;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = (i % self.width, i / self.width);
                let mut visit = |j: usize| {
                    if self.data[j] && labels[j] == usize::MAX {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < self.width {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - self.width);
                }
                if y + 1 < self.height {
                    visit(i + self.width);
                }
            }
            sizes.push(size);
        }
        (sizes, labels)
    }

    /// Drops 4-connected components smaller than `min_area` pixels.
    pub fn remove_small_components(&self, min_area: usize) -> Mask {
        let (sizes, labels) = self.components();
        Mask {
            width: self.width,
            height: self.height,
            data: labels
                .iter()
                .map(|&l| l != usize::MAX && sizes[l] >= min_area)
                .collect(),
        }
    }
}

/// Writes a binary P5 PGM: 0 background, 255 set.
pub fn write_pgm_mask(path: &Path, mask: &Mask) -> Result<(), RasterError> {
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let file = std::fs::File::create(path).map_err(|source| RasterError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(
            &bytes,
            mask.width as u32,
            mask.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })
}

/// Reads a P5 PGM; any nonzero sample counts as set.
pub fn read_pgm_mask(path: &Path) -> Result<Mask, RasterError> {
    let image_err = |source| RasterError::Image {
        path: path.display().to_string(),
        source,
    };
    let mut reader = ImageReader::open(path).map_err(|source| RasterError::Io {
        path: path.display().to_string(),
        source,
    })?;
    reader.set_format(ImageFormat::Pnm);
    let img = reader.decode().map_err(image_err)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Mask {
        width: w as usize,
        height: h as usize,
        data: img.into_raw().into_iter().map(|v| v != 0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_four_connected() {
        // Diagonal neighbours are separate components under 4-connectivity.
        let mut m = Mask::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(2, 1, true);
        let (sizes, _) = m.components();
        assert_eq!(sizes, vec![1, 2]);
        let kept = m.remove_small_components(2);
        assert_eq!(kept.count(), 2);
        assert!(!kept.get(0, 0));
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let m = Mask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        write_pgm_mask(&path, &m).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P5"));
        assert_eq!(read_pgm_mask(&path).unwrap(), m);
    }
}
