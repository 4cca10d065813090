//! Synthetic Gaussian instances and IDX (MNIST) image pairs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uot_core::{PenaltyKind, Problem};

use crate::error::{HarnessError, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Seed of pair `k` in a batch generated from `seed`.
pub fn pair_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

/// Discretized 1-D Gaussian on the bin centers `k + 0.5`, unit mass.
fn gaussian_histogram(rng: &mut ChaCha8Rng, bins: usize) -> Vec<f64> {
    let width = bins as f64;
    let mean = rng.gen_range(0.25..0.75) * width;
    let sigma = rng.gen_range(0.05..0.2) * width;
    let density: Vec<f64> = (0..bins)
        .map(|k| {
            let x = (k as f64 + 0.5 - mean) / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let total: f64 = density.iter().sum();
    density.into_iter().map(|v| v / total).collect()
}

/// Divides by the largest entry so that `max(cost) = 1` exactly.
fn normalize_cost(cost: &mut [f64]) {
    let max = cost.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        cost.iter_mut().for_each(|c| *c /= max);
    }
}

/// Two Gaussian histograms over `bins` bins with squared-distance cost.
///
/// The instance is ℓ2-penalized with `lambda = 1`; callers usually override
/// both with [`Problem::with_penalty`].
pub fn gen_gaussian_pair(bins: usize, seed: u64) -> Result<Problem> {
    if bins < 2 {
        return Err(HarnessError::InvalidArgument(format!("bins must be at least 2, got {bins}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_histogram(&mut rng, bins);
    let b = gaussian_histogram(&mut rng, bins);
    let mut cost = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            let d = i as f64 - j as f64;
            cost.push(d * d);
        }
    }
    normalize_cost(&mut cost);
    Ok(Problem::new(a, b, cost, 1.0, PenaltyKind::L2, 0.0)?)
}

/// Images of an IDX file, row-major `rows x cols` bytes each.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        let Some(chunk) = self.bytes.get(self.offset..end) else {
            return Err(self.error(format!("truncated {what}")));
        };
        let value = u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        self.offset = end;
        Ok(value)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let Some(chunk) = self.offset.checked_add(len).and_then(|end| self.bytes.get(self.offset..end)) else {
            return Err(self.error(format!("truncated {what}: need {len} bytes")));
        };
        self.offset += len;
        Ok(chunk)
    }

    fn error(&self, message: String) -> HarnessError {
        HarnessError::Idx {
            offset: self.offset,
            message,
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("magic number")?;
        if found != expected {
            return Err(HarnessError::Idx {
                offset: 0,
                message: format!("bad magic {found}, expected {expected}"),
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { bytes, offset: 0 };
    r.magic(IMAGE_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let size = rows
        .checked_mul(cols)
        .ok_or_else(|| r.error(format!("image size {rows}x{cols} overflows")))?;
    let mut pixels = Vec::with_capacity(count.min(1 << 20));
    for k in 0..count {
        pixels.push(r.take(size, &format!("image {k}"))?.to_vec());
    }
    Ok(IdxImages { rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, offset: 0 };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32("label count")? as usize;
    Ok(r.take(count, "labels")?.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

/// Nonzero pixels of one image as a unit-mass histogram, with their grid
/// coordinates.
fn image_histogram(pixels: &[u8], cols: usize, which: &str) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    let mut mass = Vec::new();
    let mut coords = Vec::new();
    for (k, &v) in pixels.iter().enumerate() {
        if v > 0 {
            mass.push(v as f64);
            coords.push(((k / cols) as f64, (k % cols) as f64));
        }
    }
    let total: f64 = mass.iter().sum();
    if total == 0.0 {
        return Err(HarnessError::EmptyHistogram(format!("image {which} has no nonzero pixel")));
    }
    mass.iter_mut().for_each(|v| *v /= total);
    Ok((mass, coords))
}

/// Builds an instance from two images: zero pixels are dropped, the cost
/// is the squared grid distance normalized to `max = 1`.
pub fn problem_from_images(images: &IdxImages, index_a: usize, index_b: usize) -> Result<Problem> {
    let get = |k: usize| {
        images.pixels.get(k).ok_or_else(|| {
            HarnessError::InvalidArgument(format!("image index {k} out of range ({} images)", images.pixels.len()))
        })
    };
    let (a, ca) = image_histogram(get(index_a)?, images.cols, &index_a.to_string())?;
    let (b, cb) = image_histogram(get(index_b)?, images.cols, &index_b.to_string())?;
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for (ri, ci) in &ca {
        for (rj, cj) in &cb {
            cost.push((ri - rj).powi(2) + (ci - cj).powi(2));
        }
    }
    normalize_cost(&mut cost);
    Ok(Problem::new(a, b, cost, 1.0, PenaltyKind::L2, 0.0)?)
}

/// Loads images `index_a` and `index_b` from IDX files. The label file is
/// validated against the image count.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, index_a: usize, index_b: usize) -> Result<Problem> {
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if labels.len() != images.pixels.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "{} labels for {} images",
            labels.len(),
            images.pixels.len()
        )));
    }
    problem_from_images(&images, index_a, index_b)
}

/// Serializes images in IDX format.
pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [IMAGE_MAGIC, images.pixels.len() as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in &images.pixels {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_pair_is_normalized_and_deterministic() {
        let p = gen_gaussian_pair(100, 7).unwrap();
        assert_eq!(p.cost.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!((p.a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p, gen_gaussian_pair(100, 7).unwrap());
        assert_ne!(p, gen_gaussian_pair(100, 8).unwrap());
        for i in 0..100 {
            for j in 0..100 {
                assert_eq!(p.cost[i * 100 + j], p.cost[j * 100 + i]);
            }
        }
        assert!(gen_gaussian_pair(1, 0).is_err());
    }

    #[test]
    fn image_magic_is_checked() {
        let images = IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![vec![0, 3, 0, 1]],
        };
        let bytes = encode_idx_images(&images);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_images(&bytes).unwrap(), images);
        let labels = encode_idx_labels(&[5]);
        assert!(matches!(parse_idx_images(&labels), Err(HarnessError::Idx { offset: 0, .. })));
        match parse_idx_images(&bytes[..bytes.len() - 1]) {
            Err(HarnessError::Idx { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn image_pair_histograms() {
        let images = IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![vec![0, 3, 0, 1], vec![2, 0, 0, 2], vec![0; 4]],
        };
        let p = problem_from_images(&images, 0, 1).unwrap();
        assert_eq!((p.n, p.m), (2, 2));
        assert_eq!(p.a, vec![0.75, 0.25]);
        assert_eq!(p.b, vec![0.5, 0.5]);
        assert_eq!(p.cost.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(matches!(problem_from_images(&images, 0, 2), Err(HarnessError::EmptyHistogram(_))));
    }
}
