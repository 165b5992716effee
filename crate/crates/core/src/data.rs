//! Image corpora: the CIFAR-10 binary distribution and a seeded synthetic
//! generator for fast, dataset-free runs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::ImageShape;
use crate::nn::Tensor;
use crate::rng::{child_rng, rng_from};

/// 8-bit images stored channel-first, contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub shape: ImageShape,
    pub pixels: Vec<u8>,
    /// Class labels when the source has them; metadata only.
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(shape: ImageShape) -> Self {
        ImageSet {
            shape,
            pixels: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / self.shape.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        let n = self.shape.numel();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Image `i` as a `[C, H, W]` tensor in the 0–255 domain.
    pub fn image(&self, i: usize) -> Tensor {
        let ImageShape { c, h, w } = self.shape;
        Tensor::from_vec(c, h, w, self.raw(i).iter().map(|&v| v as f64).collect())
    }

    pub fn push(&mut self, pixels: &[u8], label: u8) {
        assert_eq!(pixels.len(), self.shape.numel());
        self.pixels.extend_from_slice(pixels);
        self.labels.push(label);
    }

    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        let mut out = ImageSet::new(self.shape);
        for &i in indices {
            out.push(self.raw(i), self.labels.get(i).copied().unwrap_or(0));
        }
        out
    }

    pub fn take(&self, n: usize) -> ImageSet {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Seeded shuffle, then the last `fraction` of images becomes the second set.
    pub fn split(&self, fraction: f64, seed: u64) -> (ImageSet, ImageSet) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_from(seed));
        let n_hold = ((self.len() as f64) * fraction).round() as usize;
        let n_hold = n_hold.min(self.len().saturating_sub(1));
        let (keep, hold) = idx.split_at(self.len() - n_hold);
        (self.subset(keep), self.subset(hold))
    }
}

pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Parses one CIFAR-10 binary batch: records of 1 label byte followed by
/// 3072 pixel bytes (three 32×32 planes, row-major).
pub fn parse_cifar_batch(path: &Path) -> Result<ImageSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut set = ImageSet::new(ImageShape::new(3, 32, 32));
    if bytes.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: "empty batch file".into(),
        });
    }
    if bytes.len() % CIFAR_RECORD != 0 {
        let offset = (bytes.len() / CIFAR_RECORD * CIFAR_RECORD) as u64;
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset,
            msg: format!(
                "truncated record: file is {} bytes, not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        });
    }
    set.pixels.reserve(bytes.len());
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: (i * CIFAR_RECORD) as u64,
                msg: format!("label byte {} out of range 0..=9", rec[0]),
            });
        }
        set.push(&rec[1..], rec[0]);
    }
    Ok(set)
}

/// Loads the standard `cifar-10-batches-bin` directory as (train, test).
pub fn load_cifar10_binary(dir: &Path) -> Result<(ImageSet, ImageSet)> {
    let mut train = ImageSet::new(ImageShape::new(3, 32, 32));
    for name in CIFAR_TRAIN_FILES {
        let part = parse_cifar_batch(&dir.join(name))?;
        train.pixels.extend_from_slice(&part.pixels);
        train.labels.extend_from_slice(&part.labels);
    }
    let test = parse_cifar_batch(&dir.join(CIFAR_TEST_FILE))?;
    Ok((train, test))
}

/// Reproducible smooth pseudo-images: a colour offset plus low-frequency
/// plane waves (amplitude ∝ 1/f) and Gaussian blobs, sharing one luminance
/// pattern tinted per channel, quantized to 8 bits.
pub fn synthetic_dataset(count: usize, shape: ImageShape, seed: u64) -> ImageSet {
    use std::f64::consts::TAU;
    let ImageShape { c, h, w } = shape;
    let scale = w.max(h) as f64;
    let mut set = ImageSet::new(shape);
    set.pixels.reserve(count * shape.numel());
    let mut pixels = vec![0u8; shape.numel()];
    for n in 0..count {
        let mut rng = child_rng(seed, &[n as u64]);
        // (field, amplitude) pairs; amplitude falls off as 1/f.
        let mut components: Vec<(Vec<f64>, f64)> = Vec::new();
        for _ in 0..4 {
            let f = rng.random_range(0.3..2.0);
            let angle = rng.random_range(0.0..TAU);
            let (fx, fy) = (f * angle.cos() / scale, f * angle.sin() / scale);
            let phase = rng.random_range(0.0..TAU);
            let field = (0..h * w)
                .map(|i| (TAU * (fx * (i % w) as f64 + fy * (i / w) as f64) + phase).sin())
                .collect();
            components.push((field, 35.0 / f.max(0.5)));
        }
        for _ in 0..2 {
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let r = rng.random_range(0.15..0.4) * scale;
            let field = (0..h * w)
                .map(|i| {
                    let d2 = ((i % w) as f64 - cx).powi(2) + ((i / w) as f64 - cy).powi(2);
                    (-d2 / (2.0 * r * r)).exp() - 0.3
                })
                .collect();
            components.push((field, 60.0));
        }
        // Shared luminance weights with a per-channel colour tint.
        let base: Vec<f64> = components.iter().map(|(_, a)| rng.random_range(-*a..*a)).collect();
        let luminance = rng.random_range(70.0..180.0);
        for ch in 0..c {
            let offset = luminance + rng.random_range(-30.0..30.0);
            let tint: Vec<f64> = base.iter().map(|b| b * rng.random_range(0.6..1.4)).collect();
            for i in 0..h * w {
                let v = offset + components.iter().zip(&tint).map(|((f, _), t)| t * f[i]).sum::<f64>();
                pixels[ch * h * w + i] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        set.push(&pixels, 0);
    }
    set
}
