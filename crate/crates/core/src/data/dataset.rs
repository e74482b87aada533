//! Image directories (`images/*.ppm`, optional `masks/<stem>.pgm`) and a
//! synthetic generator for tests and demos.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::{load_image, load_mask, save_image, save_mask};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    /// `[3,H,W]` in [0, 1].
    pub image: Tensor,
    /// `[1,H,W]`, 1 = visible.
    pub mask: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl Dataset {
    /// Load every image under `dir/images`, in file-name order.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let images = sorted_files(&dir.join("images"), "ppm")?;
        let mask_dir = dir.join("masks");
        let mut samples = Vec::with_capacity(images.len());
        for path in images {
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            let image = load_image(&path)?;
            let mask_path = mask_dir.join(format!("{name}.pgm"));
            let mask = if mask_path.exists() {
                let m = load_mask(&mask_path)?;
                if m.shape()[1..] != image.shape()[1..] {
                    return Err(shape_err!(
                        "mask {} is {:?}, image is {:?}",
                        mask_path.display(),
                        m.shape(),
                        image.shape()
                    ));
                }
                Some(m)
            } else {
                None
            };
            samples.push(Sample { name, image, mask });
        }
        if samples.is_empty() {
            return Err(Error::Validation(format!(
                "no images found in {}",
                dir.join("images").display()
            )));
        }
        Ok(Dataset { samples })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for s in &self.samples {
            save_image(&s.image, &images.join(format!("{}.ppm", s.name)))?;
            if let Some(m) = &s.mask {
                let masks = dir.join("masks");
                fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
                save_mask(m, &masks.join(format!("{}.pgm", s.name)))?;
            }
        }
        Ok(())
    }

    /// `n` smooth random images of `size`×`size`.
    pub fn synthetic(n: usize, size: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| Sample {
                name: format!("synth{i:03}"),
                image: synthetic_image(size, size, rng.random()),
                mask: None,
            })
            .collect();
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Common `(H, W)` of all images.
    pub fn extent(&self) -> Result<(usize, usize)> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::Validation("empty dataset".into()))?;
        let s = first.image.shape();
        let (h, w) = (s[1], s[2]);
        if let Some(bad) = self.samples.iter().find(|x| x.image.shape()[1..] != [h, w]) {
            return Err(shape_err!(
                "image {} is {:?}, expected {h}x{w}",
                bad.name,
                bad.image.shape()
            ));
        }
        Ok((h, w))
    }
}

/// Low-frequency colour field: a gradient, a few plane waves and a soft blob
/// per channel, squashed into [0.05, 0.95].
pub fn synthetic_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        let base = rng.random_range(0.3..0.7);
        let grad = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let freq = rng.random_range(0.5..2.5);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                (
                    freq * angle.cos(),
                    freq * angle.sin(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.05..0.2),
                )
            })
            .collect();
        let blob = (
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(0.1..0.3),
            rng.random_range(-0.3..0.3),
        );
        for y in 0..h {
            for x in 0..w {
                let (v, u) = (y as f64 / h as f64, x as f64 / w as f64);
                let mut val = base + grad.0 * (v - 0.5) + grad.1 * (u - 0.5);
                for &(fy, fx, phase, amp) in &waves {
                    val += amp * (std::f64::consts::TAU * (fy * v + fx * u) + phase).sin();
                }
                let d2 = (v - blob.0).powi(2) + (u - blob.1).powi(2);
                val += blob.3 * (-d2 / (2.0 * blob.2 * blob.2)).exp();
                data.push(0.05 + 0.9 / (1.0 + (-4.0 * (val - 0.5)).exp()));
            }
        }
    }
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

/// Stack `[C,H,W]` tensors into `[N,C,H,W]`.
pub fn stack(items: &[Tensor]) -> Result<Tensor> {
    let parts = items
        .iter()
        .map(|t| {
            let mut s = vec![1];
            s.extend_from_slice(t.shape());
            t.reshape(&s)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::concat(&parts, 0)
}
