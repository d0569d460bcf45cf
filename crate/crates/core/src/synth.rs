//! Synthetic periodic textures with injected defects, written in the same
//! folder layout that [`crate::dataset`] reads.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{GROUND_TRUTH, TEST_DEFECT, TEST_GOOD, TRAIN_GOOD};
use crate::detector::BinaryMap;
use crate::error::{Error, Result};
use crate::image::{save_image, ImageTensor};
use crate::par::Exec;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureBase {
    /// Horizontal bands, periodic along y.
    Stripes,
    Checker,
    /// `cos` along x plus `cos` along y.
    SinusoidGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub size: usize,
    pub base: TextureBase,
    pub period: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            size: 64,
            base: TextureBase::SinusoidGrid,
            period: 16,
            noise_amplitude: 0.05,
            seed: 0,
        }
    }
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !self.size.is_multiple_of(4) {
            return Err(Error::invalid("size", "must be a positive multiple of 4"));
        }
        if self.period < 2 {
            return Err(Error::invalid("period", "must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.noise_amplitude) {
            return Err(Error::invalid("noise_amplitude", "must lie in [0, 0.5)"));
        }
        Ok(())
    }

    fn base_value(&self, y: usize, x: usize) -> f64 {
        let p = self.period;
        match self.base {
            TextureBase::Stripes => {
                if (y % p) * 2 < p {
                    0.25
                } else {
                    0.75
                }
            }
            TextureBase::Checker => {
                if ((y % p) * 2 < p) ^ ((x % p) * 2 < p) {
                    0.75
                } else {
                    0.25
                }
            }
            TextureBase::SinusoidGrid => {
                let w = 2.0 * PI / p as f64;
                0.5 + 0.2 * ((w * x as f64).cos() + (w * y as f64).cos())
            }
        }
    }
}

/// Base pattern plus uniform noise in `[-noise_amplitude, noise_amplitude]`.
pub fn gen_texture(spec: &TextureSpec) -> Result<ImageTensor> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = seed::rng(spec.seed);
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let noise = if spec.noise_amplitude > 0.0 {
                spec.noise_amplitude * (2.0 * rng.gen::<f64>() - 1.0)
            } else {
                0.0
            };
            data.push(spec.base_value(y, x) + noise);
        }
    }
    ImageTensor::from_clamped(n, n, 1, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// Filled disk; `extent` is the diameter.
    Blob,
    /// Line segment about two pixels wide; `extent` is the length.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSpec {
    pub kind: DefectKind,
    pub extent: usize,
    /// Blend weight toward the defect tone.
    pub contrast: f64,
    pub count: usize,
    pub seed: u64,
    /// Frame kept free of defects on every edge.
    pub margin: usize,
}

impl Default for DefectSpec {
    fn default() -> Self {
        Self {
            kind: DefectKind::Blob,
            extent: 8,
            contrast: 0.4,
            count: 1,
            seed: 0,
            margin: 10,
        }
    }
}

impl DefectSpec {
    pub fn validate(&self, size: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid("contrast", "must lie in [0, 1]"));
        }
        if self.count == 0 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        if self.extent == 0 || 2 * self.extent >= size {
            return Err(Error::invalid(
                "extent",
                format!("must be positive and below size/2 = {}", size / 2),
            ));
        }
        if self.placement_range(size).is_none() {
            return Err(Error::invalid(
                "extent",
                format!(
                    "{} does not fit inside the interior of a {size}-pixel image with margin {}",
                    self.extent, self.margin
                ),
            ));
        }
        Ok(())
    }

    /// Pixels a defect may reach from its centre.
    fn reach(&self) -> usize {
        match self.kind {
            DefectKind::Blob => self.extent.div_ceil(2),
            DefectKind::Scratch => self.extent.div_ceil(2) + 1,
        }
    }

    /// Inclusive range of admissible centre coordinates.
    fn placement_range(&self, size: usize) -> Option<(usize, usize)> {
        let lo = self.margin + self.reach();
        let hi = size.checked_sub(self.margin + self.reach() + 1)?;
        (lo <= hi).then_some((lo, hi))
    }
}

/// Blends `count` defects into `image`; returns the result and the mask of
/// pixels the defects cover.
pub fn inject_defect(image: &ImageTensor, spec: &DefectSpec) -> Result<(ImageTensor, BinaryMap)> {
    let gray = image.to_grayscale();
    let n = gray.height();
    if !gray.is_square() {
        return Err(Error::shape(
            "square image",
            format!("{}x{}", gray.height(), gray.width()),
        ));
    }
    spec.validate(n)?;
    let (lo, hi) = spec.placement_range(n).expect("validated");
    let mut rng = seed::rng(spec.seed);
    let mut data = gray.data().to_vec();
    let mut mask = vec![false; n * n];
    for _ in 0..spec.count {
        let cy = rng.gen_range(lo..=hi) as f64;
        let cx = rng.gen_range(lo..=hi) as f64;
        let angle = rng.gen::<f64>() * PI;
        let tone = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        let r = spec.extent as f64 / 2.0;
        let (dy, dx) = (angle.sin(), angle.cos());
        let inside = |y: f64, x: f64| -> bool {
            let (py, px) = (y - cy, x - cx);
            match spec.kind {
                DefectKind::Blob => py * py + px * px <= r * r,
                DefectKind::Scratch => {
                    let along = (py * dy + px * dx).clamp(-r, r);
                    let (ey, ex) = (py - along * dy, px - along * dx);
                    ey * ey + ex * ex <= 1.0
                }
            }
        };
        for y in 0..n {
            for x in 0..n {
                if inside(y as f64, x as f64) {
                    let i = y * n + x;
                    mask[i] = true;
                    data[i] = (1.0 - spec.contrast) * data[i] + spec.contrast * tone;
                }
            }
        }
    }
    Ok((
        ImageTensor::from_clamped(n, n, 1, data)?,
        BinaryMap {
            height: n,
            width: n,
            data: mask,
        },
    ))
}

/// Texture seed of image `index` in `split`.
pub fn image_seed(texture: &TextureSpec, split: &str, index: usize) -> u64 {
    seed::derive(texture.seed, split, index as u64)
}

pub fn defect_seed(defect: &DefectSpec, index: usize) -> u64 {
    seed::derive(defect.seed, "defect", index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusCounts {
    pub train: usize,
    pub test_normal: usize,
    pub test_defect: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        Self {
            train: 40,
            test_normal: 15,
            test_defect: 15,
        }
    }
}

pub fn file_name(index: usize) -> String {
    format!("{index:03}.png")
}

/// Clean texture of the `index`-th image of `split`.
pub fn corpus_texture(texture: &TextureSpec, split: &str, index: usize) -> Result<ImageTensor> {
    gen_texture(&TextureSpec {
        seed: image_seed(texture, split, index),
        ..texture.clone()
    })
}

/// Writes `train/good`, `test/good`, `test/defect` and `ground_truth/defect`
/// under `out_dir`.
pub fn gen_corpus(
    out_dir: &Path,
    texture: &TextureSpec,
    defect: &DefectSpec,
    counts: CorpusCounts,
    exec: Exec,
) -> Result<()> {
    texture.validate()?;
    defect.validate(texture.size)?;
    if counts.train == 0 || counts.test_normal == 0 || counts.test_defect == 0 {
        return Err(Error::invalid(
            "counts",
            "every split needs at least one image",
        ));
    }
    for dir in [TRAIN_GOOD, TEST_GOOD, TEST_DEFECT, GROUND_TRUTH] {
        let d = out_dir.join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut jobs: Vec<(&str, usize)> = Vec::new();
    jobs.extend((0..counts.train).map(|i| (TRAIN_GOOD, i)));
    jobs.extend((0..counts.test_normal).map(|i| (TEST_GOOD, i)));
    jobs.extend((0..counts.test_defect).map(|i| (TEST_DEFECT, i)));
    exec.try_map(&jobs, |&(split, i)| -> Result<()> {
        let clean = corpus_texture(texture, split, i)?;
        if split == TEST_DEFECT {
            let spec = DefectSpec {
                seed: defect_seed(defect, i),
                ..defect.clone()
            };
            let (img, mask) = inject_defect(&clean, &spec)?;
            save_image(&img, out_dir.join(split).join(file_name(i)))?;
            save_image(
                &mask.to_image(),
                out_dir.join(GROUND_TRUTH).join(format!("{i:03}_mask.png")),
            )
        } else {
            save_image(&clean, out_dir.join(split).join(file_name(i)))
        }
    })?;
    Ok(())
}
