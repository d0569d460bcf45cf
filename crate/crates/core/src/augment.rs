//! Random shear, zoom and flip augmentation for training.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    /// Shear factor is drawn uniformly from `[-shear_range, shear_range]`.
    pub shear_range: f64,
    /// Zoom factor is drawn uniformly from `[1 - zoom_range, 1 + zoom_range]`.
    pub zoom_range: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            shear_range: 0.2,
            zoom_range: 0.2,
            horizontal_flip: true,
            vertical_flip: true,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            shear_range: 0.0,
            zoom_range: 0.0,
            horizontal_flip: false,
            vertical_flip: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.shear_range) {
            return Err(Error::invalid("shear_range", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.zoom_range) {
            return Err(Error::invalid("zoom_range", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Draws one transform. Always consumes four values from `rng`.
    pub fn draw(&self, rng: &mut Rng) -> AugmentDraw {
        let shear = self.shear_range * (2.0 * rng.gen::<f64>() - 1.0);
        let zoom = 1.0 + self.zoom_range * (2.0 * rng.gen::<f64>() - 1.0);
        let flip_h = rng.gen_bool(0.5);
        let flip_v = rng.gen_bool(0.5);
        AugmentDraw {
            shear,
            zoom,
            flip_horizontal: self.horizontal_flip && flip_h,
            flip_vertical: self.vertical_flip && flip_v,
        }
    }
}

/// One concrete realisation of an [`AugmentSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub shear: f64,
    pub zoom: f64,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        shear: 0.0,
        zoom: 1.0,
        flip_horizontal: false,
        flip_vertical: false,
    };

    /// Shear along x, then zoom about the image centre, then flips.
    /// Bilinear resampling; out-of-range samples replicate the nearest edge.
    pub fn apply(&self, image: &ImageTensor) -> ImageTensor {
        let mut out = if self.shear == 0.0 && self.zoom == 1.0 {
            image.clone()
        } else {
            self.warp(image)
        };
        if self.flip_horizontal {
            out = out.flip_horizontal();
        }
        if self.flip_vertical {
            out = out.flip_vertical();
        }
        out
    }

    fn warp(&self, image: &ImageTensor) -> ImageTensor {
        let (h, w, ch) = image.shape();
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let mut data = Vec::with_capacity(h * w * ch);
        for c in 0..ch {
            for y in 0..h {
                let sy = (y as f64 - cy) / self.zoom;
                for x in 0..w {
                    let sx = (x as f64 - cx) / self.zoom - self.shear * sy;
                    data.push(image.sample_bilinear(c, sy + cy, sx + cx));
                }
            }
        }
        ImageTensor::from_clamped(h, w, ch, data).expect("warp preserves shape")
    }
}

pub fn augment(image: &ImageTensor, spec: &AugmentSpec, rng: &mut Rng) -> ImageTensor {
    spec.draw(rng).apply(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn ramp() -> ImageTensor {
        ImageTensor::from_fn(16, 16, |y, x| ((y * 7 + x * 3) % 16) as f64 / 15.0).unwrap()
    }

    #[test]
    fn identity_spec_is_exact_identity() {
        let img = ramp();
        let mut rng = seed::rng(3);
        for _ in 0..5 {
            assert_eq!(augment(&img, &AugmentSpec::identity(), &mut rng), img);
        }
    }

    #[test]
    fn double_horizontal_flip_restores() {
        let img = ramp();
        let draw = AugmentDraw {
            flip_horizontal: true,
            ..AugmentDraw::IDENTITY
        };
        assert_ne!(draw.apply(&img), img);
        assert_eq!(draw.apply(&draw.apply(&img)), img);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let img = ramp();
        let spec = AugmentSpec::default();
        let a = augment(&img, &spec, &mut seed::rng(11));
        let b = augment(&img, &spec, &mut seed::rng(11));
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a, b);
    }

    #[test]
    fn shape_and_range_preserved() {
        let img = ImageTensor::from_fn(12, 20, |y, x| ((x + y) % 2) as f64).unwrap();
        let spec = AugmentSpec {
            shear_range: 0.5,
            zoom_range: 0.5,
            ..AugmentSpec::default()
        };
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let out = augment(&img, &spec, &mut rng);
            assert_eq!(out.shape(), img.shape());
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let spec = AugmentSpec::default();
        let mut rng = seed::rng(9);
        for _ in 0..200 {
            let d = spec.draw(&mut rng);
            assert!(d.shear.abs() <= 0.2);
            assert!((0.8..=1.2).contains(&d.zoom));
        }
    }

    #[test]
    fn zoom_keeps_constant_image() {
        let img = ImageTensor::filled(8, 8, 1, 0.4).unwrap();
        let d = AugmentDraw {
            zoom: 0.8,
            shear: 0.1,
            ..AugmentDraw::IDENTITY
        };
        assert!(d.apply(&img).data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn validation() {
        assert!(AugmentSpec::default().validate().is_ok());
        let bad = AugmentSpec {
            zoom_range: 1.0,
            ..AugmentSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
