//! Skip-connected convolutional autoencoder with hand-written
//! backpropagation and Adam.
//!
//! Encoder: one `conv(k×k, same) → ReLU` block per level with a 2×2 max-pool
//! between levels. Decoder: per level, nearest ×2 upsample, concatenate the
//! encoder activation of the same resolution, `conv → ReLU`. A final conv to
//! the input channel count followed by a logistic sigmoid produces the
//! reconstruction.

mod adam;
mod checkpoint;
pub mod layers;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use model::{ForwardTrace, Gradients, ModelWeights};
pub use train::{
    load_training_images, train, train_from, train_images, write_training_log, ConstantLr,
    LrSchedule, TrainConfig, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// One entry per depth level, shallowest first.
    pub encoder_channels: Vec<usize>,
    pub kernel_size: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_height: 256,
            input_width: 256,
            input_channels: 3,
            encoder_channels: vec![64, 128, 256, 512, 512],
            kernel_size: 3,
        }
    }
}

/// Shape and parameter offsets of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvLayer {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + self.out_channels
    }
}

impl Architecture {
    /// Small grayscale profile used for desk-scale runs.
    pub fn desk(size: usize, encoder_channels: Vec<usize>) -> Self {
        Self {
            input_height: size,
            input_width: size,
            input_channels: 1,
            encoder_channels,
            kernel_size: 3,
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let depth = self.depth();
        if depth < 2 {
            return Err(Error::invalid(
                "encoder_channels",
                "depth must be at least 2",
            ));
        }
        if self.encoder_channels.contains(&0) {
            return Err(Error::invalid(
                "encoder_channels",
                "channel counts must be positive",
            ));
        }
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(Error::invalid("input_channels", "must be 1 or 3"));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("kernel_size", "must be odd and positive"));
        }
        let factor = 1usize << (depth - 1);
        for (name, side) in [
            ("input_height", self.input_height),
            ("input_width", self.input_width),
        ] {
            if side == 0 || side % factor != 0 {
                return Err(Error::invalid(
                    name,
                    format!("{side} is not a positive multiple of 2^(depth-1) = {factor}"),
                ));
            }
        }
        Ok(())
    }

    /// Convolution layers in declaration order: encoder levels shallow to
    /// deep, decoder levels deep to shallow, then the output conv.
    pub fn layers(&self) -> Vec<ConvLayer> {
        let enc = &self.encoder_channels;
        let depth = enc.len();
        let k = self.kernel_size;
        let mut shapes = Vec::with_capacity(2 * depth);
        for i in 0..depth {
            let inp = if i == 0 {
                self.input_channels
            } else {
                enc[i - 1]
            };
            shapes.push((inp, enc[i]));
        }
        for i in (0..depth.saturating_sub(1)).rev() {
            shapes.push((enc[i + 1] + enc[i], enc[i]));
        }
        shapes.push((enc[0], self.input_channels));

        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(in_channels, out_channels)| {
                let weight_offset = offset;
                let bias_offset = offset + out_channels * in_channels * k * k;
                offset = bias_offset + out_channels;
                ConvLayer {
                    in_channels,
                    out_channels,
                    kernel: k,
                    weight_offset,
                    bias_offset,
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(ConvLayer::param_count).sum()
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.input_height, self.input_width, self.input_channels)
    }

    pub(crate) fn check_input(&self, image: &ImageTensor) -> Result<()> {
        if image.shape() != self.input_shape() {
            return Err(Error::shape(
                format!("{:?} (h, w, c)", self.input_shape()),
                format!("{:?}", image.shape()),
            ));
        }
        Ok(())
    }
}

/// `lambda_l1 · mean|x − r| + lambda_l2 · mean (x − r)²` over every sample.
pub fn recon_loss(x: &ImageTensor, r: &ImageTensor, lambda_l1: f64, lambda_l2: f64) -> Result<f64> {
    if x.shape() != r.shape() {
        return Err(Error::shape(
            format!("{:?}", x.shape()),
            format!("{:?}", r.shape()),
        ));
    }
    Ok(loss_slices(x.data(), r.data(), lambda_l1, lambda_l2))
}

pub(crate) fn loss_slices(x: &[f64], r: &[f64], lambda_l1: f64, lambda_l2: f64) -> f64 {
    let n = x.len() as f64;
    let (mut l1, mut l2) = (0.0, 0.0);
    for (a, b) in x.iter().zip(r) {
        let d = a - b;
        l1 += d.abs();
        l2 += d * d;
    }
    lambda_l1 * l1 / n + lambda_l2 * l2 / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let ones = ImageTensor::filled(4, 4, 1, 1.0).unwrap();
        let zeros = ImageTensor::filled(4, 4, 1, 0.0).unwrap();
        assert_eq!(recon_loss(&ones, &ones, 1.0, 100.0).unwrap(), 0.0);
        assert!((recon_loss(&ones, &zeros, 1.0, 100.0).unwrap() - 101.0).abs() < 1e-12);
        let x = ImageTensor::new(1, 1, 1, vec![0.5]).unwrap();
        let r = ImageTensor::new(1, 1, 1, vec![0.25]).unwrap();
        assert!((recon_loss(&x, &r, 1.0, 100.0).unwrap() - 6.5).abs() < 1e-12);
        assert!(recon_loss(&x, &ones, 1.0, 1.0).is_err());
    }

    #[test]
    fn toy_parameter_count() {
        let arch = Architecture::desk(32, vec![8, 16]);
        // enc0: 8·1·9+8, enc1: 16·8·9+16, dec0: 8·(16+8)·9+8, out: 1·8·9+1
        let expected = (8 * 9 + 8) + (16 * 8 * 9 + 16) + (8 * 24 * 9 + 8) + (9 * 8 + 1);
        assert_eq!(expected, 3057);
        assert_eq!(arch.param_count(), expected);
        let layers = arch.layers();
        assert_eq!(layers.len(), 4);
        assert_eq!(layers[2].in_channels, 24);
        assert_eq!(layers[3].bias_offset + 1, 3057);
    }

    #[test]
    fn validation_rules() {
        assert!(Architecture::default().validate().is_ok());
        assert!(Architecture::desk(32, vec![8]).validate().is_err());
        assert!(Architecture::desk(30, vec![8, 16, 32]).validate().is_err());
        assert!(Architecture::desk(32, vec![8, 16, 32]).validate().is_ok());
        let mut even_kernel = Architecture::desk(32, vec![8, 16]);
        even_kernel.kernel_size = 2;
        assert!(even_kernel.validate().is_err());
    }
}
