use rand::Rng as _;

use super::adam::AdamState;
use super::layers::{self, FeatureMap};
use super::{loss_slices, Architecture, ConvLayer};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::par::Exec;
use crate::seed;

/// Autoencoder parameters, flat in declaration order (per layer: kernel
/// `out × in × k × k`, then bias), plus the Adam state that trains them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    arch: Architecture,
    layers: Vec<ConvLayer>,
    params: Vec<f64>,
    adam: AdamState,
}

/// Gradient with the same flat layout as [`ModelWeights::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Every intermediate of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input of each encoder conv (the image, then pooled activations).
    pub encoder_inputs: Vec<FeatureMap>,
    /// Post-ReLU activation of each encoder level.
    pub encoder_outputs: Vec<FeatureMap>,
    pub pool_argmax: Vec<Vec<usize>>,
    /// Concatenated input of each decoder conv, deepest level first.
    pub decoder_inputs: Vec<FeatureMap>,
    pub decoder_outputs: Vec<FeatureMap>,
    /// Sigmoid output.
    pub output: FeatureMap,
}

impl ForwardTrace {
    /// Spatial size of every encoder activation, shallowest first.
    pub fn encoder_sizes(&self) -> Vec<(usize, usize)> {
        self.encoder_outputs
            .iter()
            .map(FeatureMap::spatial)
            .collect()
    }
}

fn to_map(image: &ImageTensor) -> FeatureMap {
    let (h, w, c) = image.shape();
    FeatureMap {
        channels: c,
        height: h,
        width: w,
        data: image.data().to_vec(),
    }
}

impl ModelWeights {
    /// He-uniform kernels (`±sqrt(6 / fan_in)`) and zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = seed::rng(seed);
        for layer in model.layers.clone() {
            let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for w in model.weight_mut(&layer) {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Self::from_parts(arch, vec![0.0; n], AdamState::new(n))
    }

    pub fn from_parts(arch: Architecture, params: Vec<f64>, adam: AdamState) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        if params.len() != n || adam.m.len() != n || adam.v.len() != n {
            return Err(Error::shape(
                format!("{n} parameters"),
                format!(
                    "{} params, {}/{} moments",
                    params.len(),
                    adam.m.len(),
                    adam.v.len()
                ),
            ));
        }
        if params
            .iter()
            .chain(&adam.m)
            .chain(&adam.v)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("params", "non-finite value"));
        }
        Ok(Self {
            layers: arch.layers(),
            arch,
            params,
            adam,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn weight(&self, layer: &ConvLayer) -> &[f64] {
        &self.params[layer.weight_offset..layer.bias_offset]
    }

    pub fn bias(&self, layer: &ConvLayer) -> &[f64] {
        &self.params[layer.bias_offset..layer.bias_offset + layer.out_channels]
    }

    pub fn weight_mut(&mut self, layer: &ConvLayer) -> &mut [f64] {
        &mut self.params[layer.weight_offset..layer.bias_offset]
    }

    pub fn bias_mut(&mut self, layer: &ConvLayer) -> &mut [f64] {
        &mut self.params[layer.bias_offset..layer.bias_offset + layer.out_channels]
    }

    fn conv(&self, idx: usize, input: &FeatureMap) -> FeatureMap {
        let layer = &self.layers[idx];
        layers::conv2d(input, self.weight(layer), self.bias(layer), layer.kernel)
    }

    pub fn trace(&self, image: &ImageTensor) -> Result<ForwardTrace> {
        self.arch.check_input(image)?;
        let depth = self.arch.depth();
        let mut encoder_inputs = Vec::with_capacity(depth);
        let mut encoder_outputs: Vec<FeatureMap> = Vec::with_capacity(depth);
        let mut pool_argmax = Vec::with_capacity(depth - 1);
        for i in 0..depth {
            let input = if i == 0 {
                to_map(image)
            } else {
                let (pooled, argmax) = layers::max_pool2(&encoder_outputs[i - 1]);
                pool_argmax.push(argmax);
                pooled
            };
            let mut out = self.conv(i, &input);
            layers::relu_in_place(&mut out);
            encoder_inputs.push(input);
            encoder_outputs.push(out);
        }

        let mut decoder_inputs = Vec::with_capacity(depth - 1);
        let mut decoder_outputs: Vec<FeatureMap> = Vec::with_capacity(depth - 1);
        for (step, level) in (0..depth - 1).rev().enumerate() {
            let below = decoder_outputs
                .last()
                .unwrap_or(&encoder_outputs[depth - 1]);
            let cat = layers::concat(&layers::upsample2(below), &encoder_outputs[level]);
            let mut out = self.conv(depth + step, &cat);
            layers::relu_in_place(&mut out);
            decoder_inputs.push(cat);
            decoder_outputs.push(out);
        }

        let last = decoder_outputs.last().expect("depth >= 2");
        let mut output = self.conv(self.layers.len() - 1, last);
        for v in &mut output.data {
            *v = layers::sigmoid(*v);
        }
        Ok(ForwardTrace {
            encoder_inputs,
            encoder_outputs,
            pool_argmax,
            decoder_inputs,
            decoder_outputs,
            output,
        })
    }

    /// Reconstruction of a single image.
    pub fn reconstruct(&self, image: &ImageTensor) -> Result<ImageTensor> {
        let out = self.trace(image)?.output;
        ImageTensor::new(out.height, out.width, out.channels, out.data)
    }

    pub fn forward(&self, batch: &[ImageTensor], exec: Exec) -> Result<Vec<ImageTensor>> {
        exec.try_map(batch, |img| self.reconstruct(img))
    }

    /// Mean batch loss and its exact gradient. Per-item gradients may be
    /// computed in parallel; they are summed in batch order.
    pub fn backward(
        &self,
        inputs: &[ImageTensor],
        targets: &[ImageTensor],
        lambda_l1: f64,
        lambda_l2: f64,
        exec: Exec,
    ) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::shape(
                format!("{} targets", inputs.len()),
                format!("{} targets", targets.len()),
            ));
        }
        let scale = 1.0 / inputs.len() as f64;
        let pairs: Vec<(&ImageTensor, &ImageTensor)> = inputs.iter().zip(targets).collect();
        let parts = exec.try_map(&pairs, |(x, t)| {
            self.sample_gradient(x, t, lambda_l1, lambda_l2, scale)
        })?;
        let mut grads = Gradients::zeros(self.params.len());
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l * scale;
            for (acc, v) in grads.values.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        Ok((loss, grads))
    }

    fn sample_gradient(
        &self,
        input: &ImageTensor,
        target: &ImageTensor,
        lambda_l1: f64,
        lambda_l2: f64,
        scale: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if target.shape() != input.shape() {
            return Err(Error::shape(
                format!("{:?}", input.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        let trace = self.trace(input)?;
        let depth = self.arch.depth();
        let out = &trace.output;
        let t = target.data();
        let loss = loss_slices(t, &out.data, lambda_l1, lambda_l2);

        let n = out.data.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut d = FeatureMap::zeros(out.channels, out.height, out.width);
        for ((g, &r), &x) in d.data.iter_mut().zip(&out.data).zip(t) {
            let diff = r - x;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            let dr = scale * (lambda_l1 * sign + 2.0 * lambda_l2 * diff) / n;
            *g = dr * r * (1.0 - r);
        }

        let mut layer_backward = |idx: usize, input: &FeatureMap, g_out: &FeatureMap| {
            let layer = self.layers[idx];
            let (gw, gb) = grad[layer.weight_offset..layer.bias_offset + layer.out_channels]
                .split_at_mut(layer.weight_len());
            layers::conv2d_backward(input, self.weight(&layer), layer.kernel, g_out, gw, gb)
        };

        let last_dec = trace.decoder_outputs.last().expect("depth >= 2");
        let mut d_cur = layer_backward(self.layers.len() - 1, last_dec, &d);

        // Skip gradients arriving at each encoder level.
        let mut d_enc: Vec<Option<FeatureMap>> = vec![None; depth];
        for (step, level) in (0..depth - 1).rev().enumerate().rev() {
            layers::relu_backward_in_place(&trace.decoder_outputs[step], &mut d_cur);
            let d_cat = layer_backward(depth + step, &trace.decoder_inputs[step], &d_cur);
            let up_channels = d_cat.channels - self.arch.encoder_channels[level];
            let (d_up, d_skip) = layers::split(&d_cat, up_channels);
            d_enc[level] = Some(d_skip);
            d_cur = layers::upsample2_backward(&d_up);
        }

        for level in (0..depth).rev() {
            if let Some(skip) = d_enc[level].take() {
                for (a, b) in d_cur.data.iter_mut().zip(&skip.data) {
                    *a += b;
                }
            }
            layers::relu_backward_in_place(&trace.encoder_outputs[level], &mut d_cur);
            let d_in = layer_backward(level, &trace.encoder_inputs[level], &d_cur);
            if level > 0 {
                let prev = &trace.encoder_outputs[level - 1];
                d_cur = layers::max_pool2_backward(
                    &d_in,
                    &trace.pool_argmax[level - 1],
                    (prev.channels, prev.height, prev.width),
                );
            }
        }
        Ok((loss, grad))
    }

    /// One Adam update with the fixed betas and epsilon.
    pub fn adam_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.values.len() != self.params.len() {
            return Err(Error::shape(
                format!("{} gradients", self.params.len()),
                format!("{}", grads.values.len()),
            ));
        }
        self.adam
            .step(&mut self.params, &grads.values, learning_rate);
        Ok(())
    }
}
