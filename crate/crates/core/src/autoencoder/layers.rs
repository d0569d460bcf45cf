//! Planar `(channels, height, width)` feature maps and the layer kernels the
//! autoencoder is built from. Convolutions go through im2col + GEMM.

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

/// `c = a * b` (overwrite) for row-major `a: m×k`, `b: k×n` with explicit
/// strides, accumulating into `c` when `accumulate` is set.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides describe matrices that lie inside the given slices;
    // callers pass dimensions derived from the same buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Column matrix of shape `(in_ch * k * k) × (h * w)` for a same-padded conv.
fn im2col(input: &FeatureMap, k: usize) -> Vec<f64> {
    let (h, w) = input.spatial();
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut col = vec![0.0; input.channels * k * k * hw];
    for c in 0..input.channels {
        let plane = &input.data[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for x in x0..x1 {
                        dst_row[x] = src_row[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add of a column-matrix gradient back onto the input plane layout.
fn col2im(col: &[f64], channels: usize, h: usize, w: usize, k: usize) -> FeatureMap {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut out = FeatureMap::zeros(channels, h, w);
    for c in 0..channels {
        let plane = &mut out.data[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src_row = &src[y * w..(y + 1) * w];
                    for x in x0..x1 {
                        dst_row[(x as isize + dx) as usize] += src_row[x];
                    }
                }
            }
        }
    }
    out
}

/// Same-padded stride-1 convolution. `weight` is `out × in × k × k`.
pub fn conv2d(input: &FeatureMap, weight: &[f64], bias: &[f64], k: usize) -> FeatureMap {
    let out_ch = bias.len();
    let ckk = input.channels * k * k;
    debug_assert_eq!(weight.len(), out_ch * ckk);
    let hw = input.plane_len();
    let col = im2col(input, k);
    let mut out = FeatureMap::zeros(out_ch, input.height, input.width);
    for (o, &b) in bias.iter().enumerate() {
        out.data[o * hw..(o + 1) * hw].fill(b);
    }
    gemm(
        out_ch,
        ckk,
        hw,
        weight,
        (ckk as isize, 1),
        &col,
        (hw as isize, 1),
        &mut out.data,
        true,
    );
    out
}

/// Backward pass of [`conv2d`]. Accumulates into `grad_weight`/`grad_bias`
/// and returns the gradient with respect to `input`.
pub fn conv2d_backward(
    input: &FeatureMap,
    weight: &[f64],
    k: usize,
    grad_out: &FeatureMap,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> FeatureMap {
    let out_ch = grad_out.channels;
    let ckk = input.channels * k * k;
    let hw = input.plane_len();
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out.data[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    let col = im2col(input, k);
    // dW += dY · colᵀ
    gemm(
        out_ch,
        hw,
        ckk,
        &grad_out.data,
        (hw as isize, 1),
        &col,
        (1, hw as isize),
        grad_weight,
        true,
    );
    // dcol = Wᵀ · dY
    let mut dcol = vec![0.0; ckk * hw];
    gemm(
        ckk,
        out_ch,
        hw,
        weight,
        (1, ckk as isize),
        &grad_out.data,
        (hw as isize, 1),
        &mut dcol,
        false,
    );
    col2im(&dcol, input.channels, input.height, input.width, k)
}

pub fn relu_in_place(map: &mut FeatureMap) {
    for v in &mut map.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward ReLU output was not positive.
pub fn relu_backward_in_place(output: &FeatureMap, grad: &mut FeatureMap) {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 stride-2 max-pool. Returns the pooled map and, per output element,
/// the flat input index that won (first maximum in row-major window order).
pub fn max_pool2(input: &FeatureMap) -> (FeatureMap, Vec<usize>) {
    let (h, w) = input.spatial();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    let mut argmax = vec![0usize; out.data.len()];
    for c in 0..input.channels {
        let base = c * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + (2 * y) * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if input.data[idx] > input.data[best] {
                        best = idx;
                    }
                }
                let o = (c * oh + y) * ow + x;
                out.data[o] = input.data[best];
                argmax[o] = best;
            }
        }
    }
    (out, argmax)
}

pub fn max_pool2_backward(
    grad_out: &FeatureMap,
    argmax: &[usize],
    input_shape: (usize, usize, usize),
) -> FeatureMap {
    let (c, h, w) = input_shape;
    let mut grad = FeatureMap::zeros(c, h, w);
    for (g, &idx) in grad_out.data.iter().zip(argmax) {
        grad.data[idx] += g;
    }
    grad
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2(input: &FeatureMap) -> FeatureMap {
    let (h, w) = input.spatial();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = FeatureMap::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        for y in 0..oh {
            let src = (c * h + y / 2) * w;
            let dst = (c * oh + y) * ow;
            for x in 0..ow {
                out.data[dst + x] = input.data[src + x / 2];
            }
        }
    }
    out
}

/// Sums each 2×2 block: the fan-out adjoint of [`upsample2`].
pub fn upsample2_backward(grad_out: &FeatureMap) -> FeatureMap {
    let (oh, ow) = grad_out.spatial();
    let (h, w) = (oh / 2, ow / 2);
    let mut grad = FeatureMap::zeros(grad_out.channels, h, w);
    for c in 0..grad_out.channels {
        for y in 0..oh {
            let src = (c * oh + y) * ow;
            let dst = (c * h + y / 2) * w;
            for x in 0..ow {
                grad.data[dst + x / 2] += grad_out.data[src + x];
            }
        }
    }
    grad
}

/// Channel concatenation `[a; b]`.
pub fn concat(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
    debug_assert_eq!(a.spatial(), b.spatial());
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    FeatureMap {
        channels: a.channels + b.channels,
        height: a.height,
        width: a.width,
        data,
    }
}

/// Splits a concatenated gradient back into its `a` and `b` parts.
pub fn split(grad: &FeatureMap, a_channels: usize) -> (FeatureMap, FeatureMap) {
    let cut = a_channels * grad.plane_len();
    let a = FeatureMap {
        channels: a_channels,
        height: grad.height,
        width: grad.width,
        data: grad.data[..cut].to_vec(),
    };
    let b = FeatureMap {
        channels: grad.channels - a_channels,
        height: grad.height,
        width: grad.width,
        data: grad.data[cut..].to_vec(),
    };
    (a, b)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
