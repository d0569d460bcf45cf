//! Raster container and file I/O.
//!
//! [`ImageTensor`] stores samples as `f64` in `[0, 1]`, planar
//! (channel-major): the sample at channel `c`, row `y`, column `x` lives at
//! `(c * height + y) * width + x`.

use std::path::Path;

use image::{ColorType, DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Builds a tensor from planar data, rejecting values outside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(
                "dimensions",
                "height and width must be positive",
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(
                "channels",
                format!("expected 1 or 3, got {channels}"),
            ));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("data", format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageTensor::new`] but clamps into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Single-channel image from a per-pixel function; output is clamped.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::from_clamped(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    /// Rec.601 luma for RGB input; grayscale input is returned unchanged.
    pub fn to_grayscale(&self) -> ImageTensor {
        if self.channels == 1 {
            return self.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
            .collect();
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Replicates a grayscale image into `channels` planes.
    pub fn with_channels(&self, channels: usize) -> Result<ImageTensor> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, 3) => Ok(ImageTensor {
                data: self.data.repeat(3),
                channels: 3,
                ..*self
            }),
            (3, 1) => Ok(self.to_grayscale()),
            (a, b) => Err(Error::shape(
                format!("{b} channels"),
                format!("{a} channels"),
            )),
        }
    }

    pub fn flip_horizontal(&self) -> ImageTensor {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> ImageTensor {
        let mut out = self.clone();
        let (h, w) = (self.height, self.width);
        for c in 0..self.channels {
            for y in 0..h {
                let src = (c * h + y) * w;
                let dst = (c * h + (h - 1 - y)) * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        out
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, height: usize, width: usize) -> Result<ImageTensor> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(
                "dimensions",
                "height and width must be positive",
            ));
        }
        if (height, width) == (self.height, self.width) {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut data = Vec::with_capacity(height * width * self.channels);
        for c in 0..self.channels {
            for y in 0..height {
                let fy = (y as f64 + 0.5) * sy - 0.5;
                for x in 0..width {
                    let fx = (x as f64 + 0.5) * sx - 0.5;
                    data.push(self.sample_bilinear(c, fy, fx));
                }
            }
        }
        Self::from_clamped(height, width, self.channels, data)
    }

    /// Bilinear sample with coordinates clamped to the raster (edge replication).
    pub(crate) fn sample_bilinear(&self, c: usize, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        let top = self.get(c, y0, x0) * (1.0 - fx) + self.get(c, y0, x1) * fx;
        let bottom = self.get(c, y1, x0) * (1.0 - fx) + self.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// 8-bit samples, interleaved, round-half-up.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(n * self.channels);
        for i in 0..n {
            for c in 0..self.channels {
                out.push(quantize(self.data[c * n + i]));
            }
        }
        out
    }

    /// Inverse of [`ImageTensor::to_bytes`].
    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let n = height * width;
        if bytes.len() != n * channels {
            return Err(Error::shape(
                format!("{} bytes", n * channels),
                format!("{} bytes", bytes.len()),
            ));
        }
        let mut data = vec![0.0; n * channels];
        for (i, px) in bytes.chunks_exact(channels).enumerate() {
            for (c, &b) in px.iter().enumerate() {
                data[c * n + i] = f64::from(b) / 255.0;
            }
        }
        Self::new(height, width, channels, data)
    }
}

/// Round-half-up quantization of a `[0, 1]` sample to a byte.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn format_for(path: &Path) -> Option<ImageFormat> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" => Some(ImageFormat::Png),
        "ppm" | "pgm" | "pnm" | "pbm" => Some(ImageFormat::Pnm),
        _ => None,
    }
}

/// Loads an 8-bit PNG or binary PPM/PGM.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format().or_else(|| format_for(path)) {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat(path.to_path_buf()),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded.color() {
        ColorType::L8 | ColorType::La8 => {
            let buf = DynamicImage::ImageLuma8(decoded.to_luma8());
            ImageTensor::from_bytes(h, w, 1, buf.as_bytes())
        }
        ColorType::Rgb8 | ColorType::Rgba8 => {
            let buf = decoded.to_rgb8();
            ImageTensor::from_bytes(h, w, 3, buf.as_raw())
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Writes an 8-bit PNG or binary PNM, chosen by file extension.
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path).ok_or_else(|| Error::UnsupportedFormat(path.to_path_buf()))?;
    let color = if image.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &image.to_bytes(),
        image.width() as u32,
        image.height() as u32,
        color,
        format,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}
