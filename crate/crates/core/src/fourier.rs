//! 2D DFT with the unnormalised forward / `1/N²` inverse convention,
//! DC-centering shift, and the square low-frequency mask.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Row-major real-valued field, e.g. a magnitude image or a difference map.
/// Values are not restricted to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RealField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Clamped into `[0, 1]` for viewing.
    pub fn to_image(&self) -> ImageTensor {
        ImageTensor::from_clamped(self.height, self.width, 1, self.data.clone())
            .expect("field dimensions are positive")
    }

    /// Linearly rescaled so the maximum maps to 1 (all-zero stays zero).
    pub fn to_normalized_image(&self) -> ImageTensor {
        let max = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        let data = self.data.iter().map(|v| v.abs() * scale).collect();
        ImageTensor::from_clamped(self.height, self.width, 1, data)
            .expect("field dimensions are positive")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
    centered: bool,
}

impl Spectrum {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>, centered: bool) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(height * width, data.len()));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrum", "non-finite component"));
        }
        Ok(Self {
            height,
            width,
            data,
            centered,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
            centered: false,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.width + v]
    }

    fn state(&self) -> &'static str {
        if self.centered {
            "centered"
        } else {
            "uncentered"
        }
    }

    /// `log(1 + |F|)` scaled to `[0, 1]`.
    pub fn log_magnitude_image(&self) -> ImageTensor {
        let field = RealField {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|c| c.norm().ln_1p()).collect(),
        };
        field.to_normalized_image()
    }
}

fn check_square_gray(image: &ImageTensor) -> Result<usize> {
    if image.channels() != 1 {
        return Err(Error::shape(
            "1 channel",
            format!("{} channels", image.channels()),
        ));
    }
    if !image.is_square() {
        return Err(Error::shape(
            "square image",
            format!("{}x{}", image.height(), image.width()),
        ));
    }
    Ok(image.height())
}

/// Transforms rows then columns in place; `inverse` picks the sign.
fn fft2_in_place(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// `F(u,v) = Σ_x Σ_y f(x,y) e^{-j2π(ux+vy)/N}` of a square grayscale image.
pub fn dft2(image: &ImageTensor) -> Result<Spectrum> {
    let n = check_square_gray(image)?;
    let mut data: Vec<Complex64> = image
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2_in_place(&mut data, n, n, false);
    Ok(Spectrum {
        height: n,
        width: n,
        data,
        centered: false,
    })
}

/// Inverse transform with the `1/N²` factor. The spectrum must be uncentered.
pub fn idft2(spectrum: &Spectrum) -> Result<Vec<Complex64>> {
    if spectrum.centered {
        return Err(Error::SpectrumState {
            required: "uncentered",
            actual: "centered",
        });
    }
    let (h, w) = (spectrum.height, spectrum.width);
    let mut data = spectrum.data.clone();
    fft2_in_place(&mut data, h, w, true);
    let norm = 1.0 / (h * w) as f64;
    for c in &mut data {
        *c *= norm;
    }
    Ok(data)
}

/// Per-pixel modulus `|f(x, y)|` of the inverse transform.
pub fn idft2_magnitude(spectrum: &Spectrum) -> Result<RealField> {
    let data = idft2(spectrum)?;
    Ok(RealField {
        height: spectrum.height,
        width: spectrum.width,
        data: data.iter().map(|c| c.norm()).collect(),
    })
}

fn roll(spectrum: &Spectrum, dy: usize, dx: usize) -> Vec<Complex64> {
    let (h, w) = (spectrum.height, spectrum.width);
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        let ty = (y + dy) % h;
        for x in 0..w {
            out[ty * w + (x + dx) % w] = spectrum.data[y * w + x];
        }
    }
    out
}

/// Moves the DC bin from `(0, 0)` to `(⌊H/2⌋, ⌊W/2⌋)`.
pub fn shift(spectrum: &Spectrum) -> Result<Spectrum> {
    if spectrum.centered {
        return Err(Error::SpectrumState {
            required: "uncentered",
            actual: spectrum.state(),
        });
    }
    Ok(Spectrum {
        data: roll(spectrum, spectrum.height / 2, spectrum.width / 2),
        centered: true,
        ..*spectrum
    })
}

/// Exact inverse of [`shift`] for any parity.
pub fn unshift(spectrum: &Spectrum) -> Result<Spectrum> {
    if !spectrum.centered {
        return Err(Error::SpectrumState {
            required: "centered",
            actual: spectrum.state(),
        });
    }
    let (h, w) = (spectrum.height, spectrum.width);
    Ok(Spectrum {
        data: roll(spectrum, h - h / 2, w - w / 2),
        centered: false,
        ..*spectrum
    })
}

/// Binary mask over a centered `size × size` spectrum: 0 on the `tau × tau`
/// square starting at `c − ⌊tau/2⌋` with `c = ⌊size/2⌋`, 1 elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighPassMask {
    size: usize,
    tau: usize,
    values: Vec<u8>,
}

impl HighPassMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.values[u * self.size + v]
    }

    /// Half-open index range of the removed square along one axis.
    pub fn removed_range(&self) -> std::ops::Range<usize> {
        let start = self.size / 2 - self.tau / 2;
        start..start + self.tau
    }

    pub fn zeroed_bins(&self) -> Vec<(usize, usize)> {
        let r = self.removed_range();
        r.clone()
            .flat_map(|u| r.clone().map(move |v| (u, v)))
            .collect()
    }
}

pub fn make_mask(size: usize, tau: usize) -> Result<HighPassMask> {
    if size == 0 {
        return Err(Error::invalid("size", "must be positive"));
    }
    if tau > size {
        return Err(Error::invalid(
            "tau",
            format!("{tau} exceeds spectrum side {size}"),
        ));
    }
    let mut mask = HighPassMask {
        size,
        tau,
        values: vec![1; size * size],
    };
    let r = mask.removed_range();
    for u in r.clone() {
        for v in r.clone() {
            mask.values[u * size + v] = 0;
        }
    }
    Ok(mask)
}

pub fn apply_mask(spectrum: &Spectrum, mask: &HighPassMask) -> Result<Spectrum> {
    if !spectrum.centered {
        return Err(Error::SpectrumState {
            required: "centered",
            actual: "uncentered",
        });
    }
    if spectrum.height != mask.size || spectrum.width != mask.size {
        return Err(Error::shape(
            format!("{0}x{0}", mask.size),
            format!("{}x{}", spectrum.height, spectrum.width),
        ));
    }
    let data = spectrum
        .data
        .iter()
        .zip(&mask.values)
        .map(|(&c, &m)| if m == 1 { c } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(Spectrum { data, ..*spectrum })
}

/// `|idft2(unshift(apply_mask(shift(dft2(image)), mask(tau))))|`.
pub fn highpass_filter(image: &ImageTensor, tau: usize) -> Result<RealField> {
    let spectrum = dft2(image)?;
    let mask = make_mask(spectrum.height, tau)?;
    highpass_with_mask(&spectrum, &mask)
}

/// High-pass of an already-transformed (uncentered) spectrum.
pub fn highpass_with_mask(spectrum: &Spectrum, mask: &HighPassMask) -> Result<RealField> {
    let filtered = apply_mask(&shift(spectrum)?, mask)?;
    idft2_magnitude(&unshift(&filtered)?)
}
