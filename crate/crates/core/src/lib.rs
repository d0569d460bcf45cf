//! Texture defect detection by template differencing in the high-frequency band.
//!
//! The pipeline stages are:
//!
//! 1. **Image** – raster container, PNG/PNM I/O, grayscale projection and
//!    training-time augmentation ([`image`], [`augment`]).
//! 2. **Autoencoder** – a small skip-connected convolutional autoencoder
//!    trained on defect-free images with a weighted L1 + L2 loss
//!    ([`autoencoder`]).
//! 3. **Fourier** – 2D DFT, DC-centering shift and a square low-frequency
//!    mask that leaves only the high band ([`fourier`]).
//! 4. **Detector** – reconstruct, high-pass, difference against a normal
//!    reconstructed template, threshold and count ([`detector`]).
//! 5. **Eval** – AUC, (tau, th) grid search, ablation and report emission
//!    ([`eval`]).
//!
//! [`synth`] generates periodic texture corpora with injected defects in the
//! same folder layout that [`dataset`] ingests.

pub mod augment;
pub mod autoencoder;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod fourier;
pub mod image;
pub mod par;
pub mod seed;
pub mod synth;

pub use crate::error::{Error, Result};
pub use crate::image::ImageTensor;
pub use crate::par::Exec;
