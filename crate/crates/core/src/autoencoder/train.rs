use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Architecture, ModelWeights};
use crate::augment::AugmentSpec;
use crate::dataset;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::par::Exec;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub augment: AugmentSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 500,
            batch_size: 16,
            lambda_l1: 1.0,
            lambda_l2: 100.0,
            augment: AugmentSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l2 >= 0.0) {
            return Err(Error::invalid(
                "lambda",
                "loss weights must be non-negative",
            ));
        }
        self.augment.validate()
    }
}

/// Learning rate as a function of the zero-based epoch.
pub trait LrSchedule {
    fn learning_rate(&self, base: f64, epoch: usize) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantLr;

impl LrSchedule for ConstantLr {
    fn learning_rate(&self, base: f64, _epoch: usize) -> f64 {
        base
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelWeights,
    /// Mean per-image loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains from scratch on in-memory images with a constant learning rate.
pub fn train_images(
    images: &[ImageTensor],
    arch: &Architecture,
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    let model = ModelWeights::init(arch.clone(), seed::derive(config.seed, "init", 0))?;
    train_from(model, images, config, &ConstantLr, exec, |_, _| {})
}

/// Continues training `model`. `on_epoch(epoch, mean_loss)` fires after
/// every epoch.
pub fn train_from(
    mut model: ModelWeights,
    images: &[ImageTensor],
    config: &TrainConfig,
    schedule: &dyn LrSchedule,
    exec: Exec,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for img in images {
        model.architecture().check_input(img)?;
    }
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, "shuffle", 0));
    let mut augment_rng = seed::rng(seed::derive(config.seed, "augment", config.augment.seed));
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = schedule.learning_rate(config.learning_rate, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            // Draws happen sequentially so the stream is independent of `exec`.
            let batch: Vec<ImageTensor> = chunk
                .iter()
                .map(|&i| crate::augment::augment(&images[i], &config.augment, &mut augment_rng))
                .collect();
            let (loss, grads) =
                model.backward(&batch, &batch, config.lambda_l1, config.lambda_l2, exec)?;
            if !loss.is_finite() {
                return Err(Error::invalid(
                    "learning_rate",
                    format!("training diverged at epoch {epoch}"),
                ));
            }
            model.adam_step(&grads, lr)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / images.len() as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Loads every image in `dir`, matched to the architecture's channel count.
pub fn load_training_images(dir: &Path, arch: &Architecture) -> Result<Vec<ImageTensor>> {
    let samples = dataset::load_folder(dir, None)?;
    samples
        .into_iter()
        .map(|s| {
            let img = s.image.with_channels(arch.input_channels)?;
            arch.check_input(&img)?;
            Ok(img)
        })
        .collect()
}

/// Trains on the images found in `train_dir`.
pub fn train(
    train_dir: &Path,
    arch: &Architecture,
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    arch.validate()?;
    config.validate()?;
    let images = load_training_images(train_dir, arch)?;
    if images.is_empty() {
        return Err(Error::Empty("training set"));
    }
    train_images(&images, arch, config, exec)
}

/// CSV `epoch,mean_loss`, epochs numbered from 1.
pub fn write_training_log(path: &Path, epoch_losses: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in epoch_losses.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, loss).expect("write to String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
