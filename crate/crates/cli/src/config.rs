//! JSON run configuration.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use texscan::autoencoder::{Architecture, TrainConfig};
use texscan::detector::DetectionParams;
use texscan::eval::SweepRanges;
use texscan::synth::{CorpusCounts, DefectSpec, TextureSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub texture: TextureSpec,
    pub defect: DefectSpec,
    pub counts: CorpusCounts,
}

/// Every section falls back to its defaults when omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub detection: DetectionParams,
    pub sweep: SweepRanges,
    pub corpus: CorpusConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("field `{path}`: {}", e.into_inner())
        })
    }

    /// Reseeds every stochastic stage from one master seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.train.augment.seed = seed;
        self.corpus.texture.seed = seed;
        self.corpus.defect.seed = seed;
    }

    /// Checks every section; errors name the offending field path.
    pub fn validate(&self) -> Result<()> {
        let arch = &self.architecture;
        section("architecture", arch.validate())?;
        if arch.input_height != arch.input_width {
            return Err(anyhow!(
                "invalid config: architecture.input_width: must equal input_height (square images)"
            ));
        }
        section("train.augment", self.train.augment.validate())?;
        section("train", self.train.validate())?;
        section("detection", self.detection.validate(arch.input_height))?;
        section("sweep", self.sweep.validate(arch.input_height))?;
        section("corpus.texture", self.corpus.texture.validate())?;
        section(
            "corpus.defect",
            self.corpus.defect.validate(self.corpus.texture.size),
        )?;
        let c = self.corpus.counts;
        for (name, n) in [
            ("train", c.train),
            ("test_normal", c.test_normal),
            ("test_defect", c.test_defect),
        ] {
            if n == 0 {
                return Err(anyhow!(
                    "invalid config: corpus.counts.{name}: must be at least 1"
                ));
            }
        }
        Ok(())
    }
}

fn section(prefix: &str, result: texscan::Result<()>) -> Result<()> {
    result.map_err(|e| match e {
        texscan::Error::InvalidParameter { name, reason } => {
            anyhow!("invalid config: {prefix}.{name}: {reason}")
        }
        other => anyhow!("invalid config: {prefix}: {other}"),
    })
}
