//! Dataset folder ingestion.
//!
//! A category folder holds `train/good`, `test/good` and one or more defect
//! folders under `test/` (`test/defect` for generated corpora; any other
//! name, as in MVTec AD, also counts as defective). `ground_truth/` is
//! ignored.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, ImageTensor};

pub const TRAIN_GOOD: &str = "train/good";
pub const TEST_GOOD: &str = "test/good";
pub const TEST_DEFECT: &str = "test/defect";
pub const GROUND_TRUTH: &str = "ground_truth/defect";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Defect,
}

impl Label {
    pub fn is_defect(self) -> bool {
        self == Label::Defect
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Defect => "defect",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub label: Label,
    pub image: ImageTensor,
}

/// Optional normalisation applied while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Resize to `(height, width)` when the file differs.
    pub size: Option<(usize, usize)>,
    /// Convert to this many channels (1 or 3).
    pub channels: Option<usize>,
}

impl LoadOptions {
    pub fn matching(height: usize, width: usize, channels: usize) -> Self {
        Self {
            size: Some((height, width)),
            channels: Some(channels),
        }
    }

    pub fn apply(&self, image: ImageTensor) -> Result<ImageTensor> {
        let image = match self.size {
            Some((h, w)) => image.resize(h, w)?,
            None => image,
        };
        match self.channels {
            Some(c) => image.with_channels(c),
            None => Ok(image),
        }
    }
}

pub fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| {
                matches!(
                    e.to_ascii_lowercase().as_str(),
                    "png" | "ppm" | "pgm" | "pnm"
                )
            })
            .unwrap_or(false)
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image_file(p))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every image in `dir`; ids are file names.
pub fn load_folder(dir: &Path, options: Option<LoadOptions>) -> Result<Vec<Sample>> {
    let options = options.unwrap_or_default();
    list_images(dir)?
        .into_iter()
        .map(|path| {
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Sample {
                id,
                image: options.apply(load_image(&path)?)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub category: String,
    pub train: Vec<Sample>,
    /// Test images in id order, normals and defects interleaved as listed.
    pub test: Vec<LabeledSample>,
}

impl Dataset {
    /// Loads a category folder. Test ids are paths relative to `root`.
    pub fn load(root: &Path, options: LoadOptions) -> Result<Self> {
        let category = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_owned());
        let train = Self::load_split(root, TRAIN_GOOD, options)?;
        let test = Self::load_test(root, options)?;
        Ok(Self {
            category,
            train,
            test,
        })
    }

    /// Loads only the test split.
    pub fn load_test(root: &Path, options: LoadOptions) -> Result<Vec<LabeledSample>> {
        let test_dir = root.join("test");
        if !test_dir.is_dir() {
            return Err(Error::MissingFile(test_dir));
        }
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(&test_dir)
            .map_err(|e| Error::io(&test_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        let mut test = Vec::new();
        for sub in subdirs {
            let name = sub
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let label = if name == "good" {
                Label::Normal
            } else {
                Label::Defect
            };
            for s in Self::load_split(root, &format!("test/{name}"), options)? {
                test.push(LabeledSample {
                    id: s.id,
                    label,
                    image: s.image,
                });
            }
        }
        Ok(test)
    }

    /// Loads `root/<split>`, prefixing ids with the split path.
    pub fn load_split(root: &Path, split: &str, options: LoadOptions) -> Result<Vec<Sample>> {
        Ok(load_folder(&root.join(split), Some(options))?
            .into_iter()
            .map(|s| Sample {
                id: format!("{split}/{}", s.id),
                image: s.image,
            })
            .collect())
    }

    pub fn test_normals(&self) -> impl Iterator<Item = &LabeledSample> {
        self.test.iter().filter(|s| s.label == Label::Normal)
    }

    pub fn count(&self, label: Label) -> usize {
        self.test.iter().filter(|s| s.label == label).count()
    }

    /// Errors unless the test split holds both classes.
    pub fn require_both_classes(&self) -> Result<()> {
        let (p, n) = (self.count(Label::Defect), self.count(Label::Normal));
        if p == 0 || n == 0 {
            return Err(Error::SingleClass {
                positives: p,
                negatives: n,
            });
        }
        Ok(())
    }
}
