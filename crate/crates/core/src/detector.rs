//! Defect scoring against a normal reconstructed template.
//!
//! For an input `x` with reconstruction `R(x)` and a template `T`:
//! high-pass both at `tau`, take `|F(R(x)) − F(T)| · scale` on the interior
//! window (a `border`-pixel frame is dropped), mark pixels strictly above
//! `th`, and count them. Counts are min-max normalised over the corpus.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::autoencoder::ModelWeights;
use crate::dataset::{Label, LabeledSample, Sample};
use crate::error::{Error, Result};
use crate::fourier::{self, RealField};
use crate::image::ImageTensor;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    /// Side of the removed low-frequency square, in bins.
    pub tau: usize,
    /// Threshold on the scaled difference.
    pub th: f64,
    /// Pixels dropped on each edge before thresholding.
    pub border: usize,
    /// Multiplier from `[0, 1]` magnitudes to threshold units.
    pub scale: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            tau: 3,
            th: 4.0,
            border: 10,
            scale: 255.0,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self, side: usize) -> Result<()> {
        if self.tau > side {
            return Err(Error::invalid(
                "tau",
                format!("{} exceeds image side {side}", self.tau),
            ));
        }
        if self.th.is_nan() || self.th < 0.0 {
            return Err(Error::invalid("th", "must be non-negative"));
        }
        if 2 * self.border >= side {
            return Err(Error::invalid(
                "border",
                format!(
                    "2 × {} leaves no interior in a {side}-pixel image",
                    self.border
                ),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", "must be positive"));
        }
        Ok(())
    }

    pub fn interior_side(&self, side: usize) -> usize {
        side.saturating_sub(2 * self.border)
    }
}

/// Produces the grayscale field that enters the Fourier stage.
pub trait Reconstructor: Sync {
    fn reconstruct_gray(&self, image: &ImageTensor) -> Result<ImageTensor>;
}

impl Reconstructor for ModelWeights {
    fn reconstruct_gray(&self, image: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.reconstruct(image)?.to_grayscale())
    }
}

/// Identity reconstructor: the grayscale input itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl Reconstructor for Passthrough {
    fn reconstruct_gray(&self, image: &ImageTensor) -> Result<ImageTensor> {
        Ok(image.to_grayscale())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalTemplate {
    pub source_id: String,
    /// Grayscale source image before reconstruction.
    pub source: ImageTensor,
    /// Grayscale reconstruction of the source.
    pub reconstruction: ImageTensor,
    filtered: Option<(usize, RealField)>,
}

impl NormalTemplate {
    pub fn new(
        source_id: impl Into<String>,
        source: ImageTensor,
        reconstruction: ImageTensor,
    ) -> Result<Self> {
        if source.shape() != reconstruction.shape() {
            return Err(Error::shape(
                format!("{:?}", source.shape()),
                format!("{:?}", reconstruction.shape()),
            ));
        }
        Ok(Self {
            source_id: source_id.into(),
            source: source.to_grayscale(),
            reconstruction: reconstruction.to_grayscale(),
            filtered: None,
        })
    }

    /// Caches the high-passed reconstruction for `tau`, recomputing on change.
    pub fn bind(&mut self, tau: usize) -> Result<&RealField> {
        if self.filtered.as_ref().map(|(t, _)| *t) != Some(tau) {
            self.filtered = Some((tau, fourier::highpass_filter(&self.reconstruction, tau)?));
        }
        Ok(&self.filtered.as_ref().expect("just bound").1)
    }

    pub fn bound_tau(&self) -> Option<usize> {
        self.filtered.as_ref().map(|(t, _)| *t)
    }

    /// Filtered reconstruction at `tau`, from the cache when it matches.
    pub fn filtered(&self, tau: usize) -> Result<Cow<'_, RealField>> {
        match &self.filtered {
            Some((t, f)) if *t == tau => Ok(Cow::Borrowed(f)),
            _ => Ok(Cow::Owned(fourier::highpass_filter(
                &self.reconstruction,
                tau,
            )?)),
        }
    }
}

/// One template per normal image.
pub fn build_templates(
    model: &dyn Reconstructor,
    normal_images: &[Sample],
    exec: Exec,
) -> Result<Vec<NormalTemplate>> {
    if normal_images.is_empty() {
        return Err(Error::Empty("normal images"));
    }
    exec.try_map(normal_images, |s| {
        NormalTemplate::new(
            s.id.clone(),
            s.image.clone(),
            model.reconstruct_gray(&s.image)?,
        )
    })
}

/// `|a − b| · scale` over the interior window.
pub fn difference_map(a: &RealField, b: &RealField, params: &DetectionParams) -> Result<RealField> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::shape(
            format!("{}x{}", a.height, a.width),
            format!("{}x{}", b.height, b.width),
        ));
    }
    let bd = params.border;
    if 2 * bd >= a.height || 2 * bd >= a.width {
        return Err(Error::invalid("border", "leaves no interior"));
    }
    let (h, w) = (a.height - 2 * bd, a.width - 2 * bd);
    let mut out = RealField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] =
                (a.get(y + bd, x + bd) - b.get(y + bd, x + bd)).abs() * params.scale;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMap {
    pub fn to_image(&self) -> ImageTensor {
        let data = self
            .data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        ImageTensor::new(self.height, self.width, 1, data).expect("binary values lie in [0, 1]")
    }
}

/// Pixel is set iff its value is strictly greater than `th`.
pub fn binarize(diff: &RealField, th: f64) -> BinaryMap {
    BinaryMap {
        height: diff.height,
        width: diff.width,
        data: diff.data.iter().map(|&v| v > th).collect(),
    }
}

pub fn defect_score(map: &BinaryMap) -> u64 {
    map.data.iter().filter(|&&b| b).count() as u64
}

/// Number of entries strictly above `th`; equals `defect_score(binarize(..))`.
pub fn count_above(diff: &RealField, th: f64) -> u64 {
    diff.data.iter().filter(|&&v| v > th).count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub label: Label,
    pub raw_count: u64,
    pub normalized: Option<f64>,
}

/// Min-max normalisation over the corpus; all zero when every count is equal.
pub fn normalize_scores(mut records: Vec<ScoreRecord>) -> Result<Vec<ScoreRecord>> {
    let (min, max) = records
        .iter()
        .map(|r| r.raw_count)
        .fold(None, |acc: Option<(u64, u64)>, c| match acc {
            None => Some((c, c)),
            Some((lo, hi)) => Some((lo.min(c), hi.max(c))),
        })
        .ok_or(Error::Empty("score records"))?;
    let span = (max - min) as f64;
    for r in &mut records {
        r.normalized = Some(if max == min {
            0.0
        } else {
            (r.raw_count - min) as f64 / span
        });
    }
    Ok(records)
}

/// High-passed grayscale reconstruction of `image`.
pub fn filtered_reconstruction(
    image: &ImageTensor,
    model: &dyn Reconstructor,
    tau: usize,
) -> Result<RealField> {
    fourier::highpass_filter(&model.reconstruct_gray(image)?, tau)
}

/// Raw pixel count for one image.
pub fn detect_count(
    image: &ImageTensor,
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    params: &DetectionParams,
) -> Result<u64> {
    params.validate(image.height())?;
    let filtered = filtered_reconstruction(image, model, params.tau)?;
    let reference = template.filtered(params.tau)?;
    let diff = difference_map(&filtered, &reference, params)?;
    Ok(defect_score(&binarize(&diff, params.th)))
}

/// Scores one labelled image; `normalized` is left unset.
pub fn detect(
    sample: &LabeledSample,
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    params: &DetectionParams,
) -> Result<ScoreRecord> {
    Ok(ScoreRecord {
        image_id: sample.id.clone(),
        label: sample.label,
        raw_count: detect_count(&sample.image, model, template, params)?,
        normalized: None,
    })
}

/// Scores every sample (optionally in parallel) then normalises.
pub fn score_corpus(
    samples: &[LabeledSample],
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    params: &DetectionParams,
    exec: Exec,
) -> Result<Vec<ScoreRecord>> {
    let reference = template.filtered(params.tau)?.into_owned();
    let mut bound = template.clone();
    bound.filtered = Some((params.tau, reference));
    let records = exec.try_map(samples, |s| detect(s, model, &bound, params))?;
    normalize_scores(records)
}

/// Intermediate images of one detection, for inspection.
#[derive(Debug, Clone)]
pub struct DetectionArtifacts {
    pub reconstruction: ImageTensor,
    pub input_spectrum: ImageTensor,
    pub template_spectrum: ImageTensor,
    pub input_filtered: RealField,
    pub template_filtered: RealField,
    pub binary: BinaryMap,
    pub raw_count: u64,
}

pub fn detect_with_artifacts(
    image: &ImageTensor,
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    params: &DetectionParams,
) -> Result<DetectionArtifacts> {
    params.validate(image.height())?;
    let reconstruction = model.reconstruct_gray(image)?;
    let spectrum_view = |img: &ImageTensor| -> Result<ImageTensor> {
        let s = fourier::shift(&fourier::dft2(img)?)?;
        let masked = fourier::apply_mask(&s, &fourier::make_mask(s.height(), params.tau)?)?;
        Ok(masked.log_magnitude_image())
    };
    let input_filtered = fourier::highpass_filter(&reconstruction, params.tau)?;
    let template_filtered = template.filtered(params.tau)?.into_owned();
    let binary = binarize(
        &difference_map(&input_filtered, &template_filtered, params)?,
        params.th,
    );
    Ok(DetectionArtifacts {
        input_spectrum: spectrum_view(&reconstruction)?,
        template_spectrum: spectrum_view(&template.reconstruction)?,
        raw_count: defect_score(&binary),
        reconstruction,
        input_filtered,
        template_filtered,
        binary,
    })
}

/// Outcome of template selection.
#[derive(Debug, Clone)]
pub struct TemplateChoice {
    pub index: usize,
    /// Mean raw count over the holdout normals, per candidate.
    pub mean_counts: Vec<f64>,
}

/// Picks the candidate with the smallest mean raw count over `holdout`
/// normals; ties go to the lexicographically smallest `source_id`.
pub fn select_template(
    templates: &[NormalTemplate],
    holdout: &[ImageTensor],
    model: &dyn Reconstructor,
    params: &DetectionParams,
    exec: Exec,
) -> Result<TemplateChoice> {
    if templates.is_empty() {
        return Err(Error::Empty("template candidates"));
    }
    if holdout.is_empty() {
        return Err(Error::Empty("holdout normals"));
    }
    params.validate(holdout[0].height())?;
    let probes = exec.try_map(holdout, |img| {
        filtered_reconstruction(img, model, params.tau)
    })?;
    let mean_counts = exec.try_map(templates, |t| -> Result<f64> {
        let reference = t.filtered(params.tau)?;
        let mut total = 0u64;
        for p in &probes {
            total += count_above(&difference_map(p, &reference, params)?, params.th);
        }
        Ok(total as f64 / probes.len() as f64)
    })?;
    let index = (0..templates.len())
        .min_by(|&a, &b| {
            mean_counts[a]
                .total_cmp(&mean_counts[b])
                .then_with(|| templates[a].source_id.cmp(&templates[b].source_id))
        })
        .expect("non-empty");
    Ok(TemplateChoice { index, mean_counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> RealField {
        let mut r = RealField::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                r.data[y * w + x] = f(y, x);
            }
        }
        r
    }

    fn params(border: usize) -> DetectionParams {
        DetectionParams {
            tau: 0,
            th: 0.0,
            border,
            scale: 255.0,
        }
    }

    #[test]
    fn difference_examples() {
        let a = field(24, 24, |_, _| 0.5);
        assert!(difference_map(&a, &a, &params(10))
            .unwrap()
            .data
            .iter()
            .all(|&v| v == 0.0));
        let b = field(24, 24, |y, x| if (y, x) == (12, 12) { 0.3 } else { 0.5 });
        let d = difference_map(&a, &b, &params(10)).unwrap();
        assert_eq!((d.height, d.width), (4, 4));
        assert!((d.get(2, 2) - 51.0).abs() < 1e-9);
        let edge = field(24, 24, |y, x| if y < 10 || x >= 14 { 0.9 } else { 0.5 });
        assert!(difference_map(&a, &edge, &params(10))
            .unwrap()
            .data
            .iter()
            .all(|&v| v == 0.0));
        assert!(difference_map(&a, &field(20, 24, |_, _| 0.0), &params(2)).is_err());
        assert!(difference_map(&a, &a, &params(12)).is_err());
    }

    #[test]
    fn binarize_is_strict() {
        let f = RealField {
            height: 1,
            width: 4,
            data: vec![0.0, 5.0, 13.0, 14.0],
        };
        assert_eq!(binarize(&f, 13.0).data, vec![false, false, false, true]);
        assert_eq!(binarize(&f, 0.0).data, vec![false, true, true, true]);
        assert_eq!(defect_score(&binarize(&f, 13.0)), 1);
        assert_eq!(count_above(&f, 4.0), 3);
    }

    #[test]
    fn score_counts() {
        let zeros = BinaryMap {
            height: 2,
            width: 5,
            data: vec![false; 10],
        };
        assert_eq!(defect_score(&zeros), 0);
        let mut seven = zeros.clone();
        for b in seven.data.iter_mut().take(7) {
            *b = true;
        }
        assert_eq!(defect_score(&seven), 7);
        assert_eq!(
            defect_score(&seven),
            seven.data.iter().fold(0, |n, &b| n + u64::from(b))
        );
    }

    fn rec(id: &str, raw: u64) -> ScoreRecord {
        ScoreRecord {
            image_id: id.into(),
            label: Label::Normal,
            raw_count: raw,
            normalized: None,
        }
    }

    #[test]
    fn normalization_examples() {
        let out = normalize_scores(vec![rec("a", 2), rec("b", 5), rec("c", 10)]).unwrap();
        let n: Vec<f64> = out.iter().map(|r| r.normalized.unwrap()).collect();
        assert_eq!(n, vec![0.0, 0.375, 1.0]);
        let single = normalize_scores(vec![rec("a", 42)]).unwrap();
        assert_eq!(single[0].normalized, Some(0.0));
        assert!(normalize_scores(Vec::new()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(DetectionParams::default().validate(64).is_ok());
        assert!(DetectionParams::default().validate(20).is_err());
        let p = DetectionParams {
            tau: 70,
            ..DetectionParams::default()
        };
        assert!(p.validate(64).is_err());
        let p = DetectionParams {
            th: -1.0,
            ..DetectionParams::default()
        };
        assert!(p.validate(64).is_err());
    }

    #[test]
    fn template_binding_tracks_tau() {
        let img = ImageTensor::from_fn(8, 8, |y, x| ((x + 2 * y) % 4) as f64 / 3.0).unwrap();
        let mut t = NormalTemplate::new("a", img.clone(), img.clone()).unwrap();
        assert_eq!(t.bound_tau(), None);
        let f2 = t.bind(2).unwrap().clone();
        assert_eq!(t.bound_tau(), Some(2));
        assert_eq!(f2, fourier::highpass_filter(&img, 2).unwrap());
        t.bind(4).unwrap();
        assert_eq!(t.bound_tau(), Some(4));
        assert_eq!(*t.filtered(2).unwrap(), f2);
    }

    #[test]
    fn full_mask_gives_zero_counts() {
        let img = ImageTensor::from_fn(24, 24, |y, x| ((x * y) % 7) as f64 / 6.0).unwrap();
        let other = ImageTensor::from_fn(24, 24, |y, x| ((x + y) % 3) as f64 / 2.0).unwrap();
        let t = NormalTemplate::new("t", other.clone(), other).unwrap();
        let p = DetectionParams {
            tau: 24,
            th: 0.0,
            border: 2,
            scale: 255.0,
        };
        assert_eq!(detect_count(&img, &Passthrough, &t, &p).unwrap(), 0);
    }

    #[test]
    fn selection_rules() {
        let base = ImageTensor::from_fn(24, 24, |y, x| {
            0.5 + 0.3 * ((x % 4) as f64 / 3.0 - 0.5) + 0.0 * y as f64
        })
        .unwrap();
        let blemished = ImageTensor::from_fn(24, 24, |y, x| {
            let v = base.get(0, y, x);
            if (10..14).contains(&y) && (10..14).contains(&x) {
                1.0
            } else {
                v
            }
        })
        .unwrap();
        let p = DetectionParams {
            tau: 2,
            th: 5.0,
            border: 4,
            scale: 255.0,
        };
        let clean = NormalTemplate::new("b-clean", base.clone(), base.clone()).unwrap();
        let dirty = NormalTemplate::new("a-dirty", blemished.clone(), blemished).unwrap();
        let holdout = vec![base.clone(), base.clone()];

        let single = select_template(
            std::slice::from_ref(&dirty),
            &holdout,
            &Passthrough,
            &p,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(single.index, 0);

        let choice = select_template(
            &[dirty.clone(), clean.clone()],
            &holdout,
            &Passthrough,
            &p,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(choice.index, 1);
        assert_eq!(choice.mean_counts[1], 0.0);
        assert!(choice.mean_counts[0] > 0.0);

        // equal means: lowest id wins
        let twin = NormalTemplate::new("a-twin", base.clone(), base).unwrap();
        let tie =
            select_template(&[clean, twin], &holdout, &Passthrough, &p, Exec::Sequential).unwrap();
        assert_eq!(tie.index, 1);

        assert!(select_template(&[], &holdout, &Passthrough, &p, Exec::Sequential).is_err());
        assert!(select_template(&[dirty], &[], &Passthrough, &p, Exec::Sequential).is_err());
    }
}
