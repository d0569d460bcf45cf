//! AUC, the (tau, th) grid search, the three-mode ablation, and CSV /
//! markdown reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::detector::{
    count_above, difference_map, DetectionParams, NormalTemplate, Reconstructor, ScoreRecord,
};
use crate::error::{Error, Result};
use crate::fourier::{self, HighPassMask, RealField};
use crate::image::ImageTensor;
use crate::par::Exec;

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `labels[i]` is true for positives.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::shape(
            format!("{} scores", labels.len()),
            scores.len(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores", "NaN score"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the Mann–Whitney U, kept integral so ties stay exact.
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * positives as u128 * negatives as u128) as f64)
}

/// AUC of scored records, defects positive, using raw counts.
pub fn auc_of_records(records: &[ScoreRecord]) -> Result<f64> {
    let labels: Vec<bool> = records.iter().map(|r| r.label.is_defect()).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.raw_count as f64).collect();
    auc(&labels, &scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub tau: usize,
    pub th: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub category: String,
    pub tau_values: Vec<usize>,
    pub th_values: Vec<f64>,
    /// `auc[i][j]` for `tau_values[i]`, `th_values[j]`.
    pub auc: Vec<Vec<f64>>,
    pub best: BestCell,
}

impl SweepTable {
    fn from_grid(
        category: &str,
        tau_values: &[usize],
        th_values: &[f64],
        auc: Vec<Vec<f64>>,
    ) -> Self {
        let mut best: Option<BestCell> = None;
        for (i, &tau) in tau_values.iter().enumerate() {
            for (j, &th) in th_values.iter().enumerate() {
                let cell = BestCell {
                    tau,
                    th,
                    auc: auc[i][j],
                };
                let better = match best {
                    None => true,
                    Some(b) => {
                        cell.auc > b.auc
                            || (cell.auc == b.auc && (tau < b.tau || (tau == b.tau && th < b.th)))
                    }
                };
                if better {
                    best = Some(cell);
                }
            }
        }
        Self {
            category: category.to_owned(),
            tau_values: tau_values.to_vec(),
            th_values: th_values.to_vec(),
            auc,
            best: best.expect("grid is non-empty"),
        }
    }

    pub fn cell(&self, tau: usize, th: f64) -> Option<f64> {
        let i = self.tau_values.iter().position(|&t| t == tau)?;
        let j = self.th_values.iter().position(|&t| t == th)?;
        Some(self.auc[i][j])
    }
}

/// Grid ranges for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRanges {
    pub tau_values: Vec<usize>,
    pub th_values: Vec<f64>,
}

/// Desk-scale grid: tau 2..=12, th 2..=20.
impl Default for SweepRanges {
    fn default() -> Self {
        Self {
            tau_values: (2..=12).collect(),
            th_values: (2..=20).map(f64::from).collect(),
        }
    }
}

impl SweepRanges {
    pub fn validate(&self, side: usize) -> Result<()> {
        if self.tau_values.is_empty() {
            return Err(Error::invalid("tau_values", "must be non-empty"));
        }
        if self.th_values.is_empty() {
            return Err(Error::invalid("th_values", "must be non-empty"));
        }
        if let Some(t) = self.tau_values.iter().find(|&&t| t > side) {
            return Err(Error::invalid(
                "tau_values",
                format!("{t} exceeds image side {side}"),
            ));
        }
        if self.th_values.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::invalid(
                "th_values",
                "thresholds must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Raw counts `[tau][th]` for every probe against a fixed reference.
/// Each probe is transformed once; filtered fields are reused across `th`.
pub fn sweep_counts(
    probes: &[ImageTensor],
    reference: &ImageTensor,
    ranges: &SweepRanges,
    params: &DetectionParams,
    exec: Exec,
) -> Result<Vec<Vec<Vec<u64>>>> {
    let side = reference.height();
    ranges.validate(side)?;
    DetectionParams {
        tau: 0,
        ..params.clone()
    }
    .validate(side)?;
    let masks: Vec<HighPassMask> = ranges
        .tau_values
        .iter()
        .map(|&t| fourier::make_mask(side, t))
        .collect::<Result<_>>()?;
    let ref_spectrum = fourier::dft2(reference)?;
    let ref_filtered: Vec<RealField> = masks
        .iter()
        .map(|m| fourier::highpass_with_mask(&ref_spectrum, m))
        .collect::<Result<_>>()?;
    exec.try_map(probes, |probe| {
        let spectrum = fourier::dft2(probe)?;
        masks
            .iter()
            .zip(&ref_filtered)
            .map(|(mask, reference)| {
                let filtered = fourier::highpass_with_mask(&spectrum, mask)?;
                let diff = difference_map(&filtered, reference, params)?;
                Ok(ranges
                    .th_values
                    .iter()
                    .map(|&th| count_above(&diff, th))
                    .collect())
            })
            .collect::<Result<Vec<Vec<u64>>>>()
    })
}

/// AUC per grid cell from [`sweep_counts`] output.
pub fn sweep_table(
    category: &str,
    labels: &[bool],
    counts: &[Vec<Vec<u64>>],
    ranges: &SweepRanges,
) -> Result<SweepTable> {
    let mut grid = vec![vec![0.0; ranges.th_values.len()]; ranges.tau_values.len()];
    let mut scores = vec![0.0; counts.len()];
    for (i, row) in grid.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            for (s, c) in scores.iter_mut().zip(counts) {
                *s = c[i][j] as f64;
            }
            *cell = auc(labels, &scores)?;
        }
    }
    Ok(SweepTable::from_grid(
        category,
        &ranges.tau_values,
        &ranges.th_values,
        grid,
    ))
}

fn test_labels(dataset: &Dataset) -> Vec<bool> {
    dataset
        .test
        .iter()
        .map(|s| s.label == Label::Defect)
        .collect()
}

fn reconstruct_tests(
    dataset: &Dataset,
    model: &dyn Reconstructor,
    exec: Exec,
) -> Result<Vec<ImageTensor>> {
    exec.try_map(&dataset.test, |s| model.reconstruct_gray(&s.image))
}

/// (tau, th) grid search over the test split with the full pipeline.
/// `params` supplies the border and scale.
pub fn grid_search(
    dataset: &Dataset,
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    ranges: &SweepRanges,
    params: &DetectionParams,
    exec: Exec,
) -> Result<SweepTable> {
    dataset.require_both_classes()?;
    let probes = reconstruct_tests(dataset, model, exec)?;
    let counts = sweep_counts(&probes, &template.reconstruction, ranges, params, exec)?;
    sweep_table(&dataset.category, &test_labels(dataset), &counts, ranges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    FourierOnly,
    ReconOnly,
    Combined,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [
        AblationMode::FourierOnly,
        AblationMode::ReconOnly,
        AblationMode::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::FourierOnly => "fourier_only",
            AblationMode::ReconOnly => "recon_only",
            AblationMode::Combined => "combined",
        }
    }

    fn uses_reconstruction(self) -> bool {
        self != AblationMode::FourierOnly
    }

    fn uses_fourier(self) -> bool {
        self != AblationMode::ReconOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub category: String,
    pub fourier_only: SweepTable,
    pub recon_only: SweepTable,
    pub combined: SweepTable,
}

impl AblationEntry {
    pub fn table(&self, mode: AblationMode) -> &SweepTable {
        match mode {
            AblationMode::FourierOnly => &self.fourier_only,
            AblationMode::ReconOnly => &self.recon_only,
            AblationMode::Combined => &self.combined,
        }
    }

    pub fn best(&self, mode: AblationMode) -> f64 {
        self.table(mode).best.auc
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub entries: Vec<AblationEntry>,
}

/// Three-mode ablation on one category.
///
/// * `fourier_only` – no model: raw grayscale inputs against the raw template
///   source, swept over tau and th.
/// * `recon_only` – reconstructions against the template reconstruction with
///   tau fixed at 0, swept over th.
/// * `combined` – the full pipeline, identical to [`grid_search`].
pub fn ablate(
    dataset: &Dataset,
    model: &dyn Reconstructor,
    template: &NormalTemplate,
    ranges: &SweepRanges,
    params: &DetectionParams,
    exec: Exec,
) -> Result<AblationEntry> {
    dataset.require_both_classes()?;
    let labels = test_labels(dataset);
    let raw: Vec<ImageTensor> = dataset
        .test
        .iter()
        .map(|s| s.image.to_grayscale())
        .collect();
    let recon = reconstruct_tests(dataset, model, exec)?;
    let no_fourier = SweepRanges {
        tau_values: vec![0],
        th_values: ranges.th_values.clone(),
    };
    let run = |mode: AblationMode| -> Result<SweepTable> {
        let (probes, reference) = if mode.uses_reconstruction() {
            (&recon, &template.reconstruction)
        } else {
            (&raw, &template.source)
        };
        let r = if mode.uses_fourier() {
            ranges
        } else {
            &no_fourier
        };
        let counts = sweep_counts(probes, reference, r, params, exec)?;
        sweep_table(&dataset.category, &labels, &counts, r)
    };
    Ok(AblationEntry {
        category: dataset.category.clone(),
        fourier_only: run(AblationMode::FourierOnly)?,
        recon_only: run(AblationMode::ReconOnly)?,
        combined: run(AblationMode::Combined)?,
    })
}

/// Tabular output as CSV and markdown.
pub trait Report {
    fn to_csv(&self) -> String;
    fn to_markdown(&self) -> String;
}

fn fmt_th(th: f64) -> String {
    format!("{th}")
}

impl Report for SweepTable {
    /// `category,tau,th,auc`, tau-major.
    fn to_csv(&self) -> String {
        let mut out = String::from("category,tau,th,auc\n");
        for (i, tau) in self.tau_values.iter().enumerate() {
            for (j, th) in self.th_values.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{:.6}",
                    self.category,
                    tau,
                    fmt_th(*th),
                    self.auc[i][j]
                )
                .unwrap();
            }
        }
        out
    }

    /// Rows tau, columns th; the best cell in bold.
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        write!(out, "| {} (τ \\ th) |", self.category).unwrap();
        for th in &self.th_values {
            write!(out, " {} |", fmt_th(*th)).unwrap();
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---|".repeat(self.th_values.len()));
        out.push('\n');
        for (i, tau) in self.tau_values.iter().enumerate() {
            write!(out, "| {tau} |").unwrap();
            for (j, th) in self.th_values.iter().enumerate() {
                let v = self.auc[i][j];
                if *tau == self.best.tau && *th == self.best.th {
                    write!(out, " **{v:.3}** |").unwrap();
                } else {
                    write!(out, " {v:.3} |").unwrap();
                }
            }
            out.push('\n');
        }
        writeln!(
            out,
            "\nBest: τ = {}, th = {}, AUC = {:.3}",
            self.best.tau,
            fmt_th(self.best.th),
            self.best.auc
        )
        .unwrap();
        out
    }
}

impl Report for AblationResult {
    /// `category,mode,auc` with each mode's best AUC.
    fn to_csv(&self) -> String {
        let mut out = String::from("category,mode,auc\n");
        for e in &self.entries {
            for mode in AblationMode::ALL {
                writeln!(out, "{},{},{:.6}", e.category, mode.as_str(), e.best(mode)).unwrap();
            }
        }
        out
    }

    /// Columns are modes with reconstruction / Fourier toggle rows, one row
    /// per category plus the average; each category's best mode in bold.
    fn to_markdown(&self) -> String {
        let mut out =
            String::from("| | fourier_only | recon_only | combined |\n|---|---|---|---|\n");
        let flag = |b: bool| if b { "O" } else { "X" };
        out.push_str("| Reconstruction |");
        for mode in AblationMode::ALL {
            write!(out, " {} |", flag(mode.uses_reconstruction())).unwrap();
        }
        out.push_str("\n| Fourier Transform |");
        for mode in AblationMode::ALL {
            write!(out, " {} |", flag(mode.uses_fourier())).unwrap();
        }
        out.push('\n');
        for e in &self.entries {
            let values = AblationMode::ALL.map(|m| e.best(m));
            let best = (0..3).fold(0, |b, i| if values[i] > values[b] { i } else { b });
            write!(out, "| {} |", e.category).unwrap();
            for (i, v) in values.iter().enumerate() {
                if i == best {
                    write!(out, " **{v:.3}** |").unwrap();
                } else {
                    write!(out, " {v:.3} |").unwrap();
                }
            }
            out.push('\n');
        }
        if !self.entries.is_empty() {
            out.push_str("| Average |");
            let n = self.entries.len() as f64;
            for mode in AblationMode::ALL {
                let mean = self.entries.iter().map(|e| e.best(mode)).sum::<f64>() / n;
                write!(out, " {mean:.3} |").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `<path>.csv` and `<path>.md`.
pub fn emit_report(report: &dyn Report, path: &Path) -> Result<()> {
    for (ext, body) in [("csv", report.to_csv()), ("md", report.to_markdown())] {
        let p = path.with_extension(ext);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// CSV `image_id,label,raw_count,normalized`.
pub fn scores_csv(records: &[ScoreRecord]) -> String {
    let mut out = String::from("image_id,label,raw_count,normalized\n");
    for r in records {
        let norm = r.normalized.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.image_id, r.label, r.raw_count, norm).unwrap();
    }
    out
}
