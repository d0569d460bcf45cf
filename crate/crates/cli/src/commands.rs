//! One function per subcommand. Each writes its artifacts into `ctx.out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use texscan::autoencoder::{
    load_checkpoint, save_checkpoint, train_from, write_training_log, ConstantLr, ModelWeights,
};
use texscan::dataset::{self, Dataset, Label, LabeledSample, LoadOptions, Sample};
use texscan::detector::{
    build_templates, detect_with_artifacts, score_corpus, select_template, DetectionParams,
    NormalTemplate,
};
use texscan::eval::{self, emit_report, scores_csv, AblationEntry, AblationResult, SweepTable};
use texscan::image::save_image;
use texscan::synth::gen_corpus;
use texscan::{Exec, ImageTensor};

use crate::config::RunConfig;
use crate::Holdout;

pub const CHECKPOINT: &str = "model.tfr";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const TEMPLATE: &str = "template.json";
pub const SELECTION: &str = "template_selection.csv";
pub const SCORES: &str = "scores.csv";

pub struct Context {
    pub config: RunConfig,
    pub exec: Exec,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Serialized template. Pixel values survive the JSON round-trip exactly.
#[derive(Debug, Serialize, Deserialize)]
struct TemplateFile {
    source_id: String,
    height: usize,
    width: usize,
    source: Vec<f64>,
    reconstruction: Vec<f64>,
}

impl TemplateFile {
    fn of(t: &NormalTemplate) -> Self {
        Self {
            source_id: t.source_id.clone(),
            height: t.source.height(),
            width: t.source.width(),
            source: t.source.data().to_vec(),
            reconstruction: t.reconstruction.data().to_vec(),
        }
    }

    fn into_template(self) -> Result<NormalTemplate> {
        let source = ImageTensor::new(self.height, self.width, 1, self.source)?;
        let reconstruction = ImageTensor::new(self.height, self.width, 1, self.reconstruction)?;
        Ok(NormalTemplate::new(self.source_id, source, reconstruction)?)
    }
}

fn load_template(path: &Path) -> Result<NormalTemplate> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading template {}", path.display()))?;
    let file: TemplateFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing template {}", path.display()))?;
    file.into_template()
}

fn load_model(path: &Path) -> Result<ModelWeights> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn options_for(model: &ModelWeights) -> LoadOptions {
    let (h, w, c) = model.architecture().input_shape();
    LoadOptions::matching(h, w, c)
}

fn load_dataset(root: &Path, model: &ModelWeights) -> Result<Dataset> {
    Dataset::load(root, options_for(model))
        .with_context(|| format!("loading dataset {}", root.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(ctx: &Context) -> Result<()> {
    let c = &ctx.config.corpus;
    gen_corpus(&ctx.out, &c.texture, &c.defect, c.counts, ctx.exec)?;
    println!(
        "corpus: {} ({} train, {} test normal, {} test defect)",
        ctx.out.display(),
        c.counts.train,
        c.counts.test_normal,
        c.counts.test_defect
    );
    Ok(())
}

fn train_model(ctx: &Context, data: &Path) -> Result<ModelWeights> {
    let arch = &ctx.config.architecture;
    let (h, w, c) = arch.input_shape();
    let samples = Dataset::load_split(data, dataset::TRAIN_GOOD, LoadOptions::matching(h, w, c))
        .with_context(|| format!("loading training images from {}", data.display()))?;
    if samples.is_empty() {
        bail!(
            "no training images in {}",
            data.join(dataset::TRAIN_GOOD).display()
        );
    }
    let images: Vec<ImageTensor> = samples.into_iter().map(|s| s.image).collect();
    let config = &ctx.config.train;
    let model = ModelWeights::init(arch.clone(), texscan::seed::derive(config.seed, "init", 0))?;
    let epochs = config.epochs;
    let outcome = train_from(
        model,
        &images,
        config,
        &ConstantLr,
        ctx.exec,
        |epoch, loss| {
            eprintln!("epoch {}/{epochs} loss {loss:.6}", epoch + 1);
        },
    )?;
    let checkpoint = ctx.path(CHECKPOINT);
    save_checkpoint(&outcome.model, &checkpoint)?;
    write_training_log(&ctx.path(TRAINING_LOG), &outcome.epoch_losses)?;
    println!("checkpoint: {}", checkpoint.display());
    Ok(outcome.model)
}

pub fn train(ctx: &Context, data: &Path) -> Result<()> {
    train_model(ctx, data).map(drop)
}

fn choose_template(
    ctx: &Context,
    model: &ModelWeights,
    ds: &Dataset,
    holdout: Holdout,
) -> Result<NormalTemplate> {
    let holdout_images: Vec<ImageTensor> = match holdout {
        Holdout::Test => ds.test_normals().map(|s| s.image.clone()).collect(),
        Holdout::Train => ds.train.iter().map(|s| s.image.clone()).collect(),
    };
    if holdout_images.is_empty() {
        bail!("no holdout normals for template selection");
    }
    let mut templates = build_templates(model, &ds.train, ctx.exec)?;
    let choice = select_template(
        &templates,
        &holdout_images,
        model,
        &ctx.config.detection,
        ctx.exec,
    )?;

    let mut csv = String::from("source_id,mean_raw_count\n");
    for (t, mean) in templates.iter().zip(&choice.mean_counts) {
        writeln!(csv, "{},{}", t.source_id, mean).expect("write to String");
    }
    write(&ctx.path(SELECTION), &csv)?;

    let template = templates.swap_remove(choice.index);
    let json = serde_json::to_string(&TemplateFile::of(&template))?;
    write(&ctx.path(TEMPLATE), &json)?;
    save_image(&template.source, ctx.path("template_source.png"))?;
    save_image(
        &template.reconstruction,
        ctx.path("template_reconstruction.png"),
    )?;
    println!(
        "template: {} (mean raw count {})",
        template.source_id, choice.mean_counts[choice.index]
    );
    Ok(template)
}

pub fn templates(ctx: &Context, checkpoint: &Path, data: &Path, holdout: Holdout) -> Result<()> {
    let model = load_model(checkpoint)?;
    let ds = load_dataset(data, &model)?;
    choose_template(ctx, &model, &ds, holdout).map(drop)
}

/// Label from the enclosing folder: `good` is normal, anything else defect.
fn label_of(path: &Path) -> Label {
    let parent = path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str());
    if parent == Some("good") {
        Label::Normal
    } else {
        Label::Defect
    }
}

fn detection_inputs(input: &Path, options: LoadOptions) -> Result<Vec<LabeledSample>> {
    if input.is_file() {
        return Ok(vec![LabeledSample {
            id: input
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            label: label_of(input),
            image: options.apply(texscan::image::load_image(input)?)?,
        }]);
    }
    if !input.exists() {
        return Err(texscan::Error::MissingFile(input.to_path_buf()).into());
    }
    if input.join("test").is_dir() {
        return Ok(Dataset::load_test(input, options)?);
    }
    let label = label_of(&input.join("x"));
    Ok(dataset::load_folder(input, Some(options))?
        .into_iter()
        .map(|Sample { id, image }| LabeledSample { id, label, image })
        .collect())
}

fn debug_stem(id: &str) -> String {
    let stem = id.rsplit_once('.').map_or(id, |(s, _)| s);
    stem.replace(['/', '\\'], "_")
}

fn write_debug(
    dir: &Path,
    samples: &[LabeledSample],
    model: &ModelWeights,
    template: &NormalTemplate,
    params: &DetectionParams,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in samples {
        let a = detect_with_artifacts(&s.image, model, template, params)?;
        let stem = debug_stem(&s.id);
        save_image(
            &a.reconstruction,
            dir.join(format!("{stem}_reconstruction.png")),
        )?;
        save_image(
            &a.input_spectrum,
            dir.join(format!("{stem}_input_spectrum.png")),
        )?;
        save_image(
            &a.template_spectrum,
            dir.join(format!("{stem}_template_spectrum.png")),
        )?;
        save_image(
            &a.input_filtered.to_normalized_image(),
            dir.join(format!("{stem}_filtered.png")),
        )?;
        save_image(&a.binary.to_image(), dir.join(format!("{stem}_binary.png")))?;
    }
    Ok(())
}

fn score_and_write(
    ctx: &Context,
    samples: &[LabeledSample],
    model: &ModelWeights,
    template: &NormalTemplate,
    params: &DetectionParams,
) -> Result<()> {
    let records = score_corpus(samples, model, template, params, ctx.exec)?;
    let path = ctx.path(SCORES);
    write(&path, &scores_csv(&records))?;
    println!(
        "scores: {} ({} images, tau {}, th {})",
        path.display(),
        records.len(),
        params.tau,
        params.th
    );
    Ok(())
}

pub fn detect(
    ctx: &Context,
    checkpoint: &Path,
    template: &Path,
    input: &Path,
    debug_dir: Option<&Path>,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    let template = load_template(template)?;
    let samples = detection_inputs(input, options_for(&model))?;
    if samples.is_empty() {
        bail!("no images found under {}", input.display());
    }
    let params = &ctx.config.detection;
    score_and_write(ctx, &samples, &model, &template, params)?;
    if let Some(dir) = debug_dir {
        write_debug(dir, &samples, &model, &template, params)?;
    }
    Ok(())
}

fn write_sweep(ctx: &Context, table: &SweepTable) -> Result<()> {
    emit_report(table, &ctx.path("sweep"))?;
    let b = table.best;
    println!("sweep: best AUC {:.6} at tau {} th {}", b.auc, b.tau, b.th);
    Ok(())
}

fn write_ablation(ctx: &Context, entry: AblationEntry) -> Result<()> {
    for mode in eval::AblationMode::ALL {
        println!(
            "ablation: {} best AUC {:.6}",
            mode.as_str(),
            entry.best(mode)
        );
    }
    emit_report(
        &AblationResult {
            entries: vec![entry],
        },
        &ctx.path("ablation"),
    )?;
    Ok(())
}

pub fn sweep(ctx: &Context, checkpoint: &Path, template: &Path, data: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let template = load_template(template)?;
    let ds = load_dataset(data, &model)?;
    let table = eval::grid_search(
        &ds,
        &model,
        &template,
        &ctx.config.sweep,
        &ctx.config.detection,
        ctx.exec,
    )?;
    write_sweep(ctx, &table)
}

pub fn ablate(ctx: &Context, checkpoint: &Path, template: &Path, data: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let template = load_template(template)?;
    let ds = load_dataset(data, &model)?;
    let entry = eval::ablate(
        &ds,
        &model,
        &template,
        &ctx.config.sweep,
        &ctx.config.detection,
        ctx.exec,
    )?;
    write_ablation(ctx, entry)
}

/// The whole pipeline in one process. Test images are scored at the best
/// grid cell.
pub fn run(ctx: &Context, data: Option<&Path>) -> Result<()> {
    let data = match data {
        Some(d) => d.to_path_buf(),
        None => {
            let dir = ctx.path("corpus");
            let sub = Context {
                config: ctx.config.clone(),
                exec: ctx.exec,
                out: dir.clone(),
            };
            gen(&sub)?;
            dir
        }
    };
    let model = train_model(ctx, &data)?;
    let ds = load_dataset(&data, &model)?;
    let template = choose_template(ctx, &model, &ds, Holdout::Test)?;
    let entry = eval::ablate(
        &ds,
        &model,
        &template,
        &ctx.config.sweep,
        &ctx.config.detection,
        ctx.exec,
    )?;
    write_sweep(ctx, &entry.combined)?;
    let best = entry.combined.best;
    let params = DetectionParams {
        tau: best.tau,
        th: best.th,
        ..ctx.config.detection.clone()
    };
    write_ablation(ctx, entry)?;
    score_and_write(ctx, &ds.test, &model, &template, &params)
        .map_err(|e| anyhow!("scoring at the best cell: {e:#}"))
}
