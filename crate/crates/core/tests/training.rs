use texscan::augment::AugmentSpec;
use texscan::autoencoder::{
    recon_loss, train_images, write_training_log, Architecture, TrainConfig,
};
use texscan::dataset::{Label, LabeledSample, Sample};
use texscan::detector::{build_templates, detect, DetectionParams};
use texscan::synth::{gen_texture, TextureSpec};
use texscan::{Exec, ImageTensor};

fn target() -> ImageTensor {
    gen_texture(&TextureSpec {
        size: 32,
        period: 8,
        seed: 5,
        ..TextureSpec::default()
    })
    .unwrap()
}

/// Single-image overfit: no augmentation, one image per step.
fn overfit_config(steps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs: steps,
        batch_size: 1,
        augment: AugmentSpec::identity(),
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn overfitting_one_image() {
    let img = target();
    let arch = Architecture::desk(32, vec![8, 16]);
    let config = overfit_config(200);
    let out = train_images(std::slice::from_ref(&img), &arch, &config, Exec::default()).unwrap();
    let initial = out.epoch_losses[0];
    let r = out.model.reconstruct(&img).unwrap();
    let last = recon_loss(&img, &r, config.lambda_l1, config.lambda_l2).unwrap();
    let mae = recon_loss(&img, &r, 1.0, 0.0).unwrap();
    assert!(initial / last >= 10.0, "initial {initial} final {last}");
    assert!(mae < 0.05, "mae {mae}");

    // smoothed trend: each 20-step window beats the first
    let windows: Vec<f64> = out
        .epoch_losses
        .chunks(20)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    assert!(windows[1..].iter().all(|&w| w < windows[0]));
    assert_eq!(out.model.adam().step, 200);

    // overfit model as a reconstructor
    let samples = vec![Sample {
        id: "only".into(),
        image: img.clone(),
    }];
    let template = &build_templates(&out.model, &samples, Exec::Sequential).unwrap()[0];
    let template_mae = recon_loss(&template.source, &template.reconstruction, 1.0, 0.0).unwrap();
    assert!(template_mae < 0.05, "template mae {template_mae}");

    let params = DetectionParams {
        border: 4,
        ..DetectionParams::default()
    };
    let probe = LabeledSample {
        id: "only".into(),
        label: Label::Normal,
        image: img,
    };
    let count = detect(&probe, &out.model, template, &params)
        .unwrap()
        .raw_count;
    let interior = params.interior_side(32).pow(2) as u64;
    assert!(count * 100 < interior, "count {count} of {interior}");
}

#[test]
fn training_is_reproducible_across_exec_modes() {
    let images: Vec<ImageTensor> = (0..3)
        .map(|seed| {
            gen_texture(&TextureSpec {
                size: 16,
                period: 4,
                seed,
                ..TextureSpec::default()
            })
            .unwrap()
        })
        .collect();
    let arch = Architecture::desk(16, vec![4, 8]);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train_images(&images, &arch, &config, Exec::Sequential).unwrap();
    let b = train_images(&images, &arch, &config, Exec::Parallel).unwrap();
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn training_log_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_training_log(&path, &[2.5, 0.125]).unwrap();
    assert_eq!(
        std::fs::read_to_string(path).unwrap(),
        "epoch,mean_loss\n1,2.5\n2,0.125\n"
    );
}

#[test]
fn wrong_input_shape_is_rejected() {
    let arch = Architecture::desk(32, vec![8, 16]);
    let small = ImageTensor::filled(16, 16, 1, 0.5).unwrap();
    assert!(train_images(&[small], &arch, &overfit_config(1), Exec::Sequential).is_err());
    assert!(train_images(&[], &arch, &overfit_config(1), Exec::Sequential).is_err());
}
