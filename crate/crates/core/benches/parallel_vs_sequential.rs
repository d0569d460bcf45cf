use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use texscan::autoencoder::{Architecture, ModelWeights};
use texscan::dataset::{Label, LabeledSample};
use texscan::detector::{score_corpus, DetectionParams, NormalTemplate, Passthrough};
use texscan::eval::{sweep_counts, SweepRanges};
use texscan::synth::{gen_texture, TextureSpec};
use texscan::{Exec, ImageTensor};

fn textures(n: usize, size: usize) -> Vec<ImageTensor> {
    (0..n as u64)
        .map(|seed| {
            gen_texture(&TextureSpec {
                size,
                seed,
                ..TextureSpec::default()
            })
            .unwrap()
        })
        .collect()
}

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn scoring(c: &mut Criterion) {
    let images = textures(32, 64);
    let samples: Vec<LabeledSample> = images
        .iter()
        .enumerate()
        .map(|(i, img)| LabeledSample {
            id: i.to_string(),
            label: Label::Normal,
            image: img.clone(),
        })
        .collect();
    let template = NormalTemplate::new("t", images[0].clone(), images[0].clone()).unwrap();
    let params = DetectionParams::default();
    let ranges = SweepRanges {
        tau_values: (2..=12).collect(),
        th_values: (2..=20).map(f64::from).collect(),
    };

    let mut group = c.benchmark_group("score_corpus");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| score_corpus(&samples, &Passthrough, &template, &params, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("sweep_counts");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep_counts(&images, &images[0], &ranges, &params, exec).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let batch = textures(8, 32);
    let model = ModelWeights::init(Architecture::desk(32, vec![8, 16, 32]), 0).unwrap();
    let mut group = c.benchmark_group("backward_batch8");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.backward(&batch, &batch, 1.0, 100.0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scoring, training_step);
criterion_main!(benches);
