//! Analytic gradients against central finite differences.
//!
//! Seeds are fixed: a ±1e-4 step that crosses a ReLU or max-pool kink makes
//! the difference quotient disagree with the (correct) one-sided derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texscan::autoencoder::{Architecture, ModelWeights};
use texscan::{Exec, ImageTensor};

fn random_image(size: usize, rng: &mut ChaCha8Rng) -> ImageTensor {
    let data = (0..size * size)
        .map(|_| rng.gen_range(0.05..0.95))
        .collect();
    ImageTensor::new(size, size, 1, data).unwrap()
}

fn loss_at(model: &ModelWeights, batch: &[ImageTensor], l1: f64, l2: f64) -> f64 {
    model
        .backward(batch, batch, l1, l2, Exec::Sequential)
        .unwrap()
        .0
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Returns the worst relative error over every parameter.
fn check(arch: Architecture, seed: u64, batch_size: usize, l1: f64, l2: f64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelWeights::init(arch.clone(), seed).unwrap();
    // small random biases so no unit starts exactly at a ReLU kink
    for layer in model.layers().to_vec() {
        for b in model.bias_mut(&layer) {
            *b = rng.gen_range(-0.05..0.05);
        }
    }
    let batch: Vec<ImageTensor> = (0..batch_size)
        .map(|_| random_image(arch.input_height, &mut rng))
        .collect();
    let (_, grads) = model
        .backward(&batch, &batch, l1, l2, Exec::Sequential)
        .unwrap();

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..model.param_count() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = loss_at(&model, &batch, l1, l2);
        model.params_mut()[i] = orig - h;
        let down = loss_at(&model, &batch, l1, l2);
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(grads.values[i], numeric));
    }
    (worst, model.param_count())
}

#[test]
fn toy_network_matches_finite_differences() {
    let (worst, n) = check(Architecture::desk(8, vec![8, 16]), 17, 1, 1.0, 100.0);
    assert_eq!(n, 3057);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn deeper_batched_network_matches_finite_differences() {
    let (worst, _) = check(Architecture::desk(8, vec![3, 4, 5]), 1, 2, 1.0, 100.0);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn rgb_network_matches_finite_differences() {
    let arch = Architecture {
        input_height: 4,
        input_width: 4,
        input_channels: 3,
        encoder_channels: vec![2, 3],
        kernel_size: 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = ModelWeights::init(arch, 4).unwrap();
    let data = (0..48).map(|_| rng.gen_range(0.05..0.95)).collect();
    let img = ImageTensor::new(4, 4, 3, data).unwrap();
    let (_, grads) = model
        .backward(
            std::slice::from_ref(&img),
            std::slice::from_ref(&img),
            0.0,
            1.0,
            Exec::Sequential,
        )
        .unwrap();
    let mut m = model.clone();
    let h = 1e-4;
    for i in 0..m.param_count() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + h;
        let up = loss_at(&m, std::slice::from_ref(&img), 0.0, 1.0);
        m.params_mut()[i] = orig - h;
        let down = loss_at(&m, std::slice::from_ref(&img), 0.0, 1.0);
        m.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        assert!(relative_error(grads.values[i], numeric) < 1e-4, "param {i}");
    }
}
