//! Adam against an independent scalar reference.

use texscan::autoencoder::{Architecture, Gradients, ModelWeights};

/// Textbook scalar Adam, written out step by step.
struct ScalarAdam {
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    fn step(&mut self, p: f64, g: f64, lr: f64) -> f64 {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.t));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.t));
        p - lr * m_hat / (v_hat.sqrt() + 1e-8)
    }
}

#[test]
fn two_steps_match_scalar_reference() {
    let mut model = ModelWeights::init(Architecture::desk(8, vec![2, 4]), 3).unwrap();
    let n = model.param_count();
    let start = model.params().to_vec();
    let g1: Vec<f64> = (0..n).map(|i| ((i % 7) as f64 - 3.0) * 0.01).collect();
    let g2: Vec<f64> = (0..n).map(|i| ((i % 5) as f64 - 2.0) * 0.02).collect();
    let lr = 1e-3;
    model
        .adam_step(&Gradients { values: g1.clone() }, lr)
        .unwrap();
    model
        .adam_step(&Gradients { values: g2.clone() }, lr)
        .unwrap();
    assert_eq!(model.adam().step, 2);
    for i in 0..n {
        let mut s = ScalarAdam {
            m: 0.0,
            v: 0.0,
            t: 0,
        };
        let p = s.step(start[i], g1[i], lr);
        let p = s.step(p, g2[i], lr);
        assert!((model.params()[i] - p).abs() < 1e-15, "param {i}");
    }
}

#[test]
fn hand_computed_first_two_steps() {
    // g = 0.5 then 0.5, lr = 0.1, p0 = 1:
    // step 1: m=0.05, v=0.00025, m̂=0.5, v̂=0.25 → p = 1 − 0.1·0.5/(0.5+1e-8)
    // step 2: m=0.095, v=0.00049975, m̂=0.5, v̂=0.25 → same decrement again
    let d = 0.1 * 0.5 / (0.5 + 1e-8);
    let mut s = ScalarAdam {
        m: 0.0,
        v: 0.0,
        t: 0,
    };
    let p1 = s.step(1.0, 0.5, 0.1);
    assert!((p1 - (1.0 - d)).abs() < 1e-15);
    let p2 = s.step(p1, 0.5, 0.1);
    assert!((p2 - (1.0 - 2.0 * d)).abs() < 1e-12);
}

#[test]
fn gradient_shape_mismatch_rejected() {
    let mut model = ModelWeights::init(Architecture::desk(8, vec![2, 4]), 3).unwrap();
    assert!(model
        .adam_step(
            &Gradients {
                values: vec![0.0; 3]
            },
            1e-3
        )
        .is_err());
}
