//! AUC against the pairwise Mann-Whitney definition.

use proptest::prelude::*;
use texscan::error::Error;
use texscan::eval::auc;

/// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
fn pairwise(labels: &[bool], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Labels with at least one of each class, plus scores drawn from a small
/// alphabet when `ties` is set.
fn corpus() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..=200, any::<bool>()).prop_flat_map(|(n, ties)| {
        let scores = if ties {
            prop::collection::vec((0u8..5).prop_map(f64::from), n).boxed()
        } else {
            prop::collection::vec(-1e3f64..1e3, n).boxed()
        };
        (prop::collection::vec(any::<bool>(), n), scores).prop_map(|(mut labels, scores)| {
            labels[0] = true;
            labels[1] = false;
            (labels, scores)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matches_pairwise_oracle((labels, scores) in corpus()) {
        let got = auc(&labels, &scores).unwrap();
        prop_assert!((got - pairwise(&labels, &scores)).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_monotone_transform((labels, scores) in corpus()) {
        let base = auc(&labels, &scores).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (s / 100.0).exp() * 3.0 + 7.0).collect();
        prop_assert!((auc(&labels, &warped).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn negation_complements((labels, scores) in corpus()) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auc(&labels, &scores).unwrap() + auc(&labels, &neg).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn known_values() {
    assert_eq!(
        auc(&[false, false, true, true], &[0.1, 0.2, 0.3, 0.4]).unwrap(),
        1.0
    );
    assert_eq!(
        auc(&[true, true, false, false], &[0.1, 0.2, 0.3, 0.4]).unwrap(),
        0.0
    );
    assert_eq!(auc(&[true, false, true, false], &[1.0; 4]).unwrap(), 0.5);
    assert_eq!(
        auc(&[false, true, false, true], &[0.1, 0.35, 0.4, 0.8]).unwrap(),
        0.75
    );
}

#[test]
fn rejects_bad_input() {
    assert!(matches!(
        auc(&[true, true], &[0.1, 0.2]),
        Err(Error::SingleClass { .. })
    ));
    assert!(matches!(
        auc(&[false, false], &[0.1, 0.2]),
        Err(Error::SingleClass { .. })
    ));
    assert!(auc(&[true, false], &[0.1]).is_err());
    assert!(auc(&[true, false], &[f64::NAN, 0.2]).is_err());
}
