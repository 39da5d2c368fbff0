mod common;

use common::{dataset, gaussian};
use ddarr::arrgen::{forward_select_with_delays, SearchConfig};
use ddarr::detect::{learn_thresholds, raise_alarms, roc_curve, Thresholds};
use ddarr::evaluate::{detectability, residual_signal, z_test};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probability a random positive outranks a random negative, ties half.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if *li && !*lj {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

fn labelled(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    labels[0] = true;
    labels[1] = false;
    // Coarse grid forces ties.
    let scores = labels.iter().map(|l| (rng.random::<f64>() * 8.0 + if *l { 2.0 } else { 0.0 }).floor()).collect();
    (scores, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_equals_mann_whitney(seed in 0u64..10_000, n in 2usize..60) {
        let (s, l) = labelled(seed, n);
        let roc = roc_curve(&s, &l).unwrap();
        prop_assert!((roc.auc - mann_whitney(&s, &l)).abs() < 1e-9);
        prop_assert!(roc.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        prop_assert_eq!(roc.points[0], (0.0, 0.0));
        prop_assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn roc_invariant_under_monotone_transform(seed in 0u64..10_000, n in 2usize..60) {
        let (s, l) = labelled(seed, n);
        let t: Vec<f64> = s.iter().map(|v| (0.3 * v).exp() * 5.0 - 1.0).collect();
        prop_assert_eq!(roc_curve(&s, &l).unwrap(), roc_curve(&t, &l).unwrap());
    }

    #[test]
    fn z_test_antisymmetric_and_scale_free(seed in 0u64..10_000, c in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, 40, 1.0);
        let b: Vec<f64> = gaussian(&mut rng, 55, 2.0).iter().map(|v| v + 0.3).collect();
        let ab = z_test(&a, &b, 0.01).unwrap();
        let ba = z_test(&b, &a, 0.01).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
        let scaled = z_test(&sa, &sb, 0.01).unwrap();
        prop_assert!((scaled.statistic - ab.statistic).abs() < 1e-12 * ab.statistic.abs().max(1.0));
        prop_assert!((scaled.p_value - ab.p_value).abs() < 1e-12);
    }

    #[test]
    fn widening_bounds_never_adds_alarms(seed in 0u64..10_000, k in 1usize..5, widen in 0.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gaussian(&mut rng, 300, 1.0);
        let narrow = Thresholds::new(0.0, 0.6, k);
        let wide = Thresholds { upper: narrow.upper + widen, lower: narrow.lower - widen, ..narrow };
        let (an, aw) = (raise_alarms(&s, &narrow), raise_alarms(&s, &wide));
        prop_assert!(an.iter().zip(&aw).all(|(n, w)| *n || !*w));
    }

    #[test]
    fn thresholds_shift_equivariant(seed in 0u64..10_000, c in -50.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gaussian(&mut rng, 64, 1.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let (a, b) = (learn_thresholds(&s, 3).unwrap(), learn_thresholds(&shifted, 3).unwrap());
        prop_assert!((b.mean - a.mean - c).abs() < 1e-12 * (1.0 + c.abs()));
        prop_assert!((b.upper - a.upper - c).abs() < 1e-12 * (1.0 + c.abs()));
        prop_assert!((b.lower - a.lower - c).abs() < 1e-12 * (1.0 + c.abs()));
        prop_assert!((b.sigma - a.sigma).abs() < 1e-10);
    }
}

#[test]
fn gaussian_bounds_from_large_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = gaussian(&mut rng, 100_000, 1.0);
    let th = learn_thresholds(&s, 1).unwrap();
    assert!((th.upper - 3.0).abs() < 0.03 && (th.lower + 3.0).abs() < 0.03);
}

#[test]
fn random_scores_have_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let labels: Vec<bool> = (0..10_000).map(|_| rng.random::<bool>()).collect();
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    assert!((roc_curve(&scores, &labels).unwrap().auc - 0.5).abs() < 0.02);
}

#[test]
fn injected_bias_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let n = 2000;
    let x = gaussian(&mut rng, n, 1.0);
    let y = gaussian(&mut rng, n, 1.0);
    let e = gaussian(&mut rng, n, 0.02);
    let z: Vec<f64> = (0..n).map(|i| x[i] + 2.0 * y[i] + e[i]).collect();
    let normal = dataset(vec![("x", x.clone()), ("y", y.clone()), ("z", z.clone())]);
    let spec = forward_select_with_delays(&normal, "z", &SearchConfig::default()).unwrap().unwrap();
    let r = residual_signal(&spec, &normal).unwrap();
    let sd = common::std(&r);
    assert!(r.iter().sum::<f64>().abs() / (r.len() as f64) < 0.01 * common::std(&z));
    let biased = dataset(vec![("x", x), ("y", y), ("z", z.iter().map(|v| v + 5.0 * sd).collect())]);
    let det = detectability(&[spec.clone()], &normal, &biased, 0.01).unwrap();
    assert!(det.detectable && det.tests[0].test.significant);
    let same = detectability(&[spec], &normal, &normal, 0.01).unwrap();
    assert!(!same.detectable);
}

#[test]
fn noiseless_relation_has_zero_residual() {
    let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.21).sin()).collect();
    let y: Vec<f64> = (0..300).map(|i| (i as f64 * 0.05).cos()).collect();
    let z: Vec<f64> = (0..300).map(|i| 4.0 * x[i] - y[i] + 2.0).collect();
    let ds = dataset(vec![("x", x), ("y", y), ("z", z)]);
    let spec = forward_select_with_delays(&ds, "z", &SearchConfig::default()).unwrap().unwrap();
    assert!(residual_signal(&spec, &ds).unwrap().iter().all(|r| r.abs() < 1e-9));
    let missing = dataset(vec![("x", vec![0.0; 10]), ("z", vec![0.0; 10])]);
    assert!(matches!(residual_signal(&spec, &missing), Err(ddarr::Error::Schema(_))));
}
