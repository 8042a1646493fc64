use std::collections::BTreeSet;

use gedprobe::eval::f1_score;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts by direct enumeration, then precision/recall/F1 from the textbook
/// definitions.
fn brute(pred: &[bool], gold: &[bool], mask: &BTreeSet<usize>) -> (usize, usize, usize, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..pred.len() {
        if mask.contains(&i) {
            continue;
        }
        match (pred[i], gold[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return (0, 0, 0, 1.0, 1.0, 1.0);
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (tp, fp, fn_, p, r, f)
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..1000 {
        let n = rng.random_range(0..60);
        let rate = rng.random_range(0.0..1.0);
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(rate)).collect();
        let gold: Vec<bool> = (0..n).map(|_| rng.random_bool(rate)).collect();
        let mask: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.1)).collect();
        let use_mask = case % 2 == 0;
        let empty = BTreeSet::new();
        let m = if use_mask { &mask } else { &empty };
        let got = f1_score(&pred, &gold, use_mask.then_some(&mask)).unwrap();
        let (tp, fp, fn_, p, r, f) = brute(&pred, &gold, m);
        assert_eq!(
            (got.true_positives, got.false_positives, got.false_negatives),
            (tp, fp, fn_),
            "case {case}"
        );
        assert_eq!(got.precision, p, "case {case}");
        assert_eq!(got.recall, r, "case {case}");
        assert!((got.f1 - f).abs() <= 1e-12, "case {case}: {} vs {f}", got.f1);
    }
}

#[test]
fn length_mismatch_rejected() {
    assert!(f1_score(&[true], &[true, false], None).is_err());
}
