mod common;

use common::*;
use fdr::metrics::{self, af, auc, confusion, report_from_predictions};
use fdr::model::PredictionBatch;
use fdr::prelude::*;
use proptest::prelude::*;
use rand::Rng;

/// Labels and attributes with `k[g]` samples in group g.
fn fixture(k: [usize; 4]) -> (Vec<u8>, Vec<u8>) {
    let mut y = Vec::new();
    let mut a = Vec::new();
    for (g, &c) in GroupKey::ALL.iter().zip(k.iter()) {
        for _ in 0..c {
            y.push(g.y);
            a.push(g.a);
        }
    }
    (y, a)
}

#[test]
fn exhaustive_prediction_patterns_match_oracle() {
    let fixtures = [[2, 2, 2, 2], [3, 2, 3, 2], [2, 3, 2, 3], [3, 3, 3, 3]];
    let mut patterns = 0;
    for k in fixtures {
        let (y, a) = fixture(k);
        let n = y.len();
        for mask in 0u32..(1 << n) {
            let preds: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let triples: Vec<Triple> = (0..n).map(|i| (preds[i], y[i], a[i])).collect();
            let c = confusion(&preds, &y, &a).unwrap();
            assert!((metrics::eo_diff(&c).unwrap() - oracle_eo_diff(&triples)).abs() < 1e-12);
            assert!((metrics::ae_diff(&c).unwrap() - oracle_ae_diff(&triples)).abs() < 1e-12);
            assert!((metrics::worst_acc(&c).unwrap() - oracle_worst_acc(&triples)).abs() < 1e-12);
            assert!((metrics::wacc(&c).unwrap() - oracle_wacc(&triples)).abs() < 1e-12);
            patterns += 1;
        }
    }
    assert_eq!(patterns, 256 + 1024 + 1024 + 4096);
}

#[test]
fn eight_sample_fixture() {
    // (a0,y0) {0,1}; (a0,y1) {1,1}; (a1,y0) {0,0}; (a1,y1) {1,0}
    let y = [0, 0, 1, 1, 0, 0, 1, 1];
    let a = [0, 0, 0, 0, 1, 1, 1, 1];
    let p = [0, 1, 1, 1, 0, 0, 1, 0];
    let c = confusion(&p, &y, &a).unwrap();
    assert_eq!(c.count, [2, 2, 2, 2]);
    assert_eq!(c.correct, [1, 2, 2, 1]);
    assert_eq!(metrics::eo_diff(&c).unwrap(), 0.5);
    assert_eq!(metrics::ae_diff(&c).unwrap(), 0.0);
    assert_eq!(metrics::worst_acc(&c).unwrap(), 0.5);
    assert_eq!(metrics::wacc(&c).unwrap(), 0.75);
}

#[test]
fn degenerate_inputs() {
    assert!(confusion(&[], &[], &[]).is_err());
    assert!(confusion(&[0, 1], &[0], &[0, 1]).is_err());
    let c = confusion(&[0, 0], &[0, 1], &[0, 0]).unwrap();
    assert!(matches!(metrics::eo_diff(&c), Err(FdrError::EmptyGroup { .. })));
    // all-zero predictor on both classes
    let c = confusion(&[0, 0, 0, 0], &[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    assert_eq!(metrics::wacc(&c).unwrap(), 0.5);
    // one attribute group all wrong, the other all right
    let c = confusion(&[1, 0, 0, 1], &[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
    assert_eq!(metrics::ae_diff(&c).unwrap(), 1.0);
}

#[test]
fn auc_matches_pair_counting_on_random_scores() {
    let mut r = rng(7);
    for trial in 0..1000 {
        let n = r.random_range(2..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores force ties on some trials
        let levels = if trial % 2 == 0 { 5 } else { 1000 };
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..levels)) / levels as f64).collect();
        let got = auc(&scores, &labels).unwrap();
        assert!((got - oracle_auc(&scores, &labels)).abs() < 1e-12, "trial {trial}");
    }
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(auc(&[f64::NAN, 0.2], &[0, 1]).is_err());
}

#[test]
fn af_identities() {
    assert!((af(0.892, 0.107, FairnessNotion::Eo) - 0.785).abs() < 1e-12);
    assert!((af(0.900, 0.003, FairnessNotion::Ae) - 0.897).abs() < 1e-12);
    assert!((af(0.898, 0.803, FairnessNotion::Mmf) - 1.701).abs() < 1e-12);
    assert_eq!(af(0.7, 0.3, FairnessNotion::None), 0.7);
}

#[test]
fn report_is_consistent() {
    let y = vec![0, 0, 1, 1, 0, 0, 1, 1];
    let a = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let logits: Vec<Vec<f64>> = [-1.4, 0.8, 2.2, 0.4, -2.2, -0.4, 1.4, -0.8].iter().map(|&z| vec![0.0, z]).collect();
    let pred = PredictionBatch::from_logits(Matrix::from_rows(&logits).unwrap());
    for notion in FairnessNotion::ALL {
        let r = report_from_predictions(&pred, &y, &a, notion).unwrap();
        assert_eq!(r.n, 8);
        assert!((r.af - af(r.wacc, r.fairness_value(), notion)).abs() < 1e-12);
        let row = r.to_csv_row();
        assert_eq!(row.split(',').count(), metrics::METRICS_CSV_HEADER.split(',').count());
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["notion"], notion.as_str());
    }
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<u8>)> {
    (8..max).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0..2u8, n),
            prop::collection::vec(0..2u8, n),
        )
    })
}

proptest! {
    #[test]
    fn auc_invariant_under_increasing_transform((scores, labels, _) in labelled(40)) {
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert!((auc(&scores, &labels).unwrap() - auc(&t, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn group_metrics_permutation_invariant((scores, y, a) in labelled(40), seed in 0u64..1000) {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let c = confusion(&preds, &y, &a).unwrap();
        prop_assume!(c.count.iter().all(|&k| k > 0));
        let mut order: Vec<usize> = (0..y.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng(seed));
        let pick = |v: &[u8]| order.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let c2 = confusion(&pick(&preds), &pick(&y), &pick(&a)).unwrap();
        prop_assert_eq!(metrics::eo_diff(&c).unwrap(), metrics::eo_diff(&c2).unwrap());
        prop_assert_eq!(metrics::ae_diff(&c).unwrap(), metrics::ae_diff(&c2).unwrap());
        prop_assert_eq!(metrics::worst_acc(&c).unwrap(), metrics::worst_acc(&c2).unwrap());
        prop_assert_eq!(metrics::wacc(&c).unwrap(), metrics::wacc(&c2).unwrap());
    }

    #[test]
    fn metrics_stay_in_unit_interval((scores, y, a) in labelled(60)) {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let c = confusion(&preds, &y, &a).unwrap();
        prop_assume!(c.count.iter().all(|&k| k > 0));
        for v in [metrics::eo_diff(&c).unwrap(), metrics::ae_diff(&c).unwrap(),
                  metrics::worst_acc(&c).unwrap(), metrics::wacc(&c).unwrap(), auc(&scores, &y).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for g in 0..4 {
            prop_assert!(c.correct[g] <= c.count[g]);
        }
    }
}
