//! Reference implementations used as test oracles. Everything here is
//! written from the definitions, without calling into the library's
//! numerical code.
#![allow(dead_code)]

use fdr::linalg::Matrix;
use fdr::model::{Dense, MlpHead};
use fdr::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- metrics ----------------------------------------------------------

/// (pred, y, a) triples.
pub type Triple = (u8, u8, u8);

fn rate(triples: &[Triple], keep: impl Fn(&Triple) -> bool, hit: impl Fn(&Triple) -> bool) -> f64 {
    let sel: Vec<&Triple> = triples.iter().filter(|t| keep(t)).collect();
    sel.iter().filter(|t| hit(t)).count() as f64 / sel.len() as f64
}

/// P(pred = 1 | y, a).
fn cond_positive(t: &[Triple], y: u8, a: u8) -> f64 {
    rate(t, |&(_, ty, ta)| ty == y && ta == a, |&(p, _, _)| p == 1)
}

pub fn oracle_eo_diff(t: &[Triple]) -> f64 {
    let fpr = (cond_positive(t, 0, 1) - cond_positive(t, 0, 0)).abs();
    let tpr = (cond_positive(t, 1, 1) - cond_positive(t, 1, 0)).abs();
    if fpr > tpr {
        fpr
    } else {
        tpr
    }
}

pub fn oracle_ae_diff(t: &[Triple]) -> f64 {
    let err = |a: u8| rate(t, |&(_, _, ta)| ta == a, |&(p, y, _)| p != y);
    (err(1) - err(0)).abs()
}

pub fn oracle_worst_acc(t: &[Triple]) -> f64 {
    let mut accs = Vec::new();
    for y in 0..2u8 {
        for a in 0..2u8 {
            accs.push(rate(t, |&(_, ty, ta)| ty == y && ta == a, |&(p, ty, _)| p == ty));
        }
    }
    accs.into_iter().fold(1.0, f64::min)
}

pub fn oracle_wacc(t: &[Triple]) -> f64 {
    let recall = |y: u8| rate(t, |&(_, ty, _)| ty == y, |&(p, _, _)| p == y);
    (recall(0) + recall(1)) / 2.0
}

/// Pairwise Mann-Whitney count, ties worth one half.
pub fn oracle_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..scores.len() {
            if labels[j] != 0 {
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

// ---- forward pass and losses -----------------------------------------

/// Class-1 probability of every row, by a plain loop over the layers.
pub fn oracle_probs(head: &MlpHead, x: &Matrix) -> Vec<f64> {
    let layers = head.layers();
    (0..x.rows())
        .map(|i| {
            let mut h: Vec<f64> = x.row(i).to_vec();
            for (l, layer) in layers.iter().enumerate() {
                let w = &layer.weights;
                let mut z = layer.bias.clone();
                for (k, zk) in z.iter_mut().enumerate() {
                    for (j, hj) in h.iter().enumerate() {
                        *zk += hj * w.get(j, k);
                    }
                }
                if l + 1 < layers.len() {
                    for v in &mut z {
                        *v = v.max(0.0);
                    }
                }
                h = z;
            }
            1.0 / (1.0 + (h[0] - h[1]).exp())
        })
        .collect()
}

/// Smallest |pre-activation| over every hidden unit and row.
pub fn min_hidden_preactivation(head: &MlpHead, x: &Matrix) -> f64 {
    let layers = head.layers();
    let mut min = f64::INFINITY;
    for i in 0..x.rows() {
        let mut h: Vec<f64> = x.row(i).to_vec();
        for layer in &layers[..layers.len() - 1] {
            let mut z = layer.bias.clone();
            for (k, zk) in z.iter_mut().enumerate() {
                for (j, hj) in h.iter().enumerate() {
                    *zk += hj * layer.weights.get(j, k);
                }
            }
            for v in &z {
                min = min.min(v.abs());
            }
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    min
}

fn ce(p1: f64, y: u8) -> f64 {
    let q = if y == 1 { p1 } else { 1.0 - p1 };
    -q.max(1e-12).ln()
}

/// Signed (F, N) terms of the EO penalty straight from the sums.
pub fn oracle_eo_terms(p: &[f64], y: &[u8], a: &[u8]) -> (f64, f64) {
    let (mut fa, mut fna, mut na, mut nna, mut sa, mut sna) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p.len() {
        let (yi, ai) = (f64::from(y[i]), f64::from(a[i]));
        fa += p[i] * (1.0 - yi) * ai;
        fna += p[i] * (1.0 - yi) * (1.0 - ai);
        na += (1.0 - p[i]) * yi * ai;
        nna += (1.0 - p[i]) * yi * (1.0 - ai);
        sa += ai;
        sna += 1.0 - ai;
    }
    (fa / sa - fna / sna, na / sa - nna / sna)
}

pub fn oracle_ae_term(p: &[f64], y: &[u8], a: &[u8]) -> f64 {
    let mean = |attr: u8| {
        let v: Vec<f64> = (0..p.len()).filter(|&i| a[i] == attr).map(|i| ce(p[i], y[i])).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    mean(1) - mean(0)
}

pub fn oracle_group_ce(p: &[f64], y: &[u8], a: &[u8]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (g, slot) in out.iter_mut().enumerate() {
        let (gy, ga) = ((g / 2) as u8, (g % 2) as u8);
        let v: Vec<f64> = (0..p.len())
            .filter(|&i| y[i] == gy && a[i] == ga)
            .map(|i| ce(p[i], y[i]))
            .collect();
        *slot = v.iter().sum::<f64>() / v.len() as f64;
    }
    out
}

pub fn oracle_weighted_ce(p: &[f64], y: &[u8], a: &[u8], w: &[f64; 4]) -> f64 {
    let s: f64 = (0..p.len())
        .map(|i| w[usize::from(y[i]) * 2 + usize::from(a[i])] * ce(p[i], y[i]))
        .sum();
    s / p.len() as f64
}

/// Total objective from the definitions.
pub fn oracle_loss(head: &MlpHead, ds: &GroupedDataset, cfg: &ObjectiveConfig) -> f64 {
    let p = oracle_probs(head, ds.features());
    let (y, a) = (ds.labels(), ds.attributes());
    let wce = oracle_weighted_ce(&p, y, a, &cfg.group_weights.0);
    match cfg.notion {
        FairnessNotion::None => wce,
        FairnessNotion::Eo => {
            let (f, n) = oracle_eo_terms(&p, y, a);
            wce + cfg.alpha * (f.abs() + n.abs())
        }
        FairnessNotion::Ae => wce + cfg.alpha * oracle_ae_term(&p, y, a).abs(),
        FairnessNotion::Mmf => oracle_group_ce(&p, y, a).into_iter().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Distance from the nearest kink of the objective's |·| or max.
pub fn kink_distance(head: &MlpHead, ds: &GroupedDataset, notion: FairnessNotion) -> f64 {
    let p = oracle_probs(head, ds.features());
    let (y, a) = (ds.labels(), ds.attributes());
    match notion {
        FairnessNotion::None => f64::INFINITY,
        FairnessNotion::Eo => {
            let (f, n) = oracle_eo_terms(&p, y, a);
            f.abs().min(n.abs())
        }
        FairnessNotion::Ae => oracle_ae_term(&p, y, a).abs(),
        FairnessNotion::Mmf => {
            let mut g = oracle_group_ce(&p, y, a);
            g.sort_by(|x, z| z.total_cmp(x));
            g[0] - g[1]
        }
    }
}

/// Head with every parameter of layer `l` at flat position `k` shifted by
/// `delta`; positions run over weights (row-major) then bias.
pub fn perturbed(head: &MlpHead, l: usize, k: usize, delta: f64) -> MlpHead {
    let mut layers: Vec<Dense> = head.layers().to_vec();
    let nw = layers[l].weights.rows() * layers[l].weights.cols();
    if k < nw {
        layers[l].weights.as_mut_slice()[k] += delta;
    } else {
        layers[l].bias[k - nw] += delta;
    }
    MlpHead::from_layers(layers, head.freeze_mask().to_vec(), head.seed()).unwrap()
}

pub fn flat(d: &Dense) -> Vec<f64> {
    let mut v = d.weights.as_slice().to_vec();
    v.extend_from_slice(&d.bias);
    v
}

// ---- random fixtures --------------------------------------------------

pub fn random_head(rng: &mut ChaCha8Rng, widths: &[usize]) -> MlpHead {
    let layers = widths
        .windows(2)
        .map(|w| {
            let data = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
            Dense {
                weights: Matrix::from_vec(w[0], w[1], data).unwrap(),
                bias: (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
            }
        })
        .collect::<Vec<_>>();
    let n = layers.len();
    MlpHead::from_layers(layers, vec![false; n], 0).unwrap()
}

/// `n` rows with every group present at least once.
pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GroupedDataset {
    assert!(n >= 4);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut a = Vec::new();
    for i in 0..n {
        let (yi, ai) = if i < 4 {
            ((i / 2) as u8, (i % 2) as u8)
        } else {
            (rng.random_range(0..2u8), rng.random_range(0..2u8))
        };
        rows.push((0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>());
        y.push(yi);
        a.push(ai);
    }
    GroupedDataset::new("batch", Matrix::from_rows(&rows).unwrap(), y, a).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> PerGroup<f64> {
    PerGroup(std::array::from_fn(|_| rng.random_range(0.25..4.0)))
}

/// Outcome of one finite-difference comparison.
pub struct GradCheck {
    pub checked: usize,
    pub worst_violation: f64,
    pub failures: Vec<String>,
}

/// Compare analytic gradients against central differences of the oracle
/// loss. Points closer than 1e-6 to a kink are re-drawn.
pub fn gradient_check(notion: FairnessNotion, hidden: bool, trials: usize, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let step = 1e-4;
    let mut out = GradCheck {
        checked: 0,
        worst_violation: 0.0,
        failures: Vec::new(),
    };
    let d = 4;
    let widths: Vec<usize> = if hidden { vec![d, 6, 2] } else { vec![d, 2] };
    let mut done = 0;
    while done < trials {
        let head = random_head(&mut r, &widths);
        let batch = random_batch(&mut r, 32, d);
        let alpha = if notion.uses_alpha() { r.random_range(0.5..5.0) } else { 0.0 };
        let cfg = ObjectiveConfig::new(notion, alpha, random_weights(&mut r)).unwrap();
        if kink_distance(&head, &batch, notion) < 1e-6
            || (hidden && min_hidden_preactivation(&head, batch.features()) < 1e-3)
        {
            continue;
        }
        done += 1;
        let (loss, grads) = loss_and_grad(&head, &batch, &cfg).unwrap();
        let oracle = oracle_loss(&head, &batch, &cfg);
        if (loss.total - oracle).abs() > 1e-9 * oracle.abs().max(1.0) {
            out.failures.push(format!("{notion}: loss {} vs oracle {}", loss.total, oracle));
        }
        for (l, g) in grads.iter().enumerate() {
            for (k, &analytic) in flat(g).iter().enumerate() {
                let plus = oracle_loss(&perturbed(&head, l, k, step), &batch, &cfg);
                let minus = oracle_loss(&perturbed(&head, l, k, -step), &batch, &cfg);
                let numeric = (plus - minus) / (2.0 * step);
                let tol = (1e-4 * analytic.abs().max(numeric.abs())).max(1e-6);
                let err = (analytic - numeric).abs();
                out.checked += 1;
                out.worst_violation = out.worst_violation.max(err / tol);
                if err > tol {
                    out.failures.push(format!(
                        "{notion} layer {l} coord {k}: analytic {analytic} numeric {numeric}"
                    ));
                }
            }
        }
    }
    out
}

// ---- datasets ---------------------------------------------------------

/// Dataset with the given group counts; features are the row index.
pub fn dataset_with_counts(counts: [usize; 4]) -> GroupedDataset {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut a = Vec::new();
    for (g, &c) in GroupKey::ALL.iter().zip(counts.iter()) {
        for _ in 0..c {
            rows.push(vec![rows.len() as f64]);
            y.push(g.y);
            a.push(g.a);
        }
    }
    GroupedDataset::new("counts", Matrix::from_vec(rows.len(), 1, rows.concat()).unwrap(), y, a).unwrap()
}
