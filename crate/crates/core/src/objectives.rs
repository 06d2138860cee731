//! Weighted cross-entropy and the three fairness objectives, with analytic
//! gradients.
//!
//! With `p_i` the class-1 softmax probability and `ce_i = -ln q_i(y_i)`:
//!
//! * EO:  `ce_w + alpha * (fpr + fnr)` where
//!   `fpr = |Σ p(1-y)a / Σa - Σ p(1-y)(1-a) / Σ(1-a)|` and
//!   `fnr = |Σ (1-p)ya / Σa - Σ (1-p)y(1-a) / Σ(1-a)|`.
//! * AE:  `ce_w + alpha * |mean ce(a=1) - mean ce(a=0)|`.
//! * MMF: `max_g mean ce(g)` over the four (y, a) groups.
//!
//! `ce_w` is the group-weighted mean cross-entropy; the penalty terms use
//! unweighted per-sample losses. `|x|` is differentiated with
//! `sign(0) = 0` and the MMF max through the first maximizing group.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{GroupKey, GroupedDataset, PerGroup};
use crate::error::{FdrError, Result};
use crate::linalg::Matrix;
use crate::model::{Dense, MlpHead, PredictionBatch};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessNotion {
    None,
    Eo,
    Ae,
    Mmf,
}

impl FairnessNotion {
    pub const ALL: [FairnessNotion; 4] = [
        FairnessNotion::None,
        FairnessNotion::Eo,
        FairnessNotion::Ae,
        FairnessNotion::Mmf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FairnessNotion::None => "none",
            FairnessNotion::Eo => "eo",
            FairnessNotion::Ae => "ae",
            FairnessNotion::Mmf => "mmf",
        }
    }

    /// Whether the objective has an `alpha` weight.
    pub fn uses_alpha(self) -> bool {
        matches!(self, FairnessNotion::Eo | FairnessNotion::Ae)
    }
}

impl fmt::Display for FairnessNotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FairnessNotion {
    type Err = FdrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FairnessNotion::None),
            "eo" => Ok(FairnessNotion::Eo),
            "ae" => Ok(FairnessNotion::Ae),
            "mmf" => Ok(FairnessNotion::Mmf),
            other => Err(FdrError::InvalidArgument(format!("unknown fairness notion '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub notion: FairnessNotion,
    pub alpha: f64,
    pub group_weights: PerGroup<f64>,
}

impl ObjectiveConfig {
    pub fn new(notion: FairnessNotion, alpha: f64, group_weights: PerGroup<f64>) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(FdrError::Config(format!("alpha must be finite and non-negative, got {alpha}")));
        }
        if group_weights.0.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(FdrError::Config(format!(
                "group weights must be positive, got {:?}",
                group_weights.0
            )));
        }
        Ok(ObjectiveConfig {
            notion,
            alpha,
            group_weights,
        })
    }

    /// Unweighted cross-entropy, no penalty.
    pub fn plain() -> Self {
        ObjectiveConfig {
            notion: FairnessNotion::None,
            alpha: 0.0,
            group_weights: PerGroup::splat(1.0),
        }
    }

    /// Same weights, penalty switched off.
    pub fn ce_only(&self) -> Self {
        ObjectiveConfig {
            notion: FairnessNotion::None,
            alpha: 0.0,
            group_weights: self.group_weights,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Group-weighted mean cross-entropy.
    pub ce: f64,
    /// `fpr + fnr` (EO), the CE gap (AE), the worst group CE (MMF) or 0.
    pub penalty: f64,
    /// Unweighted mean CE per group; 0 for groups absent from the batch.
    pub per_group_ce: [f64; 4],
    pub fpr_term: f64,
    pub fnr_term: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.ce.is_finite()
            && self.penalty.is_finite()
            && self.fpr_term.is_finite()
            && self.fnr_term.is_finite()
            && self.per_group_ce.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn true_class_prob(probs: &Matrix, i: usize, y: u8) -> f64 {
    probs.get(i, usize::from(y))
}

#[inline]
fn sample_ce(q: f64) -> f64 {
    -q.max(PROB_FLOOR).ln()
}

fn check_lengths(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<()> {
    for len in [labels.len(), attributes.len()] {
        if len != probs.rows() {
            return Err(FdrError::DimensionMismatch {
                expected: probs.rows(),
                found: len,
            });
        }
    }
    if probs.rows() == 0 {
        return Err(FdrError::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

fn attribute_counts(attributes: &[u8], context: &str) -> Result<(f64, f64)> {
    let s1 = attributes.iter().filter(|&&a| a == 1).count();
    let s0 = attributes.len() - s1;
    for (a, c) in [(0u8, s0), (1u8, s1)] {
        if c == 0 {
            return Err(FdrError::EmptyAttributeGroup {
                attribute: a,
                context: context.to_string(),
            });
        }
    }
    Ok((s0 as f64, s1 as f64))
}

/// `(1/n) Σ w_g(i) · (-ln max(q_i, 1e-12))`.
pub fn weighted_ce(probs: &Matrix, labels: &[u8], attributes: &[u8], weights: &PerGroup<f64>) -> Result<f64> {
    check_lengths(probs, labels, attributes)?;
    let n = labels.len() as f64;
    let mut sum = 0.0;
    for i in 0..labels.len() {
        let g = GroupKey { y: labels[i], a: attributes[i] };
        sum += weights[g] * sample_ce(true_class_prob(probs, i, labels[i]));
    }
    Ok(sum / n)
}

/// Signed inner differences `(F, N)` of the EO penalty, before `|·|`.
fn eo_raw(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<(f64, f64)> {
    check_lengths(probs, labels, attributes)?;
    let (s0, s1) = attribute_counts(attributes, "equalized odds penalty")?;
    let (mut f1, mut f0, mut n1, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..labels.len() {
        let p = probs.get(i, 1);
        match (labels[i], attributes[i]) {
            (0, 1) => f1 += p,
            (0, _) => f0 += p,
            (_, 1) => n1 += 1.0 - p,
            _ => n0 += 1.0 - p,
        }
    }
    Ok((f1 / s1 - f0 / s0, n1 / s1 - n0 / s0))
}

/// `(fpr_term, fnr_term)`.
pub fn eo_penalty(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<(f64, f64)> {
    let (f, n) = eo_raw(probs, labels, attributes)?;
    Ok((f.abs(), n.abs()))
}

/// Unweighted mean CE over a=1 minus that over a=0.
fn ae_raw(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<f64> {
    check_lengths(probs, labels, attributes)?;
    let (s0, s1) = attribute_counts(attributes, "accuracy equality penalty")?;
    let (mut l1, mut l0) = (0.0, 0.0);
    for i in 0..labels.len() {
        let ce = sample_ce(true_class_prob(probs, i, labels[i]));
        if attributes[i] == 1 {
            l1 += ce;
        } else {
            l0 += ce;
        }
    }
    Ok(l1 / s1 - l0 / s0)
}

pub fn ae_penalty(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<f64> {
    Ok(ae_raw(probs, labels, attributes)?.abs())
}

/// Unweighted mean CE of each group, with the group sizes.
fn group_ce(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> ([f64; 4], [usize; 4]) {
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for i in 0..labels.len() {
        let g = GroupKey { y: labels[i], a: attributes[i] }.index();
        sums[g] += sample_ce(true_class_prob(probs, i, labels[i]));
        counts[g] += 1;
    }
    for g in 0..4 {
        if counts[g] > 0 {
            sums[g] /= counts[g] as f64;
        }
    }
    (sums, counts)
}

/// Worst group CE and the group attaining it (first in group order on ties).
pub fn mmf_objective(probs: &Matrix, labels: &[u8], attributes: &[u8]) -> Result<(f64, GroupKey)> {
    check_lengths(probs, labels, attributes)?;
    let (ce, counts) = group_ce(probs, labels, attributes);
    if let Some(g) = (0..4).find(|&g| counts[g] == 0) {
        return Err(FdrError::EmptyGroup {
            group: GroupKey::ALL[g],
            context: "max-min fairness objective".into(),
        });
    }
    let mut best = 0;
    for g in 1..4 {
        if ce[g] > ce[best] {
            best = g;
        }
    }
    Ok((ce[best], GroupKey::ALL[best]))
}

/// Loss and gradient with respect to every layer of `head` (zeros for frozen
/// layers).
pub fn loss_and_grad(head: &MlpHead, batch: &GroupedDataset, cfg: &ObjectiveConfig) -> Result<(LossBreakdown, Vec<Dense>)> {
    if batch.dim() != head.dims().input {
        return Err(FdrError::DimensionMismatch {
            expected: head.dims().input,
            found: batch.dim(),
        });
    }
    loss_and_grad_from(head, 0, batch.features().clone(), batch.labels(), batch.attributes(), cfg)
}

/// Loss only, no gradient.
pub fn evaluate_loss(head: &MlpHead, batch: &GroupedDataset, cfg: &ObjectiveConfig) -> Result<LossBreakdown> {
    let pred = head.forward(batch.features())?;
    let (loss, _) = loss_and_dlogits(&pred.probs, batch.labels(), batch.attributes(), cfg)?;
    Ok(loss)
}

/// As [`loss_and_grad`], starting from the input `h` of layer `start`.
pub(crate) fn loss_and_grad_from(
    head: &MlpHead,
    start: usize,
    h: Matrix,
    labels: &[u8],
    attributes: &[u8],
    cfg: &ObjectiveConfig,
) -> Result<(LossBreakdown, Vec<Dense>)> {
    let acts = head.activations_from(start, h);
    let pred = PredictionBatch::from_logits(acts.last().unwrap().clone());
    let (loss, dlogits) = loss_and_dlogits(&pred.probs, labels, attributes, cfg)?;
    let grads = head.backward(start, &acts, dlogits);
    Ok((loss, grads))
}

/// Loss and its gradient with respect to the logits.
pub(crate) fn loss_and_dlogits(
    probs: &Matrix,
    labels: &[u8],
    attributes: &[u8],
    cfg: &ObjectiveConfig,
) -> Result<(LossBreakdown, Matrix)> {
    check_lengths(probs, labels, attributes)?;
    let n = labels.len();
    let nf = n as f64;
    let group = |i: usize| GroupKey { y: labels[i], a: attributes[i] };

    let ce = weighted_ce(probs, labels, attributes, &cfg.group_weights)?;
    let (per_group_ce, counts) = group_ce(probs, labels, attributes);
    let mut loss = LossBreakdown {
        ce,
        per_group_ce,
        ..LossBreakdown::default()
    };

    // d total / d ce_i and d total / d p_i.
    let mut ce_coef = vec![0.0; n];
    let mut p_coef = vec![0.0; n];

    match cfg.notion {
        FairnessNotion::None | FairnessNotion::Eo | FairnessNotion::Ae => {
            for (i, c) in ce_coef.iter_mut().enumerate() {
                *c = cfg.group_weights[group(i)] / nf;
            }
        }
        FairnessNotion::Mmf => {}
    }

    match cfg.notion {
        FairnessNotion::None => {
            loss.total = ce;
        }
        FairnessNotion::Eo => {
            let (f, m) = eo_raw(probs, labels, attributes)?;
            let (s0, s1) = attribute_counts(attributes, "equalized odds penalty")?;
            loss.fpr_term = f.abs();
            loss.fnr_term = m.abs();
            loss.penalty = loss.fpr_term + loss.fnr_term;
            loss.total = ce + cfg.alpha * loss.penalty;
            let (sf, sn) = (cfg.alpha * sign(f), cfg.alpha * sign(m));
            for (i, c) in p_coef.iter_mut().enumerate() {
                *c = match (labels[i], attributes[i]) {
                    (0, 1) => sf / s1,
                    (0, _) => -sf / s0,
                    (_, 1) => -sn / s1,
                    _ => sn / s0,
                };
            }
        }
        FairnessNotion::Ae => {
            let d = ae_raw(probs, labels, attributes)?;
            let (s0, s1) = attribute_counts(attributes, "accuracy equality penalty")?;
            loss.penalty = d.abs();
            loss.total = ce + cfg.alpha * loss.penalty;
            let s = cfg.alpha * sign(d);
            for (i, c) in ce_coef.iter_mut().enumerate() {
                *c += if attributes[i] == 1 { s / s1 } else { -s / s0 };
            }
        }
        FairnessNotion::Mmf => {
            let (value, worst) = mmf_objective(probs, labels, attributes)?;
            loss.penalty = value;
            loss.total = value;
            let share = 1.0 / counts[worst.index()] as f64;
            for (i, c) in ce_coef.iter_mut().enumerate() {
                if group(i) == worst {
                    *c = share;
                }
            }
        }
    }

    let mut dlogits = Matrix::zeros(n, 2);
    for i in 0..n {
        let (q0, q1) = (probs.get(i, 0), probs.get(i, 1));
        let y = usize::from(labels[i]);
        let mut d = [0.0, 0.0];
        if ce_coef[i] != 0.0 && probs.get(i, y) >= PROB_FLOOR {
            d[0] = ce_coef[i] * q0;
            d[1] = ce_coef[i] * q1;
            d[y] -= ce_coef[i];
        }
        if p_coef[i] != 0.0 {
            let dp = p_coef[i] * q0 * q1;
            d[0] -= dp;
            d[1] += dp;
        }
        dlogits.row_mut(i).copy_from_slice(&d);
    }
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_from_p1(p1: &[f64]) -> Matrix {
        Matrix::from_rows(&p1.iter().map(|&p| vec![1.0 - p, p]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn weighted_ce_cases() {
        let w1 = PerGroup::splat(1.0);
        let perfect = probs_from_p1(&[0.0, 1.0]);
        assert_eq!(weighted_ce(&perfect, &[0, 1], &[0, 1], &w1).unwrap(), 0.0);
        let uniform = probs_from_p1(&[0.5, 0.5, 0.5]);
        let v = weighted_ce(&uniform, &[0, 1, 1], &[0, 0, 1], &w1).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);

        // true-class probs 0.8 and 0.4, weights 2.5 and 0.625
        let w = PerGroup([2.5, 0.625, 0.625, 2.5]);
        let p = probs_from_p1(&[0.2, 0.4]);
        let v = weighted_ce(&p, &[0, 1], &[0, 0], &w).unwrap();
        let expected = (2.5 * -(0.8f64).ln() + 0.625 * -(0.4f64).ln()) / 2.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.5653).abs() < 1e-4);
    }

    #[test]
    fn eo_two_samples() {
        let p = probs_from_p1(&[0.8, 0.6]);
        let (fpr, fnr) = eo_penalty(&p, &[0, 0], &[1, 0]).unwrap();
        assert!((fpr - 0.2).abs() < 1e-15);
        assert_eq!(fnr, 0.0);
        assert!(matches!(
            eo_penalty(&p, &[0, 0], &[1, 1]),
            Err(FdrError::EmptyAttributeGroup { attribute: 0, .. })
        ));
    }

    #[test]
    fn ae_analytic() {
        // a=1 rows perfect, a=0 rows uniform
        let p = probs_from_p1(&[1.0, 0.0, 0.5, 0.5]);
        let v = ae_penalty(&p, &[1, 0, 0, 1], &[1, 1, 0, 0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mmf_tie_goes_to_first_group() {
        let p = probs_from_p1(&[0.5, 0.5, 0.5, 0.5]);
        let (v, g) = mmf_objective(&p, &[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, GroupKey::new(0, 0));
        assert!(mmf_objective(&p, &[0, 0, 1, 1], &[0, 0, 0, 1]).is_err());
    }

    #[test]
    fn alpha_zero_reduces_to_ce() {
        let p = probs_from_p1(&[0.3, 0.9, 0.2, 0.6]);
        let (l, a) = (vec![0, 1, 0, 1], vec![0, 0, 1, 1]);
        let w = PerGroup([1.0, 2.0, 0.5, 3.0]);
        let cfg = ObjectiveConfig::new(FairnessNotion::Eo, 0.0, w).unwrap();
        let (loss, _) = loss_and_dlogits(&p, &l, &a, &cfg).unwrap();
        assert_eq!(loss.total, weighted_ce(&p, &l, &a, &w).unwrap());
        assert!(loss.penalty > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(ObjectiveConfig::new(FairnessNotion::Eo, -1.0, PerGroup::splat(1.0)).is_err());
        assert!(ObjectiveConfig::new(FairnessNotion::Eo, 1.0, PerGroup([1.0, 0.0, 1.0, 1.0])).is_err());
        assert_eq!("MMF".parse::<FairnessNotion>().unwrap(), FairnessNotion::Mmf);
        assert!("dp".parse::<FairnessNotion>().is_err());
    }
}
