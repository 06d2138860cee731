//! Accuracy and fairness metrics from hard predictions, plus AUC from
//! class-1 scores.
//!
//! * EO_Diff: `max(|FPR(a=0) - FPR(a=1)|, |TPR(a=0) - TPR(a=1)|)`
//! * AE_Diff: `|err(a=0) - err(a=1)|`
//! * WA: smallest of the four group accuracies
//! * WACC: mean per-class recall
//! * AF: `WACC - EO_Diff`, `WACC - AE_Diff` or `WACC + WA` by notion
//!   (`WACC` alone when no notion is active).

use serde::{Deserialize, Serialize};

use crate::dataset::{GroupKey, GroupedDataset};
use crate::error::{FdrError, Result};
use crate::model::{MlpHead, PredictionBatch};
use crate::objectives::FairnessNotion;

/// Per-group sufficient statistics, indexed in [`GroupKey::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub count: [usize; 4],
    pub correct: [usize; 4],
    pub predicted_positive: [usize; 4],
}

pub fn confusion(preds: &[u8], labels: &[u8], attributes: &[u8]) -> Result<GroupConfusion> {
    for len in [labels.len(), attributes.len()] {
        if len != preds.len() {
            return Err(FdrError::DimensionMismatch {
                expected: preds.len(),
                found: len,
            });
        }
    }
    if preds.is_empty() {
        return Err(FdrError::InvalidArgument("no predictions to score".into()));
    }
    let mut c = GroupConfusion::default();
    for i in 0..preds.len() {
        let g = GroupKey { y: labels[i], a: attributes[i] }.index();
        c.count[g] += 1;
        c.correct[g] += usize::from(preds[i] == labels[i]);
        c.predicted_positive[g] += usize::from(preds[i] == 1);
    }
    Ok(c)
}

impl GroupConfusion {
    fn require_group(&self, g: GroupKey, context: &str) -> Result<f64> {
        match self.count[g.index()] {
            0 => Err(FdrError::EmptyGroup {
                group: g,
                context: context.to_string(),
            }),
            c => Ok(c as f64),
        }
    }

    pub fn group_accuracy(&self, g: GroupKey) -> Result<f64> {
        let n = self.require_group(g, "group accuracy")?;
        Ok(self.correct[g.index()] as f64 / n)
    }

    /// Rate of class-1 predictions within group `g`.
    pub fn positive_rate(&self, g: GroupKey) -> Result<f64> {
        let n = self.require_group(g, "positive rate")?;
        Ok(self.predicted_positive[g.index()] as f64 / n)
    }

    pub fn attribute_error_rate(&self, a: u8) -> Result<f64> {
        let (g0, g1) = (GroupKey::new(0, a).index(), GroupKey::new(1, a).index());
        let n = self.count[g0] + self.count[g1];
        if n == 0 {
            return Err(FdrError::EmptyAttributeGroup {
                attribute: a,
                context: "error rate".into(),
            });
        }
        let wrong = n - self.correct[g0] - self.correct[g1];
        Ok(wrong as f64 / n as f64)
    }

    pub fn class_recall(&self, y: u8) -> Result<f64> {
        let (g0, g1) = (GroupKey::new(y, 0).index(), GroupKey::new(y, 1).index());
        let n = self.count[g0] + self.count[g1];
        if n == 0 {
            return Err(FdrError::InvalidArgument(format!("no samples of class {y}")));
        }
        Ok((self.correct[g0] + self.correct[g1]) as f64 / n as f64)
    }

    pub fn total(&self) -> usize {
        self.count.iter().sum()
    }
}

pub fn eo_diff(conf: &GroupConfusion) -> Result<f64> {
    let fpr_gap = conf.positive_rate(GroupKey::new(0, 0))? - conf.positive_rate(GroupKey::new(0, 1))?;
    let tpr_gap = conf.positive_rate(GroupKey::new(1, 0))? - conf.positive_rate(GroupKey::new(1, 1))?;
    Ok(fpr_gap.abs().max(tpr_gap.abs()))
}

pub fn ae_diff(conf: &GroupConfusion) -> Result<f64> {
    Ok((conf.attribute_error_rate(0)? - conf.attribute_error_rate(1)?).abs())
}

pub fn worst_acc(conf: &GroupConfusion) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for g in GroupKey::ALL {
        worst = worst.min(conf.group_accuracy(g)?);
    }
    Ok(worst)
}

pub fn wacc(conf: &GroupConfusion) -> Result<f64> {
    Ok(0.5 * (conf.class_recall(0)? + conf.class_recall(1)?))
}

pub fn accuracy(conf: &GroupConfusion) -> f64 {
    conf.correct.iter().sum::<usize>() as f64 / conf.total() as f64
}

/// Mann-Whitney AUC: the share of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from average ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(FdrError::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(FdrError::InvalidArgument("NaN score".into()));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(FdrError::InvalidArgument("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Sum of 1-based ranks of the positives, ties sharing their average rank.
    // Ranks are multiples of 1/2, so the sum is exact.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += avg_rank * positives as f64;
        start = end;
    }
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    Ok((rank_sum - n1f * (n1f + 1.0) / 2.0) / (n1f * n0f))
}

/// Composite accuracy-fairness score.
pub fn af(wacc: f64, fairness_value: f64, notion: FairnessNotion) -> f64 {
    match notion {
        FairnessNotion::Eo | FairnessNotion::Ae => wacc - fairness_value,
        FairnessNotion::Mmf => wacc + fairness_value,
        FairnessNotion::None => wacc,
    }
}

pub const METRICS_CSV_HEADER: &str = "notion,n,wacc,accuracy,auc,eo_diff,ae_diff,wa,af";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub notion: FairnessNotion,
    pub n: usize,
    pub wacc: f64,
    /// Plain accuracy, reported next to the balanced WACC.
    pub accuracy: f64,
    pub auc: f64,
    pub eo_diff: f64,
    pub ae_diff: f64,
    pub wa: f64,
    pub af: f64,
    pub group_accuracy: [f64; 4],
    pub confusion: GroupConfusion,
}

impl MetricsReport {
    /// The disparity (EO, AE) or worst accuracy (MMF) AF is built from.
    pub fn fairness_value(&self) -> f64 {
        fairness_value(self.notion, self.eo_diff, self.ae_diff, self.wa)
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.notion, self.n, self.wacc, self.accuracy, self.auc, self.eo_diff, self.ae_diff, self.wa, self.af
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fairness_value(notion: FairnessNotion, eo: f64, ae: f64, wa: f64) -> f64 {
    match notion {
        FairnessNotion::Eo => eo,
        FairnessNotion::Ae => ae,
        FairnessNotion::Mmf => wa,
        FairnessNotion::None => 0.0,
    }
}

/// Score predictions against a dataset that contains all four groups.
pub fn report_from_predictions(
    pred: &PredictionBatch,
    labels: &[u8],
    attributes: &[u8],
    notion: FairnessNotion,
) -> Result<MetricsReport> {
    let conf = confusion(&pred.hard, labels, attributes)?;
    let wacc_v = wacc(&conf)?;
    let eo = eo_diff(&conf)?;
    let ae = ae_diff(&conf)?;
    let wa = worst_acc(&conf)?;
    let mut group_accuracy = [0.0; 4];
    for g in GroupKey::ALL {
        group_accuracy[g.index()] = conf.group_accuracy(g)?;
    }
    Ok(MetricsReport {
        notion,
        n: labels.len(),
        wacc: wacc_v,
        accuracy: accuracy(&conf),
        auc: auc(&pred.positive_probs(), labels)?,
        eo_diff: eo,
        ae_diff: ae,
        wa,
        af: af(wacc_v, fairness_value(notion, eo, ae, wa), notion),
        group_accuracy,
        confusion: conf,
    })
}

pub fn evaluate(head: &MlpHead, ds: &GroupedDataset, notion: FairnessNotion) -> Result<MetricsReport> {
    let pred = head.forward(ds.features())?;
    report_from_predictions(&pred, ds.labels(), ds.attributes(), notion)
}
