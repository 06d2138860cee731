use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::objectives::{FairnessNotion, LossBreakdown};
use crate::surgical::RgnReport;
use crate::trainer::{EpochRecord, HyperParams};

/// First, last and component-wise minimum of a loss trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub epochs: usize,
    pub first: Option<LossBreakdown>,
    pub last: Option<LossBreakdown>,
    pub min: Option<LossBreakdown>,
    /// Largest penalty seen in any epoch.
    pub max_penalty: f64,
    pub fallback_steps: usize,
}

impl TraceSummary {
    pub fn from_trace(trace: &[EpochRecord]) -> Self {
        let mut min: Option<LossBreakdown> = None;
        for r in trace {
            let l = &r.loss;
            min = Some(match min {
                None => *l,
                Some(m) => LossBreakdown {
                    total: m.total.min(l.total),
                    ce: m.ce.min(l.ce),
                    penalty: m.penalty.min(l.penalty),
                    per_group_ce: std::array::from_fn(|g| m.per_group_ce[g].min(l.per_group_ce[g])),
                    fpr_term: m.fpr_term.min(l.fpr_term),
                    fnr_term: m.fnr_term.min(l.fnr_term),
                },
            });
        }
        TraceSummary {
            epochs: trace.len(),
            first: trace.first().map(|r| r.loss),
            last: trace.last().map(|r| r.loss),
            min,
            max_penalty: trace.iter().map(|r| r.loss.penalty).fold(0.0, f64::max),
            fallback_steps: trace.iter().map(|r| r.fallback_steps).sum(),
        }
    }
}

/// One training run: recipe, notion, seed and hyperparameters with the
/// resulting train and test reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub notion: FairnessNotion,
    pub seed: u64,
    pub hyperparameters: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surgical: Option<String>,
    pub frozen_layers: Vec<bool>,
    /// Scored on the data the recipe fine-tunes on.
    pub train: MetricsReport,
    pub test: MetricsReport,
    /// Scored on the held-out selection split when one exists.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<MetricsReport>,
    pub wall_time_s: f64,
    pub trace: TraceSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rgn: Option<RgnReport>,
}

pub fn write_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| crate::error::FdrError::io("<jsonl>", e))?;
    }
    Ok(())
}
