//! Hyperparameter grid search.
//!
//! A trajectory is trained once per `(learning_rate, alpha)` pair and
//! scored at every epoch count of the grid, which gives the same heads as
//! separate runs because training is deterministic.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub learning_rates: Vec<f64>,
    pub epochs_options: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl SweepGrid {
    /// Search ranges used for the last-layer methods.
    pub fn paper() -> Self {
        SweepGrid {
            learning_rates: vec![3e-4, 1e-3, 3e-3],
            epochs_options: vec![500, 1000, 1500, 2000],
            alphas: vec![0.5, 1.0, 2.0, 5.0, 10.0],
        }
    }

    pub fn singleton(learning_rate: f64, epochs: usize, alpha: f64) -> Self {
        SweepGrid {
            learning_rates: vec![learning_rate],
            epochs_options: vec![epochs],
            alphas: vec![alpha],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.epochs_options.is_empty() || self.alphas.is_empty() {
            return Err(FdrError::Config("sweep grid lists must be nonempty".into()));
        }
        if self.learning_rates.iter().any(|&lr| !(lr >= 0.0 && lr.is_finite())) {
            return Err(FdrError::Config("learning rates must be finite and non-negative".into()));
        }
        if self.alphas.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(FdrError::Config("alphas must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grid: SweepGrid = toml::from_str(text).map_err(|e| FdrError::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    /// Every grid point; alpha is dropped when the objective has none.
    pub fn points(&self, use_alpha: bool) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for (lr, alpha) in self.trajectories(use_alpha) {
            for epochs in self.sorted_epochs() {
                out.push(HyperParams {
                    learning_rate: lr,
                    epochs,
                    alpha,
                });
            }
        }
        out
    }

    fn trajectories(&self, use_alpha: bool) -> Vec<(f64, Option<f64>)> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            if use_alpha {
                out.extend(self.alphas.iter().map(|&a| (lr, Some(a))));
            } else {
                out.push((lr, None));
            }
        }
        out
    }

    fn sorted_epochs(&self) -> Vec<usize> {
        let mut e = self.epochs_options.clone();
        e.sort_unstable();
        e.dedup();
        e
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub alpha: Option<f64>,
}

impl HyperParams {
    /// Tie-break order: smaller epochs, then learning rate, then alpha.
    fn tie_key_cmp(&self, other: &HyperParams) -> Ordering {
        self.epochs
            .cmp(&other.epochs)
            .then(self.learning_rate.total_cmp(&other.learning_rate))
            .then(self.alpha.unwrap_or(0.0).total_cmp(&other.alpha.unwrap_or(0.0)))
    }
}

#[derive(Clone, Debug)]
pub struct SweepEntry<T> {
    pub params: HyperParams,
    /// Selection score and payload, or the failure message.
    pub outcome: std::result::Result<(f64, T), String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome<T> {
    pub best: HyperParams,
    pub best_index: usize,
    pub entries: Vec<SweepEntry<T>>,
}

impl<T> SweepOutcome<T> {
    pub fn best_entry(&self) -> &SweepEntry<T> {
        &self.entries[self.best_index]
    }
}

/// Index of the highest-scoring successful entry (NaN scores count as
/// failures), with ties resolved by [`HyperParams`] order.
pub fn select_best<T>(entries: &[SweepEntry<T>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        let Ok((score, _)) = &e.outcome else { continue };
        if score.is_nan() {
            continue;
        }
        best = match best {
            None => Some((i, *score)),
            Some((j, s)) => {
                let better = *score > s
                    || (*score == s && e.params.tie_key_cmp(&entries[j].params) == Ordering::Less);
                if better {
                    Some((i, *score))
                } else {
                    Some((j, s))
                }
            }
        };
    }
    best.map(|(i, _)| i).ok_or_else(|| {
        FdrError::AllRunsFailed(
            entries
                .iter()
                .map(|e| match &e.outcome {
                    Err(msg) => format!("{:?}: {msg}", e.params),
                    Ok((s, _)) => format!("{:?}: score {s}", e.params),
                })
                .collect(),
        )
    })
}

/// Run the grid. `trajectory(lr, alpha, epochs)` trains once and returns a
/// `(score, payload)` per entry of `epochs` (ascending). Trajectories run in
/// parallel; entries come back in [`SweepGrid::points`] order.
pub fn sweep<T, F>(grid: &SweepGrid, use_alpha: bool, trajectory: F) -> Result<SweepOutcome<T>>
where
    T: Send,
    F: Fn(f64, Option<f64>, &[usize]) -> Result<Vec<(f64, T)>> + Sync,
{
    grid.validate()?;
    let epochs = grid.sorted_epochs();
    let results: Vec<_> = grid
        .trajectories(use_alpha)
        .into_par_iter()
        .map(|(lr, alpha)| (lr, alpha, trajectory(lr, alpha, &epochs)))
        .collect();

    let mut entries = Vec::with_capacity(results.len() * epochs.len());
    for (lr, alpha, result) in results {
        match result {
            Ok(scored) if scored.len() == epochs.len() => {
                for (&e, outcome) in epochs.iter().zip(scored) {
                    entries.push(SweepEntry {
                        params: HyperParams { learning_rate: lr, epochs: e, alpha },
                        outcome: Ok(outcome),
                    });
                }
            }
            other => {
                let msg = match other {
                    Err(e) => e.to_string(),
                    Ok(s) => format!("trajectory returned {} scores for {} epoch options", s.len(), epochs.len()),
                };
                for &e in &epochs {
                    entries.push(SweepEntry {
                        params: HyperParams { learning_rate: lr, epochs: e, alpha },
                        outcome: Err(msg.clone()),
                    });
                }
            }
        }
    }
    let best_index = select_best(&entries)?;
    Ok(SweepOutcome {
        best: entries[best_index].params,
        best_index,
        entries,
    })
}
