//! Layer-subset fine-tuning and relative-gradient-norm (Auto-RGN) layer
//! weighting.
//!
//! Block names map onto layer positions: `input` is layer 0, `hiddenK` is
//! layer K, `last` is the output layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::GroupedDataset;
use crate::error::{FdrError, Result};
use crate::model::{Dense, MlpHead};
use crate::objectives::{loss_and_grad, ObjectiveConfig};
use crate::trainer::{train_with_checkpoints, LrPolicy, TrainConfig, TrainOutcome};

const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRgn {
    pub grad_norm: f64,
    pub param_norm: f64,
    /// `grad_norm / (param_norm + 1e-12)`.
    pub rgn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgnReport {
    pub layers: Vec<LayerRgn>,
    /// `rgn / max rgn`; all ones when every ratio is zero.
    pub multipliers: Vec<f64>,
}

pub fn rgn_from_gradients(head: &MlpHead, grads: &[Dense]) -> RgnReport {
    let layers: Vec<LayerRgn> = head
        .layers()
        .iter()
        .zip(grads)
        .map(|(l, g)| {
            let grad_norm = g.norm();
            let param_norm = l.norm();
            LayerRgn {
                grad_norm,
                param_norm,
                rgn: grad_norm / (param_norm + NORM_EPS),
            }
        })
        .collect();
    let max = layers.iter().map(|l| l.rgn).fold(0.0, f64::max);
    let multipliers = if max > 0.0 {
        layers.iter().map(|l| l.rgn / max).collect()
    } else {
        vec![1.0; layers.len()]
    };
    RgnReport { layers, multipliers }
}

/// Relative gradient norms from one full-batch gradient.
pub fn rgn_scores(head: &MlpHead, data: &GroupedDataset, obj: &ObjectiveConfig) -> Result<RgnReport> {
    if data.is_empty() {
        return Err(FdrError::InvalidArgument("rgn needs a nonempty dataset".into()));
    }
    let (_, grads) = loss_and_grad(head, data, obj)?;
    Ok(rgn_from_gradients(head, &grads))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurgicalTarget {
    /// Train this layer only.
    Block(usize),
    /// Train every layer with RGN-scaled learning rates.
    AutoRgn,
}

impl SurgicalTarget {
    /// Parse `input`, `hiddenK`, `last` or `auto-rgn` for a head with
    /// `n_layers` layers.
    pub fn parse(name: &str, n_layers: usize) -> Result<Self> {
        let invalid = || {
            FdrError::InvalidArgument(format!(
                "invalid block '{name}' for a {n_layers}-layer head (use input, hidden1..hidden{}, last or auto-rgn)",
                n_layers.saturating_sub(2)
            ))
        };
        let name = name.trim().to_ascii_lowercase();
        let target = match name.as_str() {
            "auto-rgn" | "autorgn" => SurgicalTarget::AutoRgn,
            "input" => SurgicalTarget::Block(0),
            "last" => SurgicalTarget::Block(n_layers - 1),
            other => {
                let k: usize = other
                    .strip_prefix("hidden")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(invalid)?;
                if k == 0 || k + 1 >= n_layers {
                    return Err(invalid());
                }
                SurgicalTarget::Block(k)
            }
        };
        Ok(target)
    }

    pub fn name(&self, n_layers: usize) -> String {
        match *self {
            SurgicalTarget::AutoRgn => "auto-rgn".into(),
            SurgicalTarget::Block(i) if i + 1 == n_layers => "last".into(),
            SurgicalTarget::Block(0) => "input".into(),
            SurgicalTarget::Block(i) => format!("hidden{i}"),
        }
    }
}

impl fmt::Display for SurgicalTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurgicalTarget::AutoRgn => f.write_str("auto-rgn"),
            SurgicalTarget::Block(i) => write!(f, "block{i}"),
        }
    }
}

impl FromStr for SurgicalTarget {
    type Err = FdrError;

    /// Accepts `auto-rgn`, `input` and `blockN`; names that depend on the
    /// head depth go through [`SurgicalTarget::parse`].
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto-rgn" => Ok(SurgicalTarget::AutoRgn),
            "input" => Ok(SurgicalTarget::Block(0)),
            _ => s
                .strip_prefix("block")
                .and_then(|k| k.parse().ok())
                .map(SurgicalTarget::Block)
                .ok_or_else(|| FdrError::InvalidArgument(format!("invalid surgical target '{s}'"))),
        }
    }
}

/// Freeze mask and learning-rate policy realizing `target` on a head with
/// `n_layers` layers.
pub fn mask_and_policy(target: SurgicalTarget, n_layers: usize) -> Result<(Vec<bool>, LrPolicy)> {
    match target {
        SurgicalTarget::Block(i) if i < n_layers => Ok(((0..n_layers).map(|j| j != i).collect(), LrPolicy::Uniform)),
        SurgicalTarget::Block(i) => Err(FdrError::InvalidArgument(format!(
            "block {i} out of range for {n_layers} layers"
        ))),
        SurgicalTarget::AutoRgn => Ok((vec![false; n_layers], LrPolicy::AutoRgn)),
    }
}

/// Block mode freezes every layer but the chosen one; Auto-RGN unfreezes
/// everything and scales each layer's learning rate by its multiplier,
/// recomputed every epoch.
pub fn surgical_train(
    head: &MlpHead,
    target: SurgicalTarget,
    data: &GroupedDataset,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (mask, policy) = mask_and_policy(target, head.n_layers())?;
    let head = head.clone().with_freeze_mask(&mask)?;
    let (out, _) = train_with_checkpoints(&head, data, obj, cfg, policy, &[])?;
    Ok(out)
}
