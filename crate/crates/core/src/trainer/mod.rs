//! SGD with momentum and weight decay, and the training loop.
//!
//! Update for every trainable parameter `w` with gradient `g`:
//!
//! ```text
//! g' = g + weight_decay * w
//! v  = momentum * v + g'
//! w  = w - learning_rate * v
//! ```
//!
//! Velocity starts at zero on every call to [`train`].

mod sweep;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupedDataset;
use crate::error::{FdrError, Result};
use crate::linalg::Matrix;
use crate::model::{Dense, MlpHead};
use crate::objectives::{evaluate_loss, loss_and_grad_from, LossBreakdown, ObjectiveConfig};
use crate::rng;
use crate::surgical;

pub use sweep::{select_best, sweep, HyperParams, SweepEntry, SweepGrid, SweepOutcome};

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Full,
    MiniBatch(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_mode: BatchMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 1000,
            batch_mode: BatchMode::Full,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(FdrError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FdrError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(FdrError::Config(format!(
                "weight decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_mode == BatchMode::MiniBatch(0) {
            return Err(FdrError::Config("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

/// Momentum buffers, one per layer (frozen layers keep zeros).
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity(pub Vec<Dense>);

impl Velocity {
    pub fn zeros_like(head: &MlpHead) -> Self {
        Velocity(
            head.layers()
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        )
    }
}

fn check_gradients(head: &MlpHead, grads: &[Dense]) -> Result<()> {
    if grads.len() != head.n_layers() {
        return Err(FdrError::DimensionMismatch {
            expected: head.n_layers(),
            found: grads.len(),
        });
    }
    for (i, (g, l)) in grads.iter().zip(head.layers()).enumerate() {
        if g.weights.shape() != l.weights.shape() || g.bias.len() != l.bias.len() {
            return Err(FdrError::DimensionMismatch {
                expected: l.weights.rows() * l.weights.cols() + l.bias.len(),
                found: g.weights.rows() * g.weights.cols() + g.bias.len(),
            });
        }
        if !head.is_frozen(i) && !g.all_finite() {
            return Err(FdrError::NonFiniteGradient { layer: i });
        }
    }
    Ok(())
}

/// One momentum SGD update of the trainable layers.
pub fn sgd_step(head: &mut MlpHead, grads: &[Dense], velocity: &mut Velocity, cfg: &TrainConfig) -> Result<()> {
    sgd_step_scaled(head, grads, velocity, cfg, None)
}

/// As [`sgd_step`] with the learning rate of layer `i` multiplied by
/// `lr_multipliers[i]`.
pub(crate) fn sgd_step_scaled(
    head: &mut MlpHead,
    grads: &[Dense],
    velocity: &mut Velocity,
    cfg: &TrainConfig,
    lr_multipliers: Option<&[f64]>,
) -> Result<()> {
    check_gradients(head, grads)?;
    let frozen = head.freeze_mask().to_vec();
    for (i, ((layer, g), v)) in head
        .layers_mut()
        .iter_mut()
        .zip(grads)
        .zip(velocity.0.iter_mut())
        .enumerate()
    {
        if frozen[i] {
            continue;
        }
        let lr = cfg.learning_rate * lr_multipliers.map_or(1.0, |m| m[i]);
        let update = |w: &mut [f64], g: &[f64], v: &mut [f64]| {
            for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = cfg.momentum * *v + (g + cfg.weight_decay * *w);
                *w -= lr * *v;
            }
        };
        update(layer.weights.as_mut_slice(), g.weights.as_slice(), v.weights.as_mut_slice());
        update(&mut layer.bias, &g.bias, &mut v.bias);
    }
    Ok(())
}

/// Per-layer learning-rate scaling during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrPolicy {
    #[default]
    Uniform,
    /// Multipliers from relative gradient norms, recomputed every epoch.
    AutoRgn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Loss before the epoch's updates; the mean over steps in minibatch mode.
    pub loss: LossBreakdown,
    /// Minibatch steps that fell back to plain CE because a group was absent.
    pub fallback_steps: usize,
    pub lr_multipliers: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: MlpHead,
    pub trace: Vec<EpochRecord>,
}

pub fn train(head: &MlpHead, data: &GroupedDataset, obj: &ObjectiveConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (out, _) = train_with_checkpoints(head, data, obj, cfg, LrPolicy::Uniform, &[])?;
    Ok(out)
}

/// Train for `cfg.epochs` epochs and also return copies of the head after
/// each epoch count in `checkpoints` (ascending, ≤ `cfg.epochs`). Every
/// checkpoint equals the result of training for that many epochs.
pub fn train_with_checkpoints(
    head: &MlpHead,
    data: &GroupedDataset,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
    policy: LrPolicy,
    checkpoints: &[usize],
) -> Result<(TrainOutcome, Vec<(usize, MlpHead)>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(FdrError::InvalidArgument("training data is empty".into()));
    }
    if data.dim() != head.dims().input {
        return Err(FdrError::DimensionMismatch {
            expected: head.dims().input,
            found: data.dim(),
        });
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) || checkpoints.iter().any(|&c| c > cfg.epochs) {
        return Err(FdrError::InvalidArgument(format!(
            "checkpoints {checkpoints:?} must be ascending and at most {}",
            cfg.epochs
        )));
    }

    let mut head = head.clone();
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_ckpt = 0;
    let mut take_snapshots = |epoch: usize, head: &MlpHead, snaps: &mut Vec<(usize, MlpHead)>| {
        while next_ckpt < checkpoints.len() && checkpoints[next_ckpt] == epoch {
            snaps.push((epoch, head.clone()));
            next_ckpt += 1;
        }
    };
    take_snapshots(0, &head, &mut snapshots);

    let Some(start) = head.first_trainable() else {
        // Nothing to update: the loss is the same every epoch.
        let loss = if cfg.epochs > 0 { Some(evaluate_loss(&head, data, obj)?) } else { None };
        let trace = (0..cfg.epochs)
            .map(|_| EpochRecord {
                loss: loss.unwrap(),
                fallback_steps: 0,
                lr_multipliers: None,
            })
            .collect();
        for e in 1..=cfg.epochs {
            take_snapshots(e, &head, &mut snapshots);
        }
        return Ok((TrainOutcome { head, trace }, snapshots));
    };

    // The frozen prefix never changes, so its output is computed once.
    let h = head.embed(data.features(), start)?;
    let labels = data.labels();
    let attributes = data.attributes();
    let mut velocity = Velocity::zeros_like(&head);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, SHUFFLE_STREAM);

    for epoch in 0..cfg.epochs {
        let record = match cfg.batch_mode {
            BatchMode::Full => {
                let (loss, grads) = loss_and_grad_from(&head, start, h.clone(), labels, attributes, obj)?;
                if !loss.is_finite() {
                    return Err(FdrError::Diverged { epoch });
                }
                let multipliers = match policy {
                    LrPolicy::Uniform => None,
                    LrPolicy::AutoRgn => Some(surgical::rgn_from_gradients(&head, &grads).multipliers),
                };
                sgd_step_scaled(&mut head, &grads, &mut velocity, cfg, multipliers.as_deref())?;
                EpochRecord {
                    loss,
                    fallback_steps: 0,
                    lr_multipliers: multipliers,
                }
            }
            BatchMode::MiniBatch(size) => {
                let multipliers = match policy {
                    LrPolicy::Uniform => None,
                    LrPolicy::AutoRgn => {
                        let (_, grads) = step_loss(&head, start, h.clone(), labels, attributes, obj)?.0;
                        Some(surgical::rgn_from_gradients(&head, &grads).multipliers)
                    }
                };
                order.shuffle(&mut shuffle_rng);
                let mut sum = LossBreakdown::default();
                let mut steps = 0usize;
                let mut fallback_steps = 0usize;
                for batch in order.chunks(size) {
                    let hb = h.select_rows(batch);
                    let lb: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
                    let ab: Vec<u8> = batch.iter().map(|&i| attributes[i]).collect();
                    let ((loss, grads), fell_back) = step_loss(&head, start, hb, &lb, &ab, obj)?;
                    if !loss.is_finite() {
                        return Err(FdrError::Diverged { epoch });
                    }
                    accumulate(&mut sum, &loss);
                    steps += 1;
                    fallback_steps += usize::from(fell_back);
                    sgd_step_scaled(&mut head, &grads, &mut velocity, cfg, multipliers.as_deref())?;
                }
                EpochRecord {
                    loss: scale(sum, 1.0 / steps as f64),
                    fallback_steps,
                    lr_multipliers: multipliers,
                }
            }
        };
        trace.push(record);
        take_snapshots(epoch + 1, &head, &mut snapshots);
    }
    Ok((TrainOutcome { head, trace }, snapshots))
}

/// Loss and gradients for one step, falling back to plain weighted CE when
/// the batch lacks a group the objective needs.
fn step_loss(
    head: &MlpHead,
    start: usize,
    h: Matrix,
    labels: &[u8],
    attributes: &[u8],
    obj: &ObjectiveConfig,
) -> Result<((LossBreakdown, Vec<Dense>), bool)> {
    match loss_and_grad_from(head, start, h.clone(), labels, attributes, obj) {
        Ok(out) => Ok((out, false)),
        Err(FdrError::EmptyGroup { .. } | FdrError::EmptyAttributeGroup { .. }) => {
            let out = loss_and_grad_from(head, start, h, labels, attributes, &obj.ce_only())?;
            Ok((out, true))
        }
        Err(e) => Err(e),
    }
}

fn accumulate(sum: &mut LossBreakdown, x: &LossBreakdown) {
    sum.total += x.total;
    sum.ce += x.ce;
    sum.penalty += x.penalty;
    sum.fpr_term += x.fpr_term;
    sum.fnr_term += x.fnr_term;
    for (s, v) in sum.per_group_ce.iter_mut().zip(x.per_group_ce) {
        *s += v;
    }
}

fn scale(mut x: LossBreakdown, k: f64) -> LossBreakdown {
    x.total *= k;
    x.ce *= k;
    x.penalty *= k;
    x.fpr_term *= k;
    x.fnr_term *= k;
    for v in &mut x.per_group_ce {
        *v *= k;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_head, HeadDims};

    fn scalar_head(w: f64) -> MlpHead {
        let weights = Matrix::from_vec(1, 2, vec![w, 0.0]).unwrap();
        MlpHead::from_layers(vec![Dense { weights, bias: vec![0.0, 0.0] }], vec![false], 0).unwrap()
    }

    fn scalar_grad(g: f64) -> Vec<Dense> {
        vec![Dense {
            weights: Matrix::from_vec(1, 2, vec![g, 0.0]).unwrap(),
            bias: vec![0.0, 0.0],
        }]
    }

    #[test]
    fn sgd_step_by_hand() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut head = scalar_head(1.0);
        let mut v = Velocity::zeros_like(&head);
        sgd_step(&mut head, &scalar_grad(0.5), &mut v, &cfg).unwrap();
        assert_eq!(v.0[0].weights.get(0, 0), 0.5);
        assert_eq!(head.layers()[0].weights.get(0, 0), 0.95);

        let cfg = TrainConfig { weight_decay: 5e-4, ..cfg };
        let mut head = scalar_head(1.0);
        let mut v = Velocity::zeros_like(&head);
        sgd_step(&mut head, &scalar_grad(0.0), &mut v, &cfg).unwrap();
        assert_eq!(v.0[0].weights.get(0, 0), 5e-4);
        assert!((head.layers()[0].weights.get(0, 0) - 0.99995).abs() < 1e-15);

        let cfg = TrainConfig { learning_rate: 0.0, ..cfg };
        let mut head = scalar_head(1.0);
        let mut v = Velocity::zeros_like(&head);
        sgd_step(&mut head, &scalar_grad(3.0), &mut v, &cfg).unwrap();
        assert_eq!(head, scalar_head(1.0));
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut head = init_head(&"2,3,2".parse().unwrap(), 0).unwrap();
        let mut grads: Vec<Dense> = head.layers().iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect();
        grads[1].bias[0] = f64::NAN;
        let mut v = Velocity::zeros_like(&head);
        let err = sgd_step(&mut head, &grads, &mut v, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, FdrError::NonFiniteGradient { layer: 1 }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_mode: BatchMode::MiniBatch(0), ..TrainConfig::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn zero_epochs_is_identity() {
        let head = init_head(&HeadDims::linear(2), 3).unwrap();
        let ds = GroupedDataset::new(
            "t",
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0, 1],
            vec![0, 1],
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&head, &ds, &ObjectiveConfig::plain(), &cfg).unwrap();
        assert_eq!(out.head, head);
        assert!(out.trace.is_empty());
    }
}
