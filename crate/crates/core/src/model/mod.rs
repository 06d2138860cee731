//! Feed-forward classification heads with per-layer freeze masks.
//!
//! A head is a chain of affine layers with ReLU between them and two output
//! logits. With a frozen prefix the head doubles as "backbone + last layer":
//! the frozen layers compute the representation and the trailing trainable
//! layers are fine-tuned on top of it.

mod serialize;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};
use crate::linalg::Matrix;
use crate::rng;

pub use serialize::{load_head, save_head, HEAD_FORMAT};

pub const OUTPUT_DIM: usize = 2;

/// Layer widths: input, hidden..., output (always 2).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    pub input: usize,
    pub hidden: Vec<usize>,
}

impl HeadDims {
    pub fn new(input: usize, hidden: Vec<usize>) -> Result<Self> {
        let dims = HeadDims { input, hidden };
        dims.validate()?;
        Ok(dims)
    }

    pub fn linear(input: usize) -> Self {
        HeadDims { input, hidden: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(FdrError::InvalidArgument(format!("layer widths must be positive: {self}")));
        }
        Ok(())
    }

    /// All widths in order, output included.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend_from_slice(&self.hidden);
        w.push(OUTPUT_DIM);
        w
    }

    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

impl fmt::Display for HeadDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.widths().iter().map(usize::to_string).collect();
        f.write_str(&w.join(","))
    }
}

/// Parses `"20,32,16,2"`; the last width must be 2.
impl FromStr for HeadDims {
    type Err = FdrError;

    fn from_str(s: &str) -> Result<Self> {
        let widths: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| FdrError::InvalidArgument(format!("cannot parse dims '{s}'")))?;
        match widths.as_slice() {
            [input, hidden @ .., OUTPUT_DIM] => HeadDims::new(*input, hidden.to_vec()),
            _ => Err(FdrError::InvalidArgument(format!(
                "dims '{s}' must list input, hidden widths and a final 2"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// Euclidean norm over weights and bias together.
    pub fn norm(&self) -> f64 {
        let w = self.weights.as_slice().iter().map(|v| v * v).sum::<f64>();
        let b = self.bias.iter().map(|v| v * v).sum::<f64>();
        (w + b).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.all_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    fn glorot(fan_in: usize, fan_out: usize, seed: u64, layer: usize) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut r = rng::stream(seed, layer as u64);
        let data = (0..fan_in * fan_out)
            .map(|_| r.random_range(-limit..=limit))
            .collect();
        Dense {
            weights: Matrix::from_vec(fan_in, fan_out, data).expect("shape is fan_in x fan_out"),
            bias: vec![0.0; fan_out],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch {
    pub logits: Matrix,
    pub probs: Matrix,
    /// Argmax of each probs row, ties resolved to class 0.
    pub hard: Vec<u8>,
}

impl PredictionBatch {
    pub fn from_logits(logits: Matrix) -> Self {
        let n = logits.rows();
        let mut probs = Matrix::zeros(n, OUTPUT_DIM);
        let mut hard = Vec::with_capacity(n);
        for i in 0..n {
            let (p0, p1) = softmax2(logits.get(i, 0), logits.get(i, 1));
            probs.set(i, 0, p0);
            probs.set(i, 1, p1);
            hard.push(u8::from(p1 > p0));
        }
        PredictionBatch { logits, probs, hard }
    }

    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }

    /// Class-1 probabilities.
    pub fn positive_probs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probs.get(i, 1)).collect()
    }
}

#[inline]
pub(crate) fn softmax2(l0: f64, l1: f64) -> (f64, f64) {
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    dims: HeadDims,
    layers: Vec<Dense>,
    frozen: Vec<bool>,
    seed: u64,
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases,
/// nothing frozen.
pub fn init_head(dims: &HeadDims, seed: u64) -> Result<MlpHead> {
    dims.validate()?;
    let widths = dims.widths();
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| Dense::glorot(w[0], w[1], seed, i))
        .collect();
    Ok(MlpHead {
        dims: dims.clone(),
        layers,
        frozen: vec![false; dims.n_layers()],
        seed,
    })
}

impl MlpHead {
    /// Assemble a head from explicit layers.
    pub fn from_layers(layers: Vec<Dense>, frozen: Vec<bool>, seed: u64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| FdrError::InvalidArgument("a head needs at least one layer".into()))?;
        let input = first.fan_in();
        let mut hidden = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(FdrError::DimensionMismatch {
                    expected: layer.fan_out(),
                    found: layer.bias.len(),
                });
            }
            if i + 1 < layers.len() {
                let next_in = layers[i + 1].fan_in();
                if next_in != layer.fan_out() {
                    return Err(FdrError::DimensionMismatch {
                        expected: layer.fan_out(),
                        found: next_in,
                    });
                }
                hidden.push(layer.fan_out());
            } else if layer.fan_out() != OUTPUT_DIM {
                return Err(FdrError::DimensionMismatch {
                    expected: OUTPUT_DIM,
                    found: layer.fan_out(),
                });
            }
            if !layer.all_finite() {
                return Err(FdrError::InvalidArgument(format!("layer {i} has non-finite parameters")));
            }
        }
        if frozen.len() != layers.len() {
            return Err(FdrError::DimensionMismatch {
                expected: layers.len(),
                found: frozen.len(),
            });
        }
        let dims = HeadDims::new(input, hidden)?;
        Ok(MlpHead {
            dims,
            layers,
            frozen,
            seed,
        })
    }

    pub fn dims(&self) -> &HeadDims {
        &self.dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn freeze_mask(&self) -> &[bool] {
        &self.frozen
    }

    /// Seed the parameters were last initialized from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.dims.param_count()
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.frozen[layer]
    }

    /// Index of the first trainable layer, or `None` if all are frozen.
    pub fn first_trainable(&self) -> Option<usize> {
        self.frozen.iter().position(|f| !f)
    }

    pub fn set_freeze_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.layers.len() {
            return Err(FdrError::DimensionMismatch {
                expected: self.layers.len(),
                found: mask.len(),
            });
        }
        self.frozen = mask.to_vec();
        Ok(())
    }

    pub fn with_freeze_mask(mut self, mask: &[bool]) -> Result<Self> {
        self.set_freeze_mask(mask)?;
        Ok(self)
    }

    /// Freeze everything except the last layer.
    pub fn freeze_all_but_last(mut self) -> Self {
        let n = self.layers.len();
        self.frozen = (0..n).map(|i| i + 1 < n).collect();
        self
    }

    /// Fresh Glorot weights and zero bias for one layer.
    pub fn reinit_layer(&mut self, layer: usize, seed: u64) -> Result<()> {
        let l = self.layers.get(layer).ok_or_else(|| {
            FdrError::InvalidArgument(format!("layer {layer} out of range ({} layers)", self.layers.len()))
        })?;
        self.layers[layer] = Dense::glorot(l.fan_in(), l.fan_out(), seed, layer);
        self.seed = seed;
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dims.input {
            return Err(FdrError::DimensionMismatch {
                expected: self.dims.input,
                found: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<PredictionBatch> {
        self.check_input(x)?;
        let acts = self.activations_from(0, x.clone());
        Ok(PredictionBatch::from_logits(acts.into_iter().last().unwrap()))
    }

    /// Representation after the first `upto` layers (ReLU applied), i.e.
    /// the input seen by layer `upto`.
    pub fn embed(&self, x: &Matrix, upto: usize) -> Result<Matrix> {
        self.check_input(x)?;
        if upto >= self.layers.len() {
            return Err(FdrError::InvalidArgument(format!(
                "embedding depth {upto} must be below the layer count {}",
                self.layers.len()
            )));
        }
        let mut h = x.clone();
        for layer in &self.layers[..upto] {
            h = relu(h.affine(&layer.weights, &layer.bias));
        }
        Ok(h)
    }

    /// Inputs of layers `start..` followed by the logits. `h` must be the
    /// input of layer `start`.
    pub(crate) fn activations_from(&self, start: usize, h: Matrix) -> Vec<Matrix> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() - start + 1);
        acts.push(h);
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            let z = acts.last().unwrap().affine(&layer.weights, &layer.bias);
            acts.push(if i < last { relu(z) } else { z });
        }
        acts
    }

    /// Back-propagate `dlogits` through layers `start..`. `acts` comes from
    /// [`Self::activations_from`] with the same `start`. Frozen layers and
    /// layers below `start` get zero gradients.
    pub(crate) fn backward(&self, start: usize, acts: &[Matrix], dlogits: Matrix) -> Vec<Dense> {
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
            .collect();
        let Some(lowest) = self.first_trainable().filter(|&t| t >= start) else {
            return grads;
        };
        let mut delta = dlogits;
        for i in (lowest..self.layers.len()).rev() {
            let input = &acts[i - start];
            if !self.frozen[i] {
                grads[i].weights = input.transpose_matmul(&delta);
                grads[i].bias = delta.column_sums();
            }
            if i == lowest {
                break;
            }
            let mut back = delta.matmul_transpose(&self.layers[i].weights);
            // ReLU mask: the layer input is positive exactly where the
            // previous pre-activation was.
            for (d, &h) in back.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if h <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = back;
        }
        grads
    }
}

fn relu(mut m: Matrix) -> Matrix {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    m
}
