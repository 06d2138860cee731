//! Text key-value head files.
//!
//! ```text
//! format = fdr-head
//! version = 1
//! dims = 20,32,16,2
//! frozen = 1,1,0
//! seed = 7
//! layer.0.weights = <base64 of fan_in*fan_out little-endian f32, row-major>
//! layer.0.bias = <base64 of fan_out little-endian f32>
//! ...
//! ```
//!
//! Parameters are stored as f32, so saving a freshly trained head rounds
//! it; a loaded head saves back to the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::{Dense, HeadDims, MlpHead};
use crate::error::{FdrError, Result};
use crate::linalg::Matrix;

pub const HEAD_FORMAT: &str = "fdr-head";
const VERSION: &str = "1";

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(key: &str, text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| FdrError::Config(format!("{key}: invalid base64: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(FdrError::DimensionMismatch {
            expected: expected * 4,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FdrError::Config(format!("{key}: non-finite parameter")));
    }
    Ok(values)
}

impl MlpHead {
    pub fn to_text(&self) -> String {
        let frozen: Vec<&str> = self.frozen.iter().map(|&f| if f { "1" } else { "0" }).collect();
        let mut out = format!(
            "format = {HEAD_FORMAT}\nversion = {VERSION}\ndims = {}\nfrozen = {}\nseed = {}\n",
            self.dims,
            frozen.join(","),
            self.seed
        );
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!("layer.{i}.weights = {}\n", encode(layer.weights.as_slice())));
            out.push_str(&format!("layer.{i}.bias = {}\n", encode(&layer.bias)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FdrError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| FdrError::Config(format!("missing key '{k}'")))
        };
        if get("format")? != HEAD_FORMAT {
            return Err(FdrError::Config(format!("not a head file (format '{}')", get("format")?)));
        }
        if get("version")? != VERSION {
            return Err(FdrError::Config(format!("unsupported head version '{}'", get("version")?)));
        }
        let dims: HeadDims = get("dims")?.parse()?;
        let frozen = get("frozen")?
            .split(',')
            .map(|t| match t.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(FdrError::Config(format!("frozen flag '{other}' is not 0 or 1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| FdrError::Config("seed is not an unsigned integer".into()))?;

        let widths = dims.widths();
        let mut layers = Vec::with_capacity(dims.n_layers());
        for (i, w) in widths.windows(2).enumerate() {
            let wk = format!("layer.{i}.weights");
            let bk = format!("layer.{i}.bias");
            let weights = decode(&wk, get(&wk)?, w[0] * w[1])?;
            let bias = decode(&bk, get(&bk)?, w[1])?;
            layers.push(Dense {
                weights: Matrix::from_vec(w[0], w[1], weights)?,
                bias,
            });
        }
        MlpHead::from_layers(layers, frozen, seed)
    }
}

pub fn save_head(head: &MlpHead, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, head.to_text()).map_err(|e| FdrError::io(path, e))
}

pub fn load_head(path: impl AsRef<Path>) -> Result<MlpHead> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FdrError::io(path, e))?;
    MlpHead::from_text(&text)
}
