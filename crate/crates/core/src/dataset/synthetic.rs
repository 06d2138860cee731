//! Synthetic grouped data with a label-informative core block, an
//! attribute-correlated spurious block and a pure-noise block.
//!
//! Column layout: `[core | spurious | noise]`.
//!
//! * core: `N(0, I) + (y - 1/2) * core_separation / sqrt(d_core)` in every
//!   coordinate, so the class means are `core_separation` apart in
//!   Euclidean (= Mahalanobis) distance.
//! * spurious: `N(0, I) + s * SPURIOUS_SHIFT` where `s = 2a - 1` with
//!   probability `spurious_correlation` and `s = 1 - 2a` otherwise.
//! * noise: `N(0, I)`.
//!
//! Group sizes are fixed, not sampled: the minority group (y=1, a=1) gets
//! `round(n * minority_fraction)` rows (at least one) and the other three
//! groups split the rest in the ratio [`MAJORITY_SHARES`], each keeping at
//! least as many rows as the minority group.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GroupKey, GroupedDataset};
use crate::error::{FdrError, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Mean offset of each spurious coordinate, in noise standard deviations.
pub const SPURIOUS_SHIFT: f64 = 1.5;

/// Relative sizes of groups (0,0), (0,1) and (1,0): the CelebA
/// Blond_Hair/Male training counts.
pub const MAJORITY_SHARES: [u64; 3] = [71_629, 66_874, 22_880];

const FEATURE_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_total: usize,
    pub d_core: usize,
    pub d_spurious: usize,
    pub d_noise: usize,
    pub minority_fraction: f64,
    pub core_separation: f64,
    pub spurious_correlation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_total: 20_000,
            d_core: 5,
            d_spurious: 5,
            d_noise: 10,
            minority_fraction: 0.01,
            core_separation: 3.0,
            spurious_correlation: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn dim(&self) -> usize {
        self.d_core + self.d_spurious + self.d_noise
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FdrError::Config(msg));
        if self.d_core == 0 {
            return bad("d_core must be at least 1".into());
        }
        if self.n_total < 40 {
            return bad(format!("n_total must be at least 40, got {}", self.n_total));
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction <= 0.25) {
            return bad(format!(
                "minority_fraction must lie in (0, 0.25], got {}",
                self.minority_fraction
            ));
        }
        if !(self.core_separation >= 0.0 && self.core_separation.is_finite()) {
            return bad(format!(
                "core_separation must be finite and non-negative, got {}",
                self.core_separation
            ));
        }
        if !(0.0..=1.0).contains(&self.spurious_correlation) {
            return bad(format!(
                "spurious_correlation must lie in [0, 1], got {}",
                self.spurious_correlation
            ));
        }
        Ok(())
    }

    /// Parse a TOML config; missing keys take their default values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| FdrError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec fields are plain scalars")
    }

    /// Rows per group in [`GroupKey::ALL`] order.
    pub fn group_sizes(&self) -> [usize; 4] {
        let minority = ((self.n_total as f64 * self.minority_fraction).round() as usize).max(1);
        let rest = self.n_total - minority;
        let total: u64 = MAJORITY_SHARES.iter().sum();
        let mut sizes = [0usize; 3];
        for g in 0..2 {
            sizes[g] = ((rest as u64 * MAJORITY_SHARES[g] + total / 2) / total) as usize;
        }
        sizes[2] = rest - sizes[0] - sizes[1];
        // minority_fraction near its upper bound would otherwise leave (1,0)
        // smaller than the minority group
        for s in sizes.iter_mut() {
            *s = (*s).max(minority);
        }
        while sizes.iter().sum::<usize>() > rest {
            let largest = (0..3).fold(0, |m, g| if sizes[g] > sizes[m] { g } else { m });
            sizes[largest] -= 1;
        }
        [sizes[0], sizes[1], sizes[2], minority]
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<GroupedDataset> {
    spec.validate()?;
    let d = spec.dim();
    let sizes = spec.group_sizes();
    let mut rng = rng::stream(spec.seed, FEATURE_STREAM);
    let core_shift = spec.core_separation / (spec.d_core as f64).sqrt();

    let mut data = Vec::with_capacity(spec.n_total * d);
    let mut labels = Vec::with_capacity(spec.n_total);
    let mut attributes = Vec::with_capacity(spec.n_total);
    for (g, &count) in GroupKey::ALL.iter().zip(sizes.iter()) {
        let y_centered = f64::from(g.y) - 0.5;
        let a_sign = 2.0 * f64::from(g.a) - 1.0;
        for _ in 0..count {
            for _ in 0..spec.d_core {
                let z: f64 = rng.sample(StandardNormal);
                data.push(z + y_centered * core_shift);
            }
            let aligned = rng.random::<f64>() < spec.spurious_correlation;
            let s = if aligned { a_sign } else { -a_sign };
            for _ in 0..spec.d_spurious {
                let z: f64 = rng.sample(StandardNormal);
                data.push(z + s * SPURIOUS_SHIFT);
            }
            for _ in 0..spec.d_noise {
                data.push(rng.sample(StandardNormal));
            }
            labels.push(g.y);
            attributes.push(g.a);
        }
    }

    let ordered = Matrix::from_vec(labels.len(), d, data)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng::stream(spec.seed, SHUFFLE_STREAM));
    let features = ordered.select_rows(&order);
    let labels = order.iter().map(|&i| labels[i]).collect();
    let attributes = order.iter().map(|&i| attributes[i]).collect();
    GroupedDataset::new(format!("synthetic-{}", spec.seed), features, labels, attributes)
}
