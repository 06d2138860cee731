//! Grouped binary-classification datasets: every row carries a feature
//! vector, a label `y` and a sensitive attribute `a`, both in {0, 1}.

mod io;
mod sampling;
mod synthetic;

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};
use crate::linalg::Matrix;

pub use io::{load_dataset, read_binary, read_csv, save_dataset, write_binary, write_csv, DataFormat};
pub use sampling::{balanced_subsample, group_weights, split_dataset, DatasetSplits, SplitFractions};
pub(crate) use sampling::split_two;
pub use synthetic::{gen_synthetic, SyntheticSpec, SPURIOUS_SHIFT};

/// One of the four (label, attribute) combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub y: u8,
    pub a: u8,
}

impl GroupKey {
    /// Fixed group order used for tie breaking and for every per-group array.
    pub const ALL: [GroupKey; 4] = [
        GroupKey { y: 0, a: 0 },
        GroupKey { y: 0, a: 1 },
        GroupKey { y: 1, a: 0 },
        GroupKey { y: 1, a: 1 },
    ];

    pub fn new(y: u8, a: u8) -> Self {
        assert!(y <= 1 && a <= 1, "group key components must be binary");
        GroupKey { y, a }
    }

    #[inline]
    pub fn index(self) -> usize {
        usize::from(self.y) * 2 + usize::from(self.a)
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(y={},a={})", self.y, self.a)
    }
}

/// A value for each of the four groups, stored in [`GroupKey::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerGroup<T>(pub [T; 4]);

impl<T> PerGroup<T> {
    pub fn iter(&self) -> impl Iterator<Item = (GroupKey, &T)> {
        GroupKey::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> PerGroup<U> {
        let mut f = f;
        PerGroup([f(&self.0[0]), f(&self.0[1]), f(&self.0[2]), f(&self.0[3])])
    }
}

impl PerGroup<f64> {
    pub fn splat(value: f64) -> Self {
        PerGroup([value; 4])
    }
}

impl<T> Index<GroupKey> for PerGroup<T> {
    type Output = T;
    fn index(&self, g: GroupKey) -> &T {
        &self.0[g.index()]
    }
}

impl<T> IndexMut<GroupKey> for PerGroup<T> {
    fn index_mut(&mut self, g: GroupKey) -> &mut T {
        &mut self.0[g.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDataset {
    name: String,
    features: Matrix,
    labels: Vec<u8>,
    attributes: Vec<u8>,
}

impl GroupedDataset {
    /// Validates row counts, binary labels/attributes and finite features.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<u8>,
        attributes: Vec<u8>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(FdrError::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if attributes.len() != n {
            return Err(FdrError::DimensionMismatch {
                expected: n,
                found: attributes.len(),
            });
        }
        for i in 0..n {
            if labels[i] > 1 {
                return Err(FdrError::malformed(i + 1, format!("label {} is not 0 or 1", labels[i])));
            }
            if attributes[i] > 1 {
                return Err(FdrError::malformed(
                    i + 1,
                    format!("attribute {} is not 0 or 1", attributes[i]),
                ));
            }
            if let Some(j) = features.row(i).iter().position(|v| !v.is_finite()) {
                return Err(FdrError::malformed(i + 1, format!("feature f{j} is not finite")));
            }
        }
        Ok(GroupedDataset {
            name: name.into(),
            features,
            labels,
            attributes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn attributes(&self) -> &[u8] {
        &self.attributes
    }

    #[inline]
    pub fn group_of(&self, i: usize) -> GroupKey {
        GroupKey {
            y: self.labels[i],
            a: self.attributes[i],
        }
    }

    pub fn group_counts(&self) -> PerGroup<usize> {
        let mut counts = PerGroup([0usize; 4]);
        for i in 0..self.len() {
            counts[self.group_of(i)] += 1;
        }
        counts
    }

    /// Row indices of each group, ascending.
    pub fn group_indices(&self) -> PerGroup<Vec<usize>> {
        let mut out: PerGroup<Vec<usize>> = PerGroup(Default::default());
        for i in 0..self.len() {
            out[self.group_of(i)].push(i);
        }
        out
    }

    /// Error if any of the four groups has no rows.
    pub fn require_all_groups(&self, context: &str) -> Result<()> {
        let counts = self.group_counts();
        let empty = counts.iter().find(|(_, &c)| c == 0).map(|(g, _)| g);
        match empty {
            Some(group) => Err(FdrError::EmptyGroup {
                group,
                context: context.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> GroupedDataset {
        GroupedDataset {
            name: name.into(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            attributes: indices.iter().map(|&i| self.attributes[i]).collect(),
        }
    }

    /// Rows of `self` followed by the rows of `other`.
    pub fn concat(&self, other: &GroupedDataset, name: impl Into<String>) -> Result<GroupedDataset> {
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut attributes = self.attributes.clone();
        attributes.extend_from_slice(&other.attributes);
        Ok(GroupedDataset {
            name: name.into(),
            features,
            labels,
            attributes,
        })
    }

    /// Same labels and attributes over a different representation of the rows.
    pub fn with_features(&self, features: Matrix) -> Result<GroupedDataset> {
        GroupedDataset::new(self.name.clone(), features, self.labels.clone(), self.attributes.clone())
    }
}

/// Parse helper shared by the CLI and config files.
impl FromStr for GroupKey {
    type Err = FdrError;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .filter(|c| c.is_ascii_digit())
            .map(|c| c as u8 - b'0')
            .collect();
        match digits.as_slice() {
            [y @ 0..=1, a @ 0..=1] => Ok(GroupKey::new(*y, *a)),
            _ => Err(FdrError::InvalidArgument(format!("cannot parse group key '{s}'"))),
        }
    }
}
