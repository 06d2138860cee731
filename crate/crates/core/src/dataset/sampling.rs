use rand::seq::SliceRandom;

use super::{GroupKey, GroupedDataset, PerGroup};
use crate::error::{FdrError, Result};
use crate::rng;

/// Tolerance used when flooring `count * fraction`, so that e.g.
/// `100 * 0.2` lands on 20 rather than 19.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, val, test };
        for (name, v) in [("train", train), ("val", val), ("test", test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(FdrError::InvalidArgument(format!(
                    "{name} fraction must lie in (0, 1), got {v}"
                )));
            }
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(FdrError::InvalidArgument(format!(
                "split fractions must sum to 1, got {}",
                train + val + test
            )));
        }
        Ok(f)
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.5,
            val: 0.2,
            test: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: GroupedDataset,
    pub val: GroupedDataset,
    pub test: GroupedDataset,
}

/// Partition `indices` into parts of size `floor(len * f)` for every
/// fraction after the first; the first part takes whatever is left.
fn cut(indices: &[usize], fractions: &[f64], out: &mut [Vec<usize>]) {
    let c = indices.len() as f64;
    let tail: Vec<usize> = fractions[1..]
        .iter()
        .map(|f| (c * f + FLOOR_EPS).floor() as usize)
        .collect();
    let head = indices.len() - tail.iter().sum::<usize>();
    let mut start = 0;
    for (p, size) in std::iter::once(head).chain(tail).enumerate() {
        out[p].extend_from_slice(&indices[start..start + size]);
        start += size;
    }
}

/// Row indices of each part. Each part is sorted, so splits keep the
/// parent's row order.
fn partition(
    ds: &GroupedDataset,
    fractions: &[f64],
    seed: u64,
    stratified: bool,
) -> Result<Vec<Vec<usize>>> {
    let mut parts = vec![Vec::new(); fractions.len()];
    if stratified {
        let groups = ds.group_indices();
        for (g, idx) in groups.iter() {
            if idx.is_empty() {
                return Err(FdrError::EmptyGroup {
                    group: g,
                    context: "stratified split".into(),
                });
            }
            let mut idx = idx.clone();
            idx.shuffle(&mut rng::stream(seed, g.index() as u64));
            cut(&idx, fractions, &mut parts);
        }
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng::stream(seed, 4));
        cut(&idx, fractions, &mut parts);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Disjoint, exhaustive train/val/test split. Per-part sizes are floored
/// (per group when `stratified`) and the remainder goes to train.
pub fn split_dataset(
    ds: &GroupedDataset,
    fractions: SplitFractions,
    seed: u64,
    stratified: bool,
) -> Result<DatasetSplits> {
    let f = SplitFractions::new(fractions.train, fractions.val, fractions.test)?;
    let parts = partition(ds, &[f.train, f.val, f.test], seed, stratified)?;
    for (name, p) in ["train", "val", "test"].into_iter().zip(&parts) {
        if p.is_empty() {
            return Err(FdrError::EmptySplit(name));
        }
    }
    let base = ds.name();
    Ok(DatasetSplits {
        train: ds.subset(&parts[0], format!("{base}/train")),
        val: ds.subset(&parts[1], format!("{base}/val")),
        test: ds.subset(&parts[2], format!("{base}/test")),
    })
}

/// Stratified two-way split; the second part receives `floor(c * second)`
/// rows of every group and the first part the rest.
pub(crate) fn split_two(
    ds: &GroupedDataset,
    second: f64,
    seed: u64,
    names: (&'static str, &'static str),
) -> Result<(GroupedDataset, GroupedDataset)> {
    let parts = partition(ds, &[1.0 - second, second], seed, true)?;
    if parts[0].is_empty() {
        return Err(FdrError::EmptySplit(names.0));
    }
    if parts[1].is_empty() {
        return Err(FdrError::EmptySplit(names.1));
    }
    let base = ds.name();
    Ok((
        ds.subset(&parts[0], format!("{base}/{}", names.0)),
        ds.subset(&parts[1], format!("{base}/{}", names.1)),
    ))
}

/// Balanced set D_r drawn without replacement from `train ∪ val`: `k` rows
/// of every group, `k = per_group` or the smallest pooled group count.
/// Output is group-major in [`GroupKey::ALL`] order.
pub fn balanced_subsample(
    train: &GroupedDataset,
    val: &GroupedDataset,
    per_group: Option<usize>,
    seed: u64,
) -> Result<GroupedDataset> {
    let pool = train.concat(val, format!("{}+{}", train.name(), val.name()))?;
    let groups = pool.group_indices();
    for (g, idx) in groups.iter() {
        if idx.is_empty() {
            return Err(FdrError::EmptyGroup {
                group: g,
                context: "balanced subsample pool".into(),
            });
        }
    }
    let min = groups.0.iter().map(Vec::len).min().unwrap();
    let k = match per_group {
        None => min,
        Some(0) => return Err(FdrError::InvalidArgument("per_group must be positive".into())),
        Some(k) if k > min => {
            return Err(FdrError::InvalidArgument(format!(
                "per_group {k} exceeds the smallest pooled group ({min} rows)"
            )))
        }
        Some(k) => k,
    };
    let mut chosen = Vec::with_capacity(4 * k);
    for g in GroupKey::ALL {
        let mut idx = groups[g].clone();
        let mut r = rng::stream(seed, 16 + g.index() as u64);
        let (picked, _) = idx.partial_shuffle(&mut r, k);
        chosen.extend_from_slice(picked);
    }
    Ok(pool.subset(&chosen, "balanced"))
}

/// Inverse group-frequency weights `(n/4) / count(g)`; per-sample weights
/// then sum to n and a balanced dataset gets all ones.
pub fn group_weights(ds: &GroupedDataset) -> Result<PerGroup<f64>> {
    let counts = ds.group_counts();
    let n = ds.len() as f64;
    let mut out = PerGroup::splat(0.0);
    for (g, &c) in counts.iter() {
        if c == 0 {
            return Err(FdrError::EmptyGroup {
                group: g,
                context: "group weights".into(),
            });
        }
        out[g] = (n / 4.0) / c as f64;
    }
    Ok(out)
}
