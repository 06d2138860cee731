//! Fine-tuning recipes and the benchmark protocol.
//!
//! Per seed the target data is split into train / val / test, val is split
//! again (stratified, 50/50) into a fine-tuning part and a held-out
//! selection part, and the balanced set D_r is drawn from train plus the
//! fine-tuning part of val. A backbone is pretrained with plain ERM, then
//! every recipe fine-tunes from it:
//!
//! | recipe      | data        | objective                 | trainable |
//! |-------------|-------------|---------------------------|-----------|
//! | FullFT-Reg  | train       | CE + penalty, reweighted  | all, from scratch |
//! | LastFT      | val (ft)    | CE                        | new last layer |
//! | LastFT-RW   | D_r         | CE                        | new last layer |
//! | LastFT-Reg  | val (ft)    | CE + penalty, reweighted  | new last layer |
//! | FDR         | D_r         | CE + penalty              | new last layer |

mod bench;
mod record;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    balanced_subsample, gen_synthetic, group_weights, split_dataset, split_two, GroupedDataset, PerGroup,
    SplitFractions, SyntheticSpec,
};
use crate::error::{FdrError, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{init_head, HeadDims, MlpHead};
use crate::objectives::{FairnessNotion, ObjectiveConfig};
use crate::rng::derive_seed;
use crate::surgical::{self, SurgicalTarget};
use crate::trainer::{
    sweep, train_with_checkpoints, BatchMode, EpochRecord, HyperParams, LrPolicy, SweepGrid, SweepOutcome, TrainConfig,
};

pub use bench::{
    bench, sweep_method, BenchReport, BenchRow, MetricStats, SeedContext, SplitStats, SweepSummary, BENCH_CSV_COLUMNS,
};
pub use record::{write_jsonl, RunRecord, TraceSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FullFT-Reg")]
    FullFtReg,
    #[serde(rename = "LastFT")]
    LastFt,
    #[serde(rename = "LastFT-RW")]
    LastFtRw,
    #[serde(rename = "LastFT-Reg")]
    LastFtReg,
    #[serde(rename = "FDR")]
    Fdr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecipe {
    pub method: Method,
    pub uses_balanced_data: bool,
    pub uses_fairness_constraint: bool,
    pub trains_full_network: bool,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FullFtReg,
        Method::LastFt,
        Method::LastFtRw,
        Method::LastFtReg,
        Method::Fdr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FullFtReg => "FullFT-Reg",
            Method::LastFt => "LastFT",
            Method::LastFtRw => "LastFT-RW",
            Method::LastFtReg => "LastFT-Reg",
            Method::Fdr => "FDR",
        }
    }

    pub fn recipe(self) -> MethodRecipe {
        let (balanced, constraint, full) = match self {
            Method::FullFtReg => (false, true, true),
            Method::LastFt => (false, false, false),
            Method::LastFtRw => (true, false, false),
            Method::LastFtReg => (false, true, false),
            Method::Fdr => (true, true, false),
        };
        MethodRecipe {
            method: self,
            uses_balanced_data: balanced,
            uses_fairness_constraint: constraint,
            trains_full_network: full,
        }
    }

    /// Whether runs of this recipe under `notion` take an alpha.
    pub fn uses_alpha(self, notion: FairnessNotion) -> bool {
        self.recipe().uses_fairness_constraint && notion.uses_alpha()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = FdrError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| FdrError::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Settings shared by every fine-tuning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Batching for the last-layer recipes.
    pub last_layer_batch: BatchMode,
    /// Batching for FullFT-Reg.
    pub full_network_batch: BatchMode,
    /// Layer subset to fine-tune instead of the last layer.
    pub surgical: Option<String>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            momentum: 0.9,
            weight_decay: 5e-4,
            last_layer_batch: BatchMode::Full,
            full_network_batch: BatchMode::MiniBatch(128),
            surgical: None,
        }
    }
}

/// The five datasets one seed of the protocol works with.
#[derive(Clone, Debug)]
pub struct DataBundle {
    /// Data the backbone is pretrained on.
    pub pretrain: GroupedDataset,
    pub train: GroupedDataset,
    /// Part of val used for fine-tuning.
    pub val_ft: GroupedDataset,
    /// Held-out part of val used for hyperparameter selection.
    pub selection: GroupedDataset,
    pub test: GroupedDataset,
    /// Balanced subset of `train ∪ val_ft`.
    pub balanced: GroupedDataset,
}

/// Named sub-seeds of a run seed.
pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const BACKBONE: u64 = 2;
    pub const BALANCED: u64 = 3;
    pub const HEAD: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SELECTION: u64 = 6;
}

impl DataBundle {
    /// Split `target` for one seed. With `source`, the backbone is trained
    /// on the train split of `source` instead.
    pub fn prepare(
        target: &GroupedDataset,
        source: Option<&GroupedDataset>,
        fractions: SplitFractions,
        selection_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let split_seed = derive_seed(seed, streams::SPLIT);
        let parts = split_dataset(target, fractions, split_seed, true)?;
        let (val_ft, selection) = split_two(
            &parts.val,
            selection_fraction,
            derive_seed(seed, streams::SELECTION),
            ("val_ft", "selection"),
        )?;
        let balanced = balanced_subsample(&parts.train, &val_ft, None, derive_seed(seed, streams::BALANCED))?;
        let pretrain = match source {
            Some(src) => split_dataset(src, fractions, split_seed, true)?.train,
            None => parts.train.clone(),
        };
        Ok(DataBundle {
            pretrain,
            train: parts.train,
            val_ft,
            selection,
            test: parts.test,
            balanced,
        })
    }
}

/// Train the whole network with plain ERM.
pub fn pretrain_backbone(data: &GroupedDataset, dims: &HeadDims, cfg: &TrainConfig) -> Result<MlpHead> {
    let head = init_head(dims, cfg.seed)?;
    Ok(crate::trainer::train(&head, data, &ObjectiveConfig::plain(), cfg)?.head)
}

/// Benchmark-level configuration; also the schema of `bench --config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Fine-tuning (target) distribution.
    pub data: SyntheticSpec,
    /// Pretraining distribution for the transfer setting.
    pub source: Option<SyntheticSpec>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Share of val held out for selection.
    pub selection_fraction: f64,
    pub hidden: Vec<usize>,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub pretrain_batch: BatchMode,
    pub grid: SweepGrid,
    /// Grid for FullFT-Reg.
    pub full_network_grid: SweepGrid,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    /// Number of leading seeds whose selection splits score the sweep.
    pub sweep_seeds: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            data: SyntheticSpec::default(),
            source: None,
            train_fraction: 0.5,
            val_fraction: 0.2,
            test_fraction: 0.3,
            selection_fraction: 0.5,
            hidden: vec![32, 16],
            pretrain_lr: 0.01,
            pretrain_epochs: 30,
            pretrain_batch: BatchMode::MiniBatch(128),
            grid: SweepGrid::paper(),
            full_network_grid: SweepGrid {
                learning_rates: vec![0.01],
                epochs_options: vec![400],
                alphas: vec![1.0, 2.0, 5.0],
            },
            protocol: Protocol::default(),
            seeds: (0..20).collect(),
            sweep_seeds: 5,
        }
    }
}

impl BenchConfig {
    /// Default transfer setting: the backbone sees a differently seeded
    /// source distribution with a weaker spurious correlation and a larger
    /// minority group.
    pub fn transfer() -> Self {
        let base = BenchConfig::default();
        let source = SyntheticSpec {
            seed: base.data.seed + 1000,
            minority_fraction: 0.05,
            spurious_correlation: 0.9,
            ..base.data.clone()
        };
        BenchConfig {
            source: Some(source),
            ..base
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| FdrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if let Some(src) = &self.source {
            src.validate()?;
            if src.dim() != self.data.dim() {
                return Err(FdrError::Config(format!(
                    "source dimension {} differs from target dimension {}",
                    src.dim(),
                    self.data.dim()
                )));
            }
        }
        self.fractions()?;
        if !(self.selection_fraction > 0.0 && self.selection_fraction < 1.0) {
            return Err(FdrError::Config(format!(
                "selection_fraction must lie in (0, 1), got {}",
                self.selection_fraction
            )));
        }
        self.dims()?;
        self.grid.validate()?;
        self.full_network_grid.validate()?;
        if self.seeds.is_empty() {
            return Err(FdrError::Config("at least one seed is required".into()));
        }
        if self.sweep_seeds == 0 {
            return Err(FdrError::Config("sweep_seeds must be at least 1".into()));
        }
        if let Some(name) = &self.protocol.surgical {
            SurgicalTarget::parse(name, self.hidden.len() + 1)?;
        }
        Ok(())
    }

    pub fn fractions(&self) -> Result<SplitFractions> {
        SplitFractions::new(self.train_fraction, self.val_fraction, self.test_fraction)
    }

    pub fn dims(&self) -> Result<HeadDims> {
        HeadDims::new(self.data.dim(), self.hidden.clone())
    }

    pub fn pretrain_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.pretrain_lr,
            momentum: self.protocol.momentum,
            weight_decay: self.protocol.weight_decay,
            epochs: self.pretrain_epochs,
            batch_mode: self.pretrain_batch,
            seed: derive_seed(seed, streams::BACKBONE),
        }
    }

    pub fn grid_for(&self, method: Method) -> &SweepGrid {
        match method {
            Method::FullFtReg => &self.full_network_grid,
            _ => &self.grid,
        }
    }

    pub fn generate(&self) -> Result<(GroupedDataset, Option<GroupedDataset>)> {
        let target = gen_synthetic(&self.data)?;
        let source = self.source.as_ref().map(gen_synthetic).transpose()?;
        Ok((target, source))
    }
}

fn check_alpha(method: Method, notion: FairnessNotion, alpha: Option<f64>) -> Result<f64> {
    match (method.uses_alpha(notion), alpha) {
        (true, Some(a)) => Ok(a),
        (true, None) => Err(FdrError::Config(format!("{method} under {notion} needs an alpha"))),
        (false, None) => Ok(0.0),
        (false, Some(a)) => Err(FdrError::Config(format!(
            "{method} under {notion} takes no alpha (got {a})"
        ))),
    }
}

/// Everything needed to start training one recipe.
pub struct RunSetup<'a> {
    pub head: MlpHead,
    pub data: &'a GroupedDataset,
    pub objective: ObjectiveConfig,
    pub batch_mode: BatchMode,
    pub policy: LrPolicy,
    pub surgical: Option<String>,
}

/// Build the starting head, fine-tuning data and objective of a recipe.
/// `backbone` is ignored by FullFT-Reg and required by every other recipe.
pub fn setup_run<'a>(
    method: Method,
    backbone: Option<&MlpHead>,
    dims: &HeadDims,
    train: &'a GroupedDataset,
    val_ft: &'a GroupedDataset,
    balanced: &'a GroupedDataset,
    notion: FairnessNotion,
    alpha: Option<f64>,
    seed: u64,
    protocol: &Protocol,
) -> Result<RunSetup<'a>> {
    let alpha = check_alpha(method, notion, alpha)?;
    let recipe = method.recipe();
    let head_seed = derive_seed(seed, streams::HEAD);

    let data = if recipe.trains_full_network {
        train
    } else if recipe.uses_balanced_data {
        balanced
    } else {
        val_ft
    };
    let objective = if recipe.uses_fairness_constraint {
        ObjectiveConfig::new(notion, alpha, group_weights(data)?)?
    } else {
        ObjectiveConfig::new(FairnessNotion::None, 0.0, PerGroup::splat(1.0))?
    };

    if recipe.trains_full_network {
        return Ok(RunSetup {
            head: init_head(dims, head_seed)?,
            data,
            objective,
            batch_mode: protocol.full_network_batch,
            policy: LrPolicy::Uniform,
            surgical: None,
        });
    }

    let backbone = backbone.ok_or_else(|| FdrError::Config(format!("{method} needs a pretrained backbone")))?;
    let n = backbone.n_layers();
    let last = n - 1;
    let target = match &protocol.surgical {
        Some(name) => SurgicalTarget::parse(name, n)?,
        None => SurgicalTarget::Block(last),
    };
    let (mask, policy) = surgical::mask_and_policy(target, n)?;
    let mut head = backbone.clone().with_freeze_mask(&mask)?;
    // A trainable last layer starts from scratch; a frozen one keeps the
    // pretrained weights so the other blocks have a classifier to feed.
    if !mask[last] {
        head.reinit_layer(last, head_seed)?;
    }
    Ok(RunSetup {
        head,
        data,
        objective,
        batch_mode: protocol.last_layer_batch,
        policy,
        surgical: protocol.surgical.as_ref().map(|_| target.name(n)),
    })
}

/// Train one recipe once, for the largest epoch count, and return a record
/// for every requested epoch count (ascending).
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    method: Method,
    backbone: Option<&MlpHead>,
    dims: &HeadDims,
    bundle: &DataBundle,
    notion: FairnessNotion,
    learning_rate: f64,
    alpha: Option<f64>,
    epochs: &[usize],
    seed: u64,
    protocol: &Protocol,
) -> Result<Vec<RunRecord>> {
    let started = Instant::now();
    let setup = setup_run(
        method,
        backbone,
        dims,
        &bundle.train,
        &bundle.val_ft,
        &bundle.balanced,
        notion,
        alpha,
        seed,
        protocol,
    )?;
    let max_epochs = epochs.iter().copied().max().unwrap_or(0);
    let cfg = TrainConfig {
        learning_rate,
        momentum: protocol.momentum,
        weight_decay: protocol.weight_decay,
        epochs: max_epochs,
        batch_mode: setup.batch_mode,
        seed: derive_seed(seed, streams::SHUFFLE),
    };
    let (outcome, snapshots) = train_with_checkpoints(&setup.head, setup.data, &setup.objective, &cfg, setup.policy, epochs)?;
    let wall = started.elapsed().as_secs_f64();

    snapshots
        .into_iter()
        .map(|(e, head)| {
            let rgn = match setup.surgical {
                Some(_) => Some(surgical::rgn_scores(&head, setup.data, &setup.objective)?),
                None => None,
            };
            Ok(RunRecord {
                method: method.name().to_string(),
                notion,
                seed,
                hyperparameters: HyperParams {
                    learning_rate,
                    epochs: e,
                    alpha,
                },
                surgical: setup.surgical.clone(),
                frozen_layers: head.freeze_mask().to_vec(),
                train: evaluate(&head, setup.data, notion)?,
                test: evaluate(&head, &bundle.test, notion)?,
                selection: Some(evaluate(&head, &bundle.selection, notion)?),
                wall_time_s: wall,
                trace: TraceSummary::from_trace(&outcome.trace[..e]),
                rgn,
            })
        })
        .collect()
}

/// A single run of one recipe.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    method: Method,
    backbone: Option<&MlpHead>,
    dims: &HeadDims,
    bundle: &DataBundle,
    notion: FairnessNotion,
    params: &HyperParams,
    seed: u64,
    protocol: &Protocol,
) -> Result<RunRecord> {
    let mut records = run_trajectory(
        method,
        backbone,
        dims,
        bundle,
        notion,
        params.learning_rate,
        params.alpha,
        &[params.epochs],
        seed,
        protocol,
    )?;
    Ok(records.pop().expect("one checkpoint requested"))
}

/// Fine-tune outside the benchmark protocol: returns the trained head, its
/// loss trace and the report on the fine-tuning data.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    method: Method,
    backbone: Option<&MlpHead>,
    train: &GroupedDataset,
    val: &GroupedDataset,
    notion: FairnessNotion,
    params: &HyperParams,
    seed: u64,
    protocol: &Protocol,
) -> Result<(MlpHead, Vec<EpochRecord>, MetricsReport)> {
    let dims = match backbone {
        Some(b) => b.dims().clone(),
        None => return Err(FdrError::Config("a model is required to fix the head dimensions".into())),
    };
    let balanced = balanced_subsample(train, val, None, derive_seed(seed, streams::BALANCED))?;
    let setup = setup_run(method, backbone, &dims, train, val, &balanced, notion, params.alpha, seed, protocol)?;
    let cfg = TrainConfig {
        learning_rate: params.learning_rate,
        momentum: protocol.momentum,
        weight_decay: protocol.weight_decay,
        epochs: params.epochs,
        batch_mode: setup.batch_mode,
        seed: derive_seed(seed, streams::SHUFFLE),
    };
    let (out, _) = train_with_checkpoints(&setup.head, setup.data, &setup.objective, &cfg, setup.policy, &[])?;
    let report = evaluate(&out.head, setup.data, notion)?;
    Ok((out.head, out.trace, report))
}

/// Grid search for one recipe outside the benchmark: fine-tune on
/// `train`/`val` and score each grid point by AF on `selection`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_finetune(
    method: Method,
    backbone: Option<&MlpHead>,
    train: &GroupedDataset,
    val: &GroupedDataset,
    selection: &GroupedDataset,
    notion: FairnessNotion,
    grid: &SweepGrid,
    seed: u64,
    protocol: &Protocol,
) -> Result<SweepOutcome<MetricsReport>> {
    let dims = match backbone {
        Some(b) => b.dims().clone(),
        None => return Err(FdrError::Config("a model is required to fix the head dimensions".into())),
    };
    let balanced = balanced_subsample(train, val, None, derive_seed(seed, streams::BALANCED))?;
    sweep(grid, method.uses_alpha(notion), |lr, alpha, epochs| {
        let setup = setup_run(method, backbone, &dims, train, val, &balanced, notion, alpha, seed, protocol)?;
        let cfg = TrainConfig {
            learning_rate: lr,
            momentum: protocol.momentum,
            weight_decay: protocol.weight_decay,
            epochs: epochs.iter().copied().max().unwrap_or(0),
            batch_mode: setup.batch_mode,
            seed: derive_seed(seed, streams::SHUFFLE),
        };
        let (_, snapshots) = train_with_checkpoints(&setup.head, setup.data, &setup.objective, &cfg, setup.policy, epochs)?;
        snapshots
            .into_iter()
            .map(|(_, head)| {
                let report = evaluate(&head, selection, notion)?;
                Ok((report.af, report))
            })
            .collect()
    })
}
