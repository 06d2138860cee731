//! Fair deep feature reweighting on fixed feature representations.
//!
//! The crate trains small classification heads with fairness penalties
//! (equalized odds, accuracy equality, max-min fairness), builds
//! group-balanced fine-tuning sets, scores models with a fairness metrics
//! suite and compares fine-tuning recipes end to end.
//!
//! A typical pipeline:
//!
//! ```no_run
//! use fdr::prelude::*;
//!
//! # fn main() -> fdr::Result<()> {
//! let data = gen_synthetic(&SyntheticSpec::default())?;
//! let splits = split_dataset(&data, SplitFractions::default(), 0, true)?;
//! let backbone = pretrain_backbone(&splits.train, &"20,32,16,2".parse()?, &TrainConfig::default())?;
//! let balanced = balanced_subsample(&splits.train, &splits.val, None, 0)?;
//!
//! let mut head = backbone.clone().freeze_all_but_last();
//! head.reinit_layer(head.n_layers() - 1, 0)?;
//! let obj = ObjectiveConfig::new(FairnessNotion::Eo, 2.0, group_weights(&balanced)?)?;
//! let out = train(&head, &balanced, &obj, &TrainConfig::default())?;
//! let report = evaluate(&out.head, &splits.test, FairnessNotion::Eo)?;
//! println!("{}", report.to_json()?);
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod surgical;
pub mod trainer;

pub use error::{FdrError, Result};

pub mod prelude {
    pub use crate::dataset::{
        balanced_subsample, gen_synthetic, group_weights, load_dataset, save_dataset, split_dataset,
        DataFormat, GroupKey, GroupedDataset, PerGroup, SplitFractions, SyntheticSpec,
    };
    pub use crate::error::{FdrError, Result};
    pub use crate::harness::{
        bench, pretrain_backbone, BenchConfig, BenchReport, DataBundle, Method, Protocol, RunRecord,
    };
    pub use crate::linalg::Matrix;
    pub use crate::metrics::{evaluate, MetricsReport};
    pub use crate::model::{init_head, load_head, save_head, HeadDims, MlpHead};
    pub use crate::objectives::{loss_and_grad, FairnessNotion, LossBreakdown, ObjectiveConfig};
    pub use crate::surgical::{rgn_scores, surgical_train, RgnReport, SurgicalTarget};
    pub use crate::trainer::{sgd_step, train, BatchMode, HyperParams, SweepGrid, TrainConfig, TrainOutcome};
}
