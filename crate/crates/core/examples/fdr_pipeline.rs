//! The FDR recipe step by step: ERM pretraining, a group-balanced
//! fine-tuning set and a fairness-penalized last layer.

use fdr::prelude::*;

fn show(name: &str, r: &MetricsReport) {
    println!(
        "{name:<10} WACC {:.3}  EO_Diff {:.3}  worst group {:.3}  groups {:.3?}",
        r.wacc, r.eo_diff, r.wa, r.group_accuracy
    );
}

fn main() -> fdr::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::default())?;
    let splits = split_dataset(&data, SplitFractions::new(0.5, 0.2, 0.3)?, 0, true)?;

    let pretrain = TrainConfig {
        learning_rate: 0.01,
        epochs: 30,
        batch_mode: BatchMode::MiniBatch(128),
        ..Default::default()
    };
    let backbone = pretrain_backbone(&splits.train, &"20,32,16,2".parse()?, &pretrain)?;
    show("backbone", &evaluate(&backbone, &splits.test, FairnessNotion::Eo)?);

    let balanced = balanced_subsample(&splits.train, &splits.val, None, 0)?;
    println!("balanced set: {} rows per group", balanced.group_counts().0[0]);

    let mut head = backbone.clone().freeze_all_but_last();
    head.reinit_layer(head.n_layers() - 1, 0)?;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 1500,
        ..Default::default()
    };
    for alpha in [0.0, 1.0, 5.0] {
        let obj = ObjectiveConfig::new(FairnessNotion::Eo, alpha, group_weights(&balanced)?)?;
        let out = train(&head, &balanced, &obj, &cfg)?;
        show(&format!("alpha {alpha}"), &evaluate(&out.head, &splits.test, FairnessNotion::Eo)?);
    }
    Ok(())
}
