//! Fine-tune one block at a time, or every block with Auto-RGN learning
//! rates, and compare against last-layer training.

use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::default())?;
    let splits = split_dataset(&data, SplitFractions::new(0.5, 0.2, 0.3)?, 0, true)?;
    let backbone = pretrain_backbone(
        &splits.train,
        &"20,32,16,2".parse()?,
        &TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            batch_mode: BatchMode::MiniBatch(128),
            ..Default::default()
        },
    )?;
    let balanced = balanced_subsample(&splits.train, &splits.val, None, 0)?;
    let obj = ObjectiveConfig::new(FairnessNotion::Eo, 2.0, group_weights(&balanced)?)?;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 1000,
        ..Default::default()
    };

    let rgn = rgn_scores(&backbone, &balanced, &obj)?;
    for (l, layer) in rgn.layers.iter().enumerate() {
        println!("layer {l}: |g| {:.4}  |w| {:.3}  RGN {:.5}  multiplier {:.3}", layer.grad_norm, layer.param_norm, layer.rgn, rgn.multipliers[l]);
    }

    let n = backbone.n_layers();
    let targets = (0..n).map(SurgicalTarget::Block).chain([SurgicalTarget::AutoRgn]);
    for target in targets {
        let out = surgical_train(&backbone, target, &balanced, &obj, &cfg)?;
        let r = evaluate(&out.head, &splits.test, FairnessNotion::Eo)?;
        let changed: Vec<bool> = (0..n).map(|l| out.head.layers()[l] != backbone.layers()[l]).collect();
        println!("{:<8} changed {changed:?}  WACC {:.3}  EO_Diff {:.3}  AF {:.3}", target.name(n), r.wacc, r.eo_diff, r.af);
        if let Some(m) = out.trace.last().and_then(|e| e.lr_multipliers.as_ref()) {
            println!("         final multipliers {m:.3?}");
        }
    }
    Ok(())
}
