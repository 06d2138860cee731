//! Grid search for one recipe, scored by AF on a held-out selection set.

use fdr::harness::sweep_finetune;
use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::default())?;
    let splits = split_dataset(&data, SplitFractions::new(0.5, 0.2, 0.3)?, 1, true)?;
    let halves = split_dataset(&splits.val, SplitFractions::new(0.5, 0.25, 0.25)?, 2, true)?;
    let selection = halves.val.concat(&halves.test, "selection")?;

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
    let grid = SweepGrid {
        learning_rates: vec![1e-3, 3e-3],
        epochs_options: vec![250, 500, 1000],
        alphas: vec![0.5, 2.0, 10.0],
    };
    let outcome = sweep_finetune(
        Method::Fdr,
        Some(&backbone),
        &splits.train,
        &halves.train,
        &selection,
        FairnessNotion::Eo,
        &grid,
        0,
        &Protocol::default(),
    )?;
    for e in &outcome.entries {
        match &e.outcome {
            Ok((score, _)) => println!("lr {:<6} epochs {:<5} alpha {:<4} AF {score:.4}", e.params.learning_rate, e.params.epochs, e.params.alpha.unwrap()),
            Err(msg) => println!("{:?} failed: {msg}", e.params),
        }
    }
    println!("best: {:?}", outcome.best);
    Ok(())
}
