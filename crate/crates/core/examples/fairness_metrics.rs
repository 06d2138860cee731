//! Score hand-made predictions with the metrics suite.

use fdr::metrics::{self, af, auc, confusion};
use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    // Two samples per (y, a) group. The predictor is perfect on a=0 and
    // flips one prediction in each a=1 group.
    let y = [0, 0, 1, 1, 0, 0, 1, 1];
    let a = [0, 0, 0, 0, 1, 1, 1, 1];
    let pred = [0, 0, 1, 1, 1, 0, 0, 1];
    let c = confusion(&pred, &y, &a)?;
    let wacc = metrics::wacc(&c)?;
    let eo = metrics::eo_diff(&c)?;
    let ae = metrics::ae_diff(&c)?;
    let wa = metrics::worst_acc(&c)?;
    for g in GroupKey::ALL {
        println!("group {g}: accuracy {:.2}", c.group_accuracy(g)?);
    }
    println!("WACC {wacc:.3}  EO_Diff {eo:.3}  AE_Diff {ae:.3}  WA {wa:.3}");
    for notion in [FairnessNotion::Eo, FairnessNotion::Ae, FairnessNotion::Mmf] {
        let value = match notion {
            FairnessNotion::Eo => eo,
            FairnessNotion::Ae => ae,
            _ => wa,
        };
        println!("AF under {notion}: {:.3}", af(wacc, value, notion));
    }

    let scores = [0.1, 0.3, 0.8, 0.7, 0.6, 0.2, 0.4, 0.9];
    println!("AUC {:.3}", auc(&scores, &y)?);

    // The same numbers straight from a model.
    let data = gen_synthetic(&SyntheticSpec {
        n_total: 4000,
        minority_fraction: 0.02,
        ..Default::default()
    })?;
    let head = init_head(&HeadDims::linear(data.dim()), 0)?;
    let fitted = train(&head, &data, &ObjectiveConfig::plain(), &TrainConfig { learning_rate: 0.05, epochs: 200, ..Default::default() })?;
    let report = evaluate(&fitted.head, &data, FairnessNotion::Eo)?;
    println!("{}", report.to_json()?);
    Ok(())
}
