//! Compare the analytic gradients of every objective with central
//! finite differences.

use fdr::objectives::evaluate_loss;
use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let data = gen_synthetic(&SyntheticSpec {
        n_total: 400,
        minority_fraction: 0.1,
        ..Default::default()
    })?;
    let batch = data.subset(&(0..64).collect::<Vec<_>>(), "batch");
    let head = init_head(&HeadDims::new(data.dim(), vec![6])?, 3)?;
    let h = 1e-5;

    for notion in FairnessNotion::ALL {
        let weights = if notion == FairnessNotion::None { PerGroup::splat(1.0) } else { group_weights(&batch)? };
        let alpha = if notion.uses_alpha() { 2.0 } else { 0.0 };
        let obj = ObjectiveConfig::new(notion, alpha, weights)?;
        let (loss, grads) = loss_and_grad(&head, &batch, &obj)?;

        let mut worst: f64 = 0.0;
        for (l, layer) in head.layers().iter().enumerate() {
            for k in 0..layer.weights.as_slice().len() {
                let at = |delta: f64| {
                    let mut layers = head.layers().to_vec();
                    layers[l].weights.as_mut_slice()[k] += delta;
                    let moved = MlpHead::from_layers(layers, head.freeze_mask().to_vec(), 0).unwrap();
                    evaluate_loss(&moved, &batch, &obj).unwrap().total
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                worst = worst.max((numeric - grads[l].weights.as_slice()[k]).abs());
            }
        }
        println!("{notion:>4}: loss {:.5}, max |analytic - numeric| over weights {worst:.2e}", loss.total);
    }
    Ok(())
}
