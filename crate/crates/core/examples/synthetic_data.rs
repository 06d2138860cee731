//! Generate the synthetic benchmark data and look at its group structure.
//!
//! Run with `cargo run --example synthetic_data`.

use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let spec = SyntheticSpec::default();
    let data = gen_synthetic(&spec)?;
    println!("{} rows, {} features", data.len(), data.dim());
    for (g, count) in data.group_counts().iter() {
        println!("  group {g}: {count} rows ({:.2}%)", 100.0 * *count as f64 / data.len() as f64);
    }

    // The attribute is almost perfectly readable from the spurious block,
    // which is what an ERM model latches onto.
    let spurious = data.features().select_cols(spec.d_core, spec.d_core + spec.d_spurious);
    let agree = (0..data.len())
        .filter(|&i| {
            let mean = spurious.row(i).iter().sum::<f64>() / spec.d_spurious as f64;
            u8::from(mean > 0.0) == data.attributes()[i]
        })
        .count();
    println!("sign of the spurious mean predicts a for {:.1}% of rows", 100.0 * agree as f64 / data.len() as f64);

    let splits = split_dataset(&data, SplitFractions::default(), 0, true)?;
    for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        println!("{name:>5}: {:?}", part.group_counts().0);
    }

    let balanced = balanced_subsample(&splits.train, &splits.val, None, 0)?;
    println!("balanced subset: {:?}", balanced.group_counts().0);
    println!("weights for the full train split: {:?}", group_weights(&splits.train)?.0);
    Ok(())
}
