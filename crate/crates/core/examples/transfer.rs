//! Pretrain on a source distribution, fine-tune on a shifted target and
//! compare plain last-layer retraining with FDR.

use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let mut cfg = BenchConfig::transfer();
    cfg.seeds = vec![0, 1, 2];
    cfg.sweep_seeds = 3;
    let src = cfg.source.as_ref().expect("transfer config has a source");
    println!(
        "source: minority {:.2}, spurious correlation {:.2}; target: minority {:.2}, spurious correlation {:.2}",
        src.minority_fraction, src.spurious_correlation, cfg.data.minority_fraction, cfg.data.spurious_correlation
    );

    let report = bench(&cfg, &[FairnessNotion::Eo], &[Method::LastFt, Method::Fdr])?;
    for row in &report.rows {
        println!(
            "{:<7} test EO_Diff {:.3} ± {:.3}  WACC {:.3}  worst group {:.3}",
            row.method.name(),
            row.test.eo_diff.mean,
            row.test.eo_diff.std,
            row.test.wacc.mean,
            row.test.wa.mean
        );
    }
    Ok(())
}
