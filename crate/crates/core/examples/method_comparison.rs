//! Benchmark all five recipes on a reduced configuration and print the
//! results table. `fdr bench` runs the same comparison at full size.

use fdr::prelude::*;

fn main() -> fdr::Result<()> {
    let mut cfg = BenchConfig::default();
    cfg.seeds = vec![0, 1, 2];
    cfg.sweep_seeds = 2;
    cfg.grid = SweepGrid {
        learning_rates: vec![1e-3, 3e-3],
        epochs_options: vec![500, 1000],
        alphas: vec![1.0, 5.0],
    };
    cfg.full_network_grid.epochs_options = vec![100];

    let report = bench(&cfg, &[FairnessNotion::Eo], &Method::ALL)?;
    println!("{:<11} {:>18} {:>8} {:>8} {:>8} {:>8}", "method", "lr/epochs/alpha", "WACC", "EO", "WA", "AF");
    for row in &report.rows {
        let p = row.params;
        println!(
            "{:<11} {:>18} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            row.method.name(),
            format!("{}/{}/{}", p.learning_rate, p.epochs, p.alpha.map_or("-".into(), |a| a.to_string())),
            row.test.wacc.mean,
            row.test.eo_diff.mean,
            row.test.wa.mean,
            row.test.af.mean
        );
    }
    println!("\ntrain vs test EO_Diff:");
    for row in &report.rows {
        println!("  {:<11} {:.3} -> {:.3}", row.method.name(), row.train.eo_diff.mean, row.test.eo_diff.mean);
    }
    Ok(())
}
