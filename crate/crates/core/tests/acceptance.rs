//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! The benchmark criteria (5 to 8) use seeds 0..20 of the default
//! configuration. Set `FDR_ACCEPTANCE_STRICT=1` to turn any FAIL into a
//! nonzero exit status.

mod common;

use std::collections::HashSet;
use std::process::Command;
use std::time::Instant;

use common::*;
use fdr::harness::SeedContext;
use fdr::metrics::{self, af, auc, confusion};
use fdr::prelude::*;
use fdr::trainer::{train_with_checkpoints, LrPolicy};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const SEEDS: u64 = 20;

fn bench_cfg(transfer: bool) -> BenchConfig {
    let mut cfg = if transfer { BenchConfig::transfer() } else { BenchConfig::default() };
    cfg.seeds = (0..SEEDS).collect();
    cfg
}

// ---- 1 ----------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, notion) in FairnessNotion::ALL.into_iter().enumerate() {
        for hidden in [false, true] {
            let r = gradient_check(notion, hidden, 20, 1000 + 2 * i as u64 + u64::from(hidden));
            checked += r.checked;
            worst = worst.max(r.worst_violation);
            failures.extend(r.failures);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 10.0,
        format!("{checked} coordinates, {} mismatches, worst excess {worst:.2e}, {secs:.1}s", failures.len()),
    )
}

// ---- 2 ----------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut patterns = 0;
    let mut bad = 0;
    for k in [[2, 2, 2, 2], [3, 2, 3, 2], [2, 3, 2, 3], [3, 3, 3, 3], [2, 2, 3, 3], [3, 3, 2, 2]] {
        let mut y = Vec::new();
        let mut a = Vec::new();
        for (g, &c) in GroupKey::ALL.iter().zip(k.iter()) {
            y.extend(std::iter::repeat_n(g.y, c));
            a.extend(std::iter::repeat_n(g.a, c));
        }
        let n = y.len();
        for mask in 0u32..(1 << n) {
            let p: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let t: Vec<Triple> = (0..n).map(|i| (p[i], y[i], a[i])).collect();
            let c = confusion(&p, &y, &a).unwrap();
            let pairs = [
                (metrics::eo_diff(&c).unwrap(), oracle_eo_diff(&t)),
                (metrics::ae_diff(&c).unwrap(), oracle_ae_diff(&t)),
                (metrics::worst_acc(&c).unwrap(), oracle_worst_acc(&t)),
                (metrics::wacc(&c).unwrap(), oracle_wacc(&t)),
            ];
            bad += pairs.iter().filter(|(x, o)| (x - o).abs() > 1e-12).count();
            patterns += 1;
        }
    }
    let mut r = rng(2);
    let mut auc_bad = 0;
    for trial in 0..1000 {
        let n = r.random_range(2..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = if trial % 2 == 0 { 4 } else { 100_000 };
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..levels)) / f64::from(levels)).collect();
        if (auc(&scores, &labels).unwrap() - oracle_auc(&scores, &labels)).abs() > 1e-12 {
            auc_bad += 1;
        }
    }
    outcome(
        bad == 0 && auc_bad == 0,
        format!("{patterns} patterns, {bad} metric mismatches; 1000 AUC vectors, {auc_bad} mismatches"),
    )
}

// ---- 3 ----------------------------------------------------------------

fn af_identities() -> Outcome {
    let cases = [
        (0.892, 0.107, FairnessNotion::Eo, 0.785),
        (0.900, 0.003, FairnessNotion::Ae, 0.897),
        (0.898, 0.803, FairnessNotion::Mmf, 1.701),
    ];
    let got: Vec<f64> = cases.iter().map(|&(w, f, n, _)| af(w, f, n)).collect();
    let pass = cases.iter().zip(&got).all(|(c, g)| (g - c.3).abs() < 1e-12);
    outcome(pass, format!("{got:.3?}"))
}

// ---- 4 ----------------------------------------------------------------

fn counted(counts: [usize; 4], offset: usize, name: &str) -> GroupedDataset {
    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut a = Vec::new();
    for (g, &c) in GroupKey::ALL.iter().zip(counts.iter()) {
        for _ in 0..c {
            ids.push((offset + ids.len()) as f64);
            y.push(g.y);
            a.push(g.a);
        }
    }
    GroupedDataset::new(name, Matrix::from_vec(ids.len(), 1, ids).unwrap(), y, a).unwrap()
}

/// Equal group counts and every row drawn once from the pool.
fn balanced_ok(train: &GroupedDataset, val: &GroupedDataset, out: &GroupedDataset) -> bool {
    let counts = out.group_counts().0;
    let pool_min = (0..4).map(|g| train.group_counts().0[g] + val.group_counts().0[g]).min().unwrap();
    let pool: HashSet<(u64, u8, u8)> = train
        .features()
        .as_slice()
        .iter()
        .zip(train.labels().iter().zip(train.attributes()))
        .chain(val.features().as_slice().iter().zip(val.labels().iter().zip(val.attributes())))
        .map(|(f, (&y, &a))| (f.to_bits(), y, a))
        .collect();
    let picked: Vec<(u64, u8, u8)> = out
        .features()
        .as_slice()
        .iter()
        .zip(out.labels().iter().zip(out.attributes()))
        .map(|(f, (&y, &a))| (f.to_bits(), y, a))
        .collect();
    let distinct: HashSet<_> = picked.iter().collect();
    counts.iter().all(|&c| c == pool_min) && distinct.len() == picked.len() && picked.iter().all(|p| pool.contains(p))
}

fn sampler() -> Outcome {
    let train = counted([71629, 66874, 22880, 1387], 0, "train");
    let val = counted([8535, 8276, 2874, 182], 1_000_000, "val");
    let out = balanced_subsample(&train, &val, None, 0).unwrap();
    let counts = out.group_counts().0;
    let fixed = counts == [1569; 4] && out.len() == 6276 && balanced_ok(&train, &val, &out);

    let mut r = rng(4);
    let mut prop_fail = 0;
    for case in 0..200 {
        let tc: [usize; 4] = std::array::from_fn(|_| r.random_range(0..60));
        let vc: [usize; 4] = std::array::from_fn(|_| r.random_range(0..30));
        let t = counted(tc, 0, "t");
        let v = counted(vc, 10_000, "v");
        let empty = (0..4).any(|g| tc[g] + vc[g] == 0);
        match balanced_subsample(&t, &v, None, case) {
            Ok(o) if !empty && balanced_ok(&t, &v, &o) => {}
            Err(_) if empty => {}
            _ => prop_fail += 1,
        }
    }
    outcome(
        fixed && prop_fail == 0,
        format!("pooled counts give {counts:?} ({} total); 200 random pools, {prop_fail} violations", out.len()),
    )
}

// ---- 5 to 8 ------------------------------------------------------------

struct Benches {
    eo: BenchReport,
    eo_secs: f64,
    ae: BenchReport,
    mmf: BenchReport,
}

fn run_benches() -> Benches {
    let cfg = bench_cfg(false);
    let run = |n: FairnessNotion| {
        let t = Instant::now();
        let r = bench(&cfg, &[n], &Method::ALL).expect("bench");
        let secs = t.elapsed().as_secs_f64();
        print!("{}", r.to_csv());
        eprintln!("  bench {n}: {secs:.0}s");
        (r, secs)
    };
    let (eo, eo_secs) = run(FairnessNotion::Eo);
    let (ae, _) = run(FairnessNotion::Ae);
    let (mmf, _) = run(FairnessNotion::Mmf);
    Benches { eo, eo_secs, ae, mmf }
}

fn fairness_overfitting(b: &Benches) -> Outcome {
    let full = b.eo.row(FairnessNotion::Eo, Method::FullFtReg).unwrap();
    let fdr = b.eo.row(FairnessNotion::Eo, Method::Fdr).unwrap();
    let (ft, fe) = (full.train.eo_diff.mean, full.test.eo_diff.mean);
    let (dt, de) = (fdr.train.eo_diff.mean, fdr.test.eo_diff.mean);
    let pass = ft <= 0.05 && fe - ft >= 0.10 && (de - dt) < 0.5 * (fe - ft) && b.eo_secs < 900.0;
    outcome(
        pass,
        format!(
            "FullFT-Reg train/test EO {ft:.3}/{fe:.3} (gap {:.3}); FDR {dt:.3}/{de:.3} (gap {:.3}); EO bench {:.0}s",
            fe - ft,
            de - dt,
            b.eo_secs
        ),
    )
}

fn ordering(b: &Benches) -> Outcome {
    let eo_af = |m| b.eo.row(FairnessNotion::Eo, m).unwrap().test.af.mean;
    let (f, rw, l) = (eo_af(Method::Fdr), eo_af(Method::LastFtRw), eo_af(Method::LastFt));
    let af_order = f > rw && rw > l;
    let mut parts = vec![format!("EO AF FDR {f:.3} > RW {rw:.3} > LastFT {l:.3}: {af_order}")];
    let mut all_best = true;
    for (report, notion) in [(&b.eo, FairnessNotion::Eo), (&b.ae, FairnessNotion::Ae), (&b.mmf, FairnessNotion::Mmf)] {
        // lower is better for the gaps, higher for worst-group accuracy
        let value = |m: Method| {
            let t = &report.row(notion, m).unwrap().test;
            match notion {
                FairnessNotion::Eo => t.eo_diff.mean,
                FairnessNotion::Ae => t.ae_diff.mean,
                _ => -t.wa.mean,
            }
        };
        let fdr = value(Method::Fdr);
        let (best_other, other) = Method::ALL
            .into_iter()
            .filter(|&m| m != Method::Fdr)
            .map(|m| (m, value(m)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let best = fdr < other;
        all_best &= best;
        parts.push(format!("{notion} FDR {:.3} vs best other {best_other} {:.3}: {best}", fdr.abs(), other.abs()));
    }
    outcome(af_order && all_best, parts.join("; "))
}

fn core_features(b: &Benches) -> Outcome {
    let cfg = bench_cfg(false);
    let (target, _) = cfg.generate().unwrap();
    let mut acc = Vec::new();
    let mut worst = Vec::new();
    for s in &cfg.seeds {
        let ctx = SeedContext::prepare(&cfg, &target, None, *s, true).unwrap();
        let r = evaluate(ctx.backbone.as_ref().unwrap(), &ctx.bundle.test, FairnessNotion::Mmf).unwrap();
        acc.push(r.accuracy);
        worst.push(r.wa);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (acc, worst) = (mean(&acc), mean(&worst));
    let after = b.eo.row(FairnessNotion::Eo, Method::Fdr).unwrap().test.wa.mean;
    let pass = acc - worst >= 0.25 && after - worst >= 0.15;
    outcome(
        pass,
        format!("backbone accuracy {acc:.3}, worst group {worst:.3} (gap {:.3}); FDR (EO) worst group {after:.3} (+{:.3})", acc - worst, after - worst),
    )
}

fn transfer() -> Outcome {
    let cfg = bench_cfg(true);
    let t = Instant::now();
    let r = bench(&cfg, &[FairnessNotion::Eo], &[Method::LastFt, Method::Fdr]).expect("transfer bench");
    let l = r.row(FairnessNotion::Eo, Method::LastFt).unwrap().test.eo_diff.mean;
    let f = r.row(FairnessNotion::Eo, Method::Fdr).unwrap().test.eo_diff.mean;
    outcome(f < l, format!("test EO FDR {f:.3} vs LastFT {l:.3} ({:.0}s)", t.elapsed().as_secs_f64()))
}

// ---- 9 ----------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(
        &cfg,
        "pretrain_epochs = 10\nsweep_seeds = 2\n[data]\nn_total = 4000\nminority_fraction = 0.02\n\
         [grid]\nlearning_rates = [0.001, 0.003]\nepochs_options = [50, 100]\nalphas = [1.0, 2.0]\n\
         [full_network_grid]\nlearning_rates = [0.01]\nepochs_options = [20]\nalphas = [1.0, 2.0]\n",
    )
    .unwrap();
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = Command::new(env!("CARGO_BIN_EXE_fdr"))
            .args(["bench", "--config", cfg.to_str().unwrap(), "--seeds", "3", "--out", out.to_str().unwrap()])
            .output()
            .expect("run fdr bench");
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (o.stdout, std::fs::read(out.join("table.csv")).unwrap())
    };
    let (s1, c1) = run("a");
    let (s2, c2) = run("b");
    let rows = c1.iter().filter(|&&b| b == b'\n').count() - 1;
    outcome(s1 == s2 && c1 == c2, format!("{rows} rows, {} bytes, identical: {}", c1.len(), c1 == c2))
}

// ---- 10 ---------------------------------------------------------------

fn surgical() -> Outcome {
    let cfg = bench_cfg(false);
    let (target, _) = cfg.generate().unwrap();
    let ctx = SeedContext::prepare(&cfg, &target, None, 0, true).unwrap();
    let backbone = ctx.backbone.unwrap();
    let data = &ctx.bundle.balanced;
    let obj = ObjectiveConfig::new(FairnessNotion::Eo, 2.0, group_weights(data).unwrap()).unwrap();
    let tc = TrainConfig {
        learning_rate: 3e-3,
        epochs: 200,
        seed: 7,
        ..Default::default()
    };
    let n = backbone.n_layers();

    let mut head = backbone.clone().freeze_all_but_last();
    head.reinit_layer(n - 1, 11).unwrap();
    let plain = train(&head, data, &obj, &tc).unwrap();
    let block = surgical_train(&head, SurgicalTarget::Block(n - 1), data, &obj, &tc).unwrap();
    let exact = plain.head == block.head && plain.trace == block.trace;

    let mut frozen_ok = true;
    for b in 0..n {
        let out = surgical_train(&backbone, SurgicalTarget::Block(b), data, &obj, &tc).unwrap();
        frozen_ok &= (0..n).filter(|&l| l != b).all(|l| out.head.layers()[l] == backbone.layers()[l]);
    }

    let (out, _) = train_with_checkpoints(&backbone, data, &obj, &tc, LrPolicy::AutoRgn, &[]).unwrap();
    let rgn_ok = out.trace.iter().all(|r| {
        let m = r.lr_multipliers.as_ref().unwrap();
        m.iter().all(|v| (0.0..=1.0).contains(v)) && m.iter().copied().fold(f64::MIN, f64::max) == 1.0
    });
    outcome(
        exact && frozen_ok && rgn_ok,
        format!("last block bit-exact: {exact}; frozen layers unchanged: {frozen_ok}; multipliers normalized over {} epochs: {rgn_ok}", out.trace.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |id: usize, o: Outcome| {
        println!("criterion {id}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    report(1, gradients());
    report(2, metric_oracles());
    report(3, af_identities());
    report(4, sampler());
    report(9, determinism());
    report(10, surgical());
    let benches = run_benches();
    report(5, fairness_overfitting(&benches));
    report(6, ordering(&benches));
    report(7, core_features(&benches));
    report(8, transfer());

    results.sort_by_key(|r| r.0);
    println!("\nacceptance summary");
    for (id, o) in &results {
        println!("criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var_os("FDR_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
