//! Multi-seed method comparison.
//!
//! For every (notion, recipe): sweep the grid on the first `sweep_seeds`
//! seeds, scoring the mean AF on their held-out selection splits, then run
//! the winning configuration on the remaining seeds and aggregate mean and
//! standard deviation over all of them.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pretrain_backbone, run_method, run_trajectory, BenchConfig, DataBundle, Method, RunRecord};
use crate::dataset::GroupedDataset;
use crate::error::{FdrError, Result};
use crate::metrics::MetricsReport;
use crate::model::MlpHead;
use crate::objectives::FairnessNotion;
use crate::trainer::{sweep, HyperParams, SweepOutcome};

/// Data and backbone of one seed.
#[derive(Clone, Debug)]
pub struct SeedContext {
    pub seed: u64,
    pub bundle: DataBundle,
    pub backbone: Option<MlpHead>,
}

impl SeedContext {
    pub fn prepare(
        cfg: &BenchConfig,
        target: &GroupedDataset,
        source: Option<&GroupedDataset>,
        seed: u64,
        with_backbone: bool,
    ) -> Result<Self> {
        let bundle = DataBundle::prepare(target, source, cfg.fractions()?, cfg.selection_fraction, seed)?;
        let backbone = if with_backbone {
            Some(pretrain_backbone(&bundle.pretrain, &cfg.dims()?, &cfg.pretrain_config(seed))?)
        } else {
            None
        };
        Ok(SeedContext { seed, bundle, backbone })
    }
}

/// Grid search for one recipe, scored by the mean AF on the selection
/// splits of `contexts`. Each entry carries one record per context.
pub fn sweep_method(
    cfg: &BenchConfig,
    contexts: &[SeedContext],
    method: Method,
    notion: FairnessNotion,
) -> Result<SweepOutcome<Vec<RunRecord>>> {
    if contexts.is_empty() {
        return Err(FdrError::InvalidArgument("sweep needs at least one seed".into()));
    }
    let dims = cfg.dims()?;
    sweep(cfg.grid_for(method), method.uses_alpha(notion), |lr, alpha, epochs| {
        let mut per_epoch: Vec<(f64, Vec<RunRecord>)> = vec![(0.0, Vec::new()); epochs.len()];
        for ctx in contexts {
            let records = run_trajectory(
                method,
                ctx.backbone.as_ref(),
                &dims,
                &ctx.bundle,
                notion,
                lr,
                alpha,
                epochs,
                ctx.seed,
                &cfg.protocol,
            )?;
            for (slot, r) in per_epoch.iter_mut().zip(records) {
                slot.0 += r.selection.as_ref().map_or(f64::NAN, |s| s.af);
                slot.1.push(r);
            }
        }
        let k = contexts.len() as f64;
        Ok(per_epoch.into_iter().map(|(sum, recs)| (sum / k, recs)).collect())
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MetricStats { mean, std }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub wacc: MetricStats,
    pub accuracy: MetricStats,
    pub auc: MetricStats,
    pub eo_diff: MetricStats,
    pub ae_diff: MetricStats,
    pub wa: MetricStats,
    /// EO_Diff, AE_Diff or WA depending on the notion.
    pub fairness: MetricStats,
    pub af: MetricStats,
}

impl SplitStats {
    fn from_reports<'a>(reports: impl Iterator<Item = &'a MetricsReport> + Clone) -> Self {
        let stat = |f: fn(&MetricsReport) -> f64| {
            MetricStats::from_values(&reports.clone().map(f).collect::<Vec<_>>())
        };
        SplitStats {
            wacc: stat(|r| r.wacc),
            accuracy: stat(|r| r.accuracy),
            auc: stat(|r| r.auc),
            eo_diff: stat(|r| r.eo_diff),
            ae_diff: stat(|r| r.ae_diff),
            wa: stat(|r| r.wa),
            fairness: stat(|r| r.fairness_value()),
            af: stat(|r| r.af),
        }
    }

    fn columns(&self) -> [MetricStats; 8] {
        [
            self.wacc,
            self.accuracy,
            self.auc,
            self.eo_diff,
            self.ae_diff,
            self.wa,
            self.fairness,
            self.af,
        ]
    }
}

const METRIC_NAMES: [&str; 8] = ["wacc", "accuracy", "auc", "eo_diff", "ae_diff", "wa", "fairness", "af"];

/// Leading CSV columns; the metric columns follow as
/// `{train,test}_{metric}_{mean,std}` for every metric in
/// wacc, accuracy, auc, eo_diff, ae_diff, wa, fairness, af.
pub const BENCH_CSV_COLUMNS: [&str; 6] = ["notion", "method", "seeds", "learning_rate", "epochs", "alpha"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub notion: FairnessNotion,
    pub method: Method,
    pub params: HyperParams,
    pub seeds: usize,
    pub train: SplitStats,
    pub test: SplitStats,
}

/// Grid points tried for one (notion, recipe) with their selection AF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub notion: FairnessNotion,
    pub method: Method,
    pub best: HyperParams,
    pub points: Vec<(HyperParams, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub sweeps: Vec<SweepSummary>,
    pub runs: Vec<RunRecord>,
}

impl BenchReport {
    pub fn row(&self, notion: FairnessNotion, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.notion == notion && r.method == method)
    }

    pub fn csv_header() -> String {
        let mut cols: Vec<String> = BENCH_CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        for split in ["train", "test"] {
            for m in METRIC_NAMES {
                cols.push(format!("{split}_{m}_mean"));
                cols.push(format!("{split}_{m}_std"));
            }
        }
        cols.join(",")
    }

    /// The aggregated table. Wall times are left out so the output only
    /// depends on the configuration.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![
                r.notion.to_string(),
                r.method.to_string(),
                r.seeds.to_string(),
                format!("{}", r.params.learning_rate),
                r.params.epochs.to_string(),
                r.params.alpha.map_or(String::new(), |a| format!("{a}")),
            ];
            for split in [&r.train, &r.test] {
                for s in split.columns() {
                    fields.push(format!("{:.6}", s.mean));
                    fields.push(format!("{:.6}", s.std));
                }
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `table.csv`, `table.json`, `runs.jsonl` and `sweeps.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| FdrError::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| FdrError::io(&p, e))
        };
        write("table.csv", self.to_csv())?;
        write("table.json", serde_json::to_string_pretty(&self.rows)?)?;
        write("sweeps.json", serde_json::to_string_pretty(&self.sweeps)?)?;
        let mut runs = Vec::new();
        super::write_jsonl(&self.runs, &mut runs)?;
        write("runs.jsonl", String::from_utf8(runs).expect("json is utf-8"))
    }
}

/// Run the full comparison.
pub fn bench(cfg: &BenchConfig, notions: &[FairnessNotion], methods: &[Method]) -> Result<BenchReport> {
    cfg.validate()?;
    if notions.is_empty() || methods.is_empty() {
        return Err(FdrError::Config("bench needs at least one notion and one method".into()));
    }
    let (target, source) = cfg.generate()?;
    let need_backbone = methods.iter().any(|m| !m.recipe().trains_full_network);
    let contexts: Vec<SeedContext> = cfg
        .seeds
        .par_iter()
        .map(|&s| SeedContext::prepare(cfg, &target, source.as_ref(), s, need_backbone))
        .collect::<Result<_>>()?;
    let dims = cfg.dims()?;
    let n_sweep = cfg.sweep_seeds.min(contexts.len());

    let mut rows = Vec::new();
    let mut sweeps = Vec::new();
    let mut runs = Vec::new();
    for &notion in notions {
        for &method in methods {
            let outcome = sweep_method(cfg, &contexts[..n_sweep], method, notion)?;
            let best = outcome.best;
            sweeps.push(SweepSummary {
                notion,
                method,
                best,
                points: outcome
                    .entries
                    .iter()
                    .map(|e| (e.params, e.outcome.as_ref().ok().map(|(s, _)| *s)))
                    .collect(),
            });
            let mut records = match &outcome.best_entry().outcome {
                Ok((_, recs)) => recs.clone(),
                Err(msg) => return Err(FdrError::AllRunsFailed(vec![msg.clone()])),
            };
            let rest: Vec<Result<RunRecord>> = contexts[n_sweep..]
                .par_iter()
                .map(|ctx| {
                    run_method(
                        method,
                        ctx.backbone.as_ref(),
                        &dims,
                        &ctx.bundle,
                        notion,
                        &best,
                        ctx.seed,
                        &cfg.protocol,
                    )
                })
                .collect();
            let mut failures = Vec::new();
            for (ctx, r) in contexts[n_sweep..].iter().zip(rest) {
                match r {
                    Ok(rec) => records.push(rec),
                    Err(e) => failures.push(format!("{method}/{notion} seed {}: {e}", ctx.seed)),
                }
            }
            if !failures.is_empty() {
                return Err(FdrError::AllRunsFailed(failures));
            }
            rows.push(BenchRow {
                notion,
                method,
                params: best,
                seeds: records.len(),
                train: SplitStats::from_reports(records.iter().map(|r| &r.train)),
                test: SplitStats::from_reports(records.iter().map(|r| &r.test)),
            });
            runs.extend(records);
        }
    }
    Ok(BenchReport { rows, sweeps, runs })
}
