//! Command-line front end. Every subcommand accepts `--seed`; failures are
//! reported on stderr as `{"error": <kind>, "message": <text>}` with a
//! nonzero exit code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{gen_synthetic, load_dataset, save_dataset, DataFormat, GroupedDataset, SyntheticSpec};
use crate::error::{FdrError, Result};
use crate::harness::{self, finetune, pretrain_backbone, sweep_finetune, BenchConfig, Method, Protocol};
use crate::metrics::evaluate;
use crate::model::{load_head, save_head, HeadDims};
use crate::objectives::{FairnessNotion, ObjectiveConfig};
use crate::surgical::rgn_scores;
use crate::trainer::{BatchMode, HyperParams, SweepGrid, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "fdr", version, about = "Fairness-penalized last-layer fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic grouped dataset.
    Gen(GenArgs),
    /// Train a full network with plain cross-entropy.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained model with one of the recipes.
    Finetune(FinetuneArgs),
    /// Score a model on a dataset.
    Eval(EvalArgs),
    /// Grid search for one recipe, scored by AF on a selection set.
    Sweep(SweepArgs),
    /// Compare recipes across notions and seeds.
    Bench(BenchArgs),
    /// Relative gradient norm of every layer.
    Rgn(RgnArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// TOML file with SyntheticSpec fields; flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n_total: Option<usize>,
    #[arg(long)]
    pub d_core: Option<usize>,
    #[arg(long)]
    pub d_spurious: Option<usize>,
    #[arg(long)]
    pub d_noise: Option<usize>,
    #[arg(long)]
    pub minority_fraction: Option<f64>,
    #[arg(long)]
    pub core_separation: Option<f64>,
    #[arg(long)]
    pub spurious_correlation: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// csv or binary; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<DataFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Layer widths, e.g. 20,32,16,2.
    #[arg(long)]
    pub dims: HeadDims,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Minibatch size; 0 trains full-batch.
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub notion: FairnessNotion,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Training split.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation split.
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Layer block to train instead of the last layer:
    /// input, hiddenK, last or auto-rgn.
    #[arg(long)]
    pub surgical: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the fine-tuning report and loss trace here as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "eo")]
    pub notion: FairnessNotion,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; evaluation is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML file with learning_rates, epochs_options and alphas.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub notion: FairnessNotion,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Data the AF score is computed on.
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated notions.
    #[arg(long, value_delimiter = ',', default_value = "eo,ae,mmf")]
    pub notions: Vec<FairnessNotion>,
    /// Comma-separated recipes, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub recipes: Vec<String>,
    /// Number of seeds; the run seeds are seed, seed+1, ...
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML BenchConfig.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pretrain on the default shifted source distribution.
    #[arg(long)]
    pub transfer: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RgnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "none")]
    pub notion: FairnessNotion,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load(path: &Path) -> Result<GroupedDataset> {
    load_dataset(path, DataFormat::from_path(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FdrError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| FdrError::io(path, e))
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn batch_mode(size: usize) -> BatchMode {
    if size == 0 {
        BatchMode::Full
    } else {
        BatchMode::MiniBatch(size)
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => SyntheticSpec::from_toml_str(&fs::read_to_string(p).map_err(|e| FdrError::io(p, e))?)?,
        None => SyntheticSpec::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { spec.$field = v; })* };
    }
    apply!(n_total, d_core, d_spurious, d_noise, minority_fraction, core_separation, spurious_correlation, seed);
    let ds = gen_synthetic(&spec)?;
    let format = args.format.unwrap_or_else(|| DataFormat::from_path(&args.out));
    save_dataset(&ds, &args.out, format)
}

fn pretrain(args: &PretrainArgs) -> Result<()> {
    let data = load(&args.data)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        epochs: args.epochs,
        batch_mode: batch_mode(args.batch_size),
        seed: args.seed,
    };
    cfg.validate()?;
    let head = pretrain_backbone(&data, &args.dims, &cfg)?;
    save_head(&head, &args.out)
}

fn finetune_cmd(args: &FinetuneArgs) -> Result<()> {
    let backbone = load_head(&args.model)?;
    let train = load(&args.data)?;
    let val = load(&args.val)?;
    let protocol = Protocol {
        surgical: args.surgical.clone(),
        ..Protocol::default()
    };
    let params = HyperParams {
        learning_rate: args.lr,
        epochs: args.epochs,
        alpha: args.alpha,
    };
    let (head, trace, report) = finetune(args.method, Some(&backbone), &train, &val, args.notion, &params, args.seed, &protocol)?;
    save_head(&head, &args.out)?;
    if let Some(path) = &args.report {
        let losses: Vec<_> = trace.iter().map(|r| r.loss).collect();
        emit(
            Some(path),
            &json!({
                "method": args.method,
                "notion": args.notion,
                "hyperparameters": params,
                "surgical": args.surgical,
                "train": report,
                "trace": losses,
            }),
        )?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let head = load_head(&args.model)?;
    let data = load(&args.data)?;
    let report = evaluate(&head, &data, args.notion)?;
    emit(args.out.as_deref(), &serde_json::to_value(&report)?)
}

fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let grid = SweepGrid::from_toml_str(&fs::read_to_string(&args.grid).map_err(|e| FdrError::io(&args.grid, e))?)?;
    let backbone = load_head(&args.model)?;
    let train = load(&args.data)?;
    let val = load(&args.val)?;
    let selection = load(&args.selection)?;
    let outcome = sweep_finetune(
        args.method,
        Some(&backbone),
        &train,
        &val,
        &selection,
        args.notion,
        &grid,
        args.seed,
        &Protocol::default(),
    )?;
    let points: Vec<_> = outcome
        .entries
        .iter()
        .map(|e| match &e.outcome {
            Ok((score, _)) => json!({"params": e.params, "af": score}),
            Err(msg) => json!({"params": e.params, "error": msg}),
        })
        .collect();
    let best_report = outcome.best_entry().outcome.as_ref().ok().map(|(_, r)| r);
    emit(
        args.out.as_deref(),
        &json!({
            "method": args.method,
            "notion": args.notion,
            "best": outcome.best,
            "selection": best_report,
            "points": points,
        }),
    )
}

/// Build the benchmark configuration described by `args`.
pub fn bench_config(args: &BenchArgs) -> Result<BenchConfig> {
    let mut cfg = match &args.config {
        Some(p) => BenchConfig::from_toml_str(&fs::read_to_string(p).map_err(|e| FdrError::io(p, e))?)?,
        None if args.transfer => BenchConfig::transfer(),
        None => BenchConfig::default(),
    };
    if args.transfer && cfg.source.is_none() {
        cfg.source = BenchConfig::transfer().source;
    }
    let n = args.seeds.unwrap_or(cfg.seeds.len());
    cfg.seeds = (0..n as u64).map(|i| args.seed + i).collect();
    cfg.validate()?;
    Ok(cfg)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        return Ok(Method::ALL.to_vec());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn bench_cmd(args: &BenchArgs) -> Result<()> {
    let cfg = bench_config(args)?;
    let methods = parse_methods(&args.recipes)?;
    let report = harness::bench(&cfg, &args.notions, &methods)?;
    report.write_dir(&args.out)?;
    write_text(
        &args.out.join("config.toml"),
        &toml::to_string(&cfg).map_err(|e| FdrError::Config(e.to_string()))?,
    )?;
    print!("{}", report.to_csv());
    Ok(())
}

fn rgn(args: &RgnArgs) -> Result<()> {
    let head = load_head(&args.model)?;
    let data = load(&args.data)?;
    let weights = match args.notion {
        FairnessNotion::None => crate::dataset::PerGroup::splat(1.0),
        _ => crate::dataset::group_weights(&data)?,
    };
    let obj = ObjectiveConfig::new(args.notion, args.alpha, weights)?;
    let report = rgn_scores(&head, &data, &obj)?;
    emit(args.out.as_deref(), &serde_json::to_value(&report)?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Rgn(a) => rgn(a),
    }
}

/// Error JSON printed on stderr.
pub fn error_json(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message}).to_string()
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim_end()));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            1
        }
    }
}
