//! The `iv4rec` command line.
//!
//! Settings resolve as flags, then the `--config` TOML file, then built-in
//! defaults. The effective configuration of every command is written to
//! `manifest.json` (or `<output>.manifest.json` for single-file outputs)
//! together with SHA-256 hashes of every input file.
//!
//! Exit codes: 0 success, 2 usage, 3 data or format error, 4 numerical
//! failure.

mod manifest;

pub use manifest::{sha256_file, write_atomic, InputHash, RunManifest, MANIFEST_FILE};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    chronological_split, gen_synthetic, load_rec_log, load_search_log, save_rec_log, EmbeddingTable, RecInteraction,
    SyntheticConfig,
};
use crate::data::synthetic::SECONDS_PER_DAY;
use crate::error::Error;
use crate::iv::{build_iv_store, IvBuildConfig, IvStore};
use crate::models::{ModelConfig, ModelKind};
use crate::recon::{reconstruct_table, ReconConfig, Variant};
use crate::train::{
    run_ablation, run_iv_quality_sweep, train, Checkpoint, Corpus, ExperimentData, MetricsReport, ResultRow,
    ResultTable, RunSpec, SweepMode, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "iv4rec", version, about = "Search queries as instrumental variables for recommenders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic confounded dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Build per-item IV matrices from a search log.
    BuildIvs(BuildIvsArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test log.
    Eval(EvalArgs),
    /// Train several reconstruction variants under several seeds.
    Ablate(AblateArgs),
    /// Vary IV quality (number of queries or clicked fraction).
    Sweep(SweepArgs),
    /// Write reconstructed item embeddings of a checkpoint.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_users: Option<usize>,
    #[arg(long)]
    pub num_items: Option<usize>,
    #[arg(long)]
    pub num_queries: Option<usize>,
    #[arg(long)]
    pub causal_dim: Option<usize>,
    #[arg(long)]
    pub confound_dim: Option<usize>,
    #[arg(long)]
    pub confounder_strength: Option<f64>,
    #[arg(long)]
    pub queries_per_item: Option<usize>,
    #[arg(long)]
    pub impressions_per_user: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BuildIvsArgs {
    /// Optional; used only to report items without embeddings.
    #[arg(long)]
    pub rec: Option<PathBuf>,
    #[arg(long)]
    pub search: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Columns per IV matrix.
    #[arg(short = 'N', long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub projection_seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Training hyperparameters shared by `train`, `ablate` and `sweep`.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "learning-rate", alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout_keep: Option<f64>,
    #[arg(long)]
    pub recon_dropout_keep: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_history: Option<usize>,
    /// Train, validation and test days, e.g. `5,1,1`. Defaults to all but
    /// the last two days for training.
    #[arg(long)]
    pub split_days: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataFlags {
    /// Full recommendation log; split chronologically.
    #[arg(long)]
    pub rec: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub iv_store: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Recommendation log to score.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Log supplying click histories; defaults to the test log.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    #[arg(long)]
    pub iv_store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub iv_store: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Number of seeds; runs use seeds `seed_base .. seed_base + seeds`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    NumQueries,
    ClickedFraction,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub search: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub mode: Option<SweepKind>,
    /// Comma-separated settings: N values or clicked fractions.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Columns per IV matrix for the clicked-fraction mode.
    #[arg(short = 'N', long = "n")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub iv_store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Contents of a `--config` file; every section and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synthetic: SyntheticConfig,
    pub iv: IvBuildConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub recon: ReconConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            CliError::Run(Error::Parse {
                path: path.display().to_string(),
                line: e
                    .span()
                    .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                    .unwrap_or(1),
                message: e.message().to_string(),
            })
        })
    }
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::BuildIvs(a) => cmd_build_ivs(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportEmbeddings(a) => cmd_export_embeddings(a),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    match value {
        Some(v) => Ok(v),
        None => usage(format!("missing required flag {flag}")),
    }
}

fn existing<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    let p = required(value, flag)?;
    if !p.is_file() {
        return Err(CliError::Run(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("input for {flag} not found")),
        )));
    }
    Ok(p)
}

fn prepare_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return usage(format!("output directory {} is not empty (pass --force to overwrite)", dir.display()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn prepare_file(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return usage(format!("output file {} exists (pass --force to overwrite)", path.display()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn sidecar_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration types serialize")
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Run(Error::io(path, e)))
}

fn cmd_gen_synthetic(a: GenSyntheticArgs) -> CliResult<()> {
    let out = required(&a.out, "--out")?.clone();
    let file = FileConfig::load(a.config.as_deref())?;
    let mut cfg = file.synthetic;
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    over!(
        seed,
        num_users,
        num_items,
        num_queries,
        causal_dim,
        confound_dim,
        confounder_strength,
        queries_per_item,
        impressions_per_user
    );
    cfg.validate()?;
    prepare_dir(&out, a.force)?;
    let mut manifest = RunManifest::new("gen-synthetic", to_json(&cfg), Some(cfg.seed));
    if let Some(c) = &a.config {
        manifest.add_input(c)?;
    }
    for name in crate::data::synthetic::OUTPUT_FILES {
        manifest.add_output(&out.join(name));
    }
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;
    let ds = gen_synthetic(&cfg)?;
    ds.write_to_dir(&out)?;
    println!(
        "wrote {} rec rows, {} search rows, {} items, {} queries, {} users to {}",
        ds.rec.len(),
        ds.search.len(),
        ds.items.len(),
        ds.queries.len(),
        ds.contexts.len(),
        out.display()
    );
    Ok(())
}

fn cmd_build_ivs(a: BuildIvsArgs) -> CliResult<()> {
    let search_p = existing(&a.search, "--search")?;
    let queries_p = existing(&a.queries, "--queries")?;
    let items_p = existing(&a.items, "--items")?;
    let out = required(&a.out, "--out")?.clone();
    let rec_p = match &a.rec {
        Some(_) => Some(existing(&a.rec, "--rec")?),
        None => None,
    };
    let file = FileConfig::load(a.config.as_deref())?;
    let mut cfg = file.iv;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.projection_seed {
        cfg.projection_seed = s;
    }
    if cfg.n == 0 {
        return usage("-N must be >= 1");
    }
    prepare_file(&out, a.force)?;
    let mut manifest = RunManifest::new("build-ivs", to_json(&cfg), Some(cfg.projection_seed));
    for p in [Some(search_p), Some(queries_p), Some(items_p), rec_p, a.config.as_deref()]
        .into_iter()
        .flatten()
    {
        manifest.add_input(p)?;
    }
    manifest.add_output(&out);
    manifest.write_atomic(&sidecar_manifest(&out))?;

    let search = load_search_log(search_p)?;
    let queries = EmbeddingTable::load(queries_p)?;
    let items = EmbeddingTable::load(items_p)?;
    if let Some(rec_p) = rec_p {
        let rec = load_rec_log(rec_p)?;
        let missing: std::collections::BTreeSet<&str> = rec
            .iter()
            .map(|r| r.item_id.as_str())
            .filter(|id| items.get(id).is_none())
            .collect();
        if !missing.is_empty() {
            log::warn!("{} item(s) in the recommendation log have no embedding", missing.len());
        }
    }
    let store = build_iv_store(&items, &search, &queries, &cfg)?;
    store.save(&out)?;
    let s = store.stats();
    println!(
        "items {}\tN {}\tclicked {}\tbackfill {}\tpadding {}\tdegenerate {}",
        s.items, cfg.n, s.clicked_columns, s.backfill_columns, s.padding_columns, s.degenerate_items
    );
    Ok(())
}

fn parse_split_days(s: &str) -> CliResult<(usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--split-days expects three integers like 5,1,1, got `{s}`")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => usage(format!("--split-days expects three integers like 5,1,1, got `{s}`")),
    }
}

fn default_split(log: &[RecInteraction]) -> CliResult<(usize, usize, usize)> {
    let (lo, hi) = log
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), r| (lo.min(r.timestamp), hi.max(r.timestamp)));
    if log.is_empty() {
        return Err(CliError::Run(Error::Config("recommendation log is empty".into())));
    }
    let days = (hi.div_euclid(SECONDS_PER_DAY) - lo.div_euclid(SECONDS_PER_DAY) + 1) as usize;
    if days < 3 {
        return Err(CliError::Run(Error::Config(format!(
            "log spans {days} day(s); pass --split-days explicitly"
        ))));
    }
    Ok((days - 2, 1, 1))
}

/// Resolves training settings: flags over the config file over defaults.
fn resolve_train(flags: &TrainFlags, seed: Option<u64>) -> CliResult<(FileConfig, TrainConfig)> {
    let file = FileConfig::load(flags.config.as_deref())?;
    let mut t = file.train.clone();
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { t.$f = v; } )* };
    }
    over!(
        epochs,
        learning_rate,
        dropout_keep,
        recon_dropout_keep,
        lambda,
        batch_size,
        patience,
        max_history
    );
    if let Some(s) = seed {
        t.seed = s;
    }
    t.validate()?;
    Ok((file, t))
}

struct LoadedData {
    data: ExperimentData,
    rec_path: PathBuf,
    split: (usize, usize, usize),
}

fn load_data(d: &DataFlags, flags: &TrainFlags, max_history: usize, manifest: &mut RunManifest) -> CliResult<LoadedData> {
    let rec_p = existing(&d.rec, "--rec")?.to_path_buf();
    let items_p = existing(&d.items, "--items")?;
    let ctx_p = existing(&d.contexts, "--contexts")?;
    for p in [rec_p.as_path(), items_p, ctx_p] {
        manifest.add_input(p)?;
    }
    let rec = load_rec_log(&rec_p)?;
    let split = match &flags.split_days {
        Some(s) => parse_split_days(s)?,
        None => default_split(&rec)?,
    };
    let data = ExperimentData::new(
        EmbeddingTable::load(items_p)?,
        None,
        EmbeddingTable::load(ctx_p)?,
        &rec,
        Vec::new(),
        split,
        max_history,
    )?;
    Ok(LoadedData {
        data,
        rec_path: rec_p,
        split,
    })
}

fn metrics_table(label: &str, seed: u64, report: &MetricsReport) -> String {
    let mut t = ResultTable::default();
    t.rows.push(ResultRow {
        label: label.to_string(),
        seed,
        report: report.clone(),
    });
    let mut buf = Vec::new();
    t.write_tsv(&mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("ascii")
}

#[derive(Serialize)]
struct TrainSnapshot<'a> {
    model: ModelKind,
    variant: Variant,
    split_days: (usize, usize, usize),
    train: &'a TrainConfig,
    model_config: &'a ModelConfig,
    recon: &'a ReconConfig,
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let model = *required(&a.model, "--model")?;
    let variant = *required(&a.variant, "--variant")?;
    if variant.needs_ivs() && a.iv_store.is_none() {
        return usage(format!("--variant {variant} requires --iv-store"));
    }
    let out = required(&a.out, "--out")?.clone();
    let (file, tcfg) = resolve_train(&a.train, a.seed)?;
    let iv_p = match &a.iv_store {
        Some(_) if variant.needs_ivs() => Some(existing(&a.iv_store, "--iv-store")?),
        _ => None,
    };
    existing(&a.data.rec, "--rec")?;
    existing(&a.data.items, "--items")?;
    existing(&a.data.contexts, "--contexts")?;
    prepare_dir(&out, a.force)?;

    let mut manifest = RunManifest::new("train", serde_json::Value::Null, Some(tcfg.seed));
    let loaded = load_data(&a.data, &a.train, tcfg.max_history, &mut manifest)?;
    if let Some(p) = iv_p {
        manifest.add_input(p)?;
    }
    if let Some(c) = &a.train.config {
        manifest.add_input(c)?;
    }
    manifest.config = to_json(&TrainSnapshot {
        model,
        variant,
        split_days: loaded.split,
        train: &tcfg,
        model_config: &file.model,
        recon: &file.recon,
    });
    let names = [
        "checkpoint.json",
        "curve.tsv",
        "metrics.tsv",
        "train.tsv",
        "val.tsv",
        "test.tsv",
    ];
    for n in names {
        manifest.add_output(&out.join(n));
    }
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;

    let store = iv_p.map(IvStore::load).transpose()?;
    let spec = RunSpec {
        model,
        variant,
        recon: file.recon.clone(),
        model_config: file.model.clone(),
        train: tcfg.clone(),
    };
    let data = &loaded.data;
    let projectors = store
        .as_ref()
        .map(|s| data.corpus.projectors(s, spec.recon.alpha_input))
        .transpose()?;
    let init = spec.init_pipeline(&data.corpus, store.as_ref())?;
    let outcome = train(&tcfg, &data.corpus, projectors.as_deref(), &data.train, Some(&data.val), init)?;
    let ck = Checkpoint::new(outcome.pipeline.clone(), tcfg.clone(), store.as_ref().map(|s| s.n()));
    ck.save(out.join("checkpoint.json"))?;
    let mut curve = String::from("epoch\ttrain_loss\tval_auc\n");
    for e in &outcome.curve {
        curve += &format!(
            "{}\t{:.10}\t{}\n",
            e.epoch,
            e.train_loss,
            e.val_auc.map(|v| format!("{v:.10}")).unwrap_or_else(|| "NA".into())
        );
    }
    write_text(&out.join("curve.tsv"), &curve)?;
    if let Some(msg) = outcome.diverged {
        return Err(CliError::Run(Error::Divergence {
            epoch: outcome.curve.len() + 1,
            message: msg,
        }));
    }
    let rec = load_rec_log(&loaded.rec_path)?;
    let split = chronological_split(&rec, loaded.split.0, loaded.split.1, loaded.split.2)?;
    save_rec_log(out.join("train.tsv"), &split.train)?;
    save_rec_log(out.join("val.tsv"), &split.val)?;
    save_rec_log(out.join("test.tsv"), &split.test)?;
    let test = if data.test.is_empty() {
        None
    } else {
        Some(outcome.pipeline.evaluate(&data.corpus, projectors.as_deref(), &data.test)?)
    };
    match &test {
        Some(r) => write_text(&out.join("metrics.tsv"), &metrics_table(&variant.to_string(), tcfg.seed, r))?,
        None => write_text(&out.join("metrics.tsv"), &format!("{}\n", crate::train::METRICS_HEADER))?,
    }
    println!(
        "{model} {variant}: best epoch {} of {}{}",
        outcome.best_epoch,
        outcome.curve.len(),
        test.map(|r| format!(", test AUC {:.5}", r.auc)).unwrap_or_default()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let ck_p = existing(&a.checkpoint, "--checkpoint")?;
    let test_p = existing(&a.test, "--test")?;
    let items_p = existing(&a.items, "--items")?;
    let ctx_p = existing(&a.contexts, "--contexts")?;
    let out = required(&a.out, "--out")?.clone();
    let hist_p = match &a.history {
        Some(_) => Some(existing(&a.history, "--history")?),
        None => None,
    };
    let ck = Checkpoint::load(ck_p)?;
    let variant = ck.pipeline.variant;
    let iv_p = if variant.needs_ivs() {
        match &a.iv_store {
            Some(_) => Some(existing(&a.iv_store, "--iv-store")?),
            None => return usage(format!("checkpoint variant {variant} requires --iv-store")),
        }
    } else {
        None
    };
    prepare_dir(&out, a.force)?;
    let mut manifest = RunManifest::new("eval", serde_json::json!({ "variant": variant }), Some(ck.seed));
    for p in [Some(ck_p), Some(test_p), hist_p, Some(items_p), Some(ctx_p), iv_p].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    manifest.add_output(&out.join("metrics.tsv"));
    manifest.add_output(&out.join("metrics.json"));
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;

    let test = load_rec_log(test_p)?;
    let history = match hist_p {
        Some(p) => load_rec_log(p)?,
        None => test.clone(),
    };
    let corpus = Corpus::new(EmbeddingTable::load(items_p)?, EmbeddingTable::load(ctx_p)?, &history);
    let set = corpus.examples(&test, ck.train_config.max_history)?;
    let store = iv_p.map(IvStore::load).transpose()?;
    let alpha_input = ck.pipeline.recon.alpha_input;
    let projectors = store.as_ref().map(|s| corpus.projectors(s, alpha_input)).transpose()?;
    let report = ck.pipeline.evaluate(&corpus, projectors.as_deref(), &set)?;
    write_text(
        &out.join("metrics.tsv"),
        &metrics_table(&variant.to_string(), ck.seed, &report),
    )?;
    write_text(
        &out.join("metrics.json"),
        &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"),
    )?;
    println!(
        "auc {:.5}\tgauc {}\tmrr {:.5}\tndcg5 {:.5}\tndcg10 {:.5}\timpressions {}",
        report.auc,
        report.gauc.map(|g| format!("{g:.5}")).unwrap_or_else(|| "NA".into()),
        report.mrr,
        report.ndcg5,
        report.ndcg10,
        report.impressions
    );
    Ok(())
}

#[derive(Serialize)]
struct RunLine<'a> {
    label: &'a str,
    seed: u64,
    model: ModelKind,
    report: &'a MetricsReport,
}

fn write_table(out: &Path, table: &ResultTable, model: ModelKind) -> CliResult<()> {
    let mut buf = Vec::new();
    table.write_tsv(&mut buf).expect("in-memory write");
    let tsv = out.join("metrics.tsv");
    fs::write(&tsv, &buf).map_err(|e| Error::io(&tsv, e))?;
    let mut lines = String::new();
    for r in &table.rows {
        let line = RunLine {
            label: &r.label,
            seed: r.seed,
            model,
            report: &r.report,
        };
        lines += &serde_json::to_string(&line).map_err(Error::from)?;
        lines.push('\n');
    }
    write_text(&out.join("runs.jsonl"), &lines)?;
    let mut summary = String::from("variant\tmean_auc\tsd_auc\truns\n");
    for label in table.labels() {
        if let Some((m, sd, n)) = table.auc_summary(label) {
            summary += &format!("{label}\t{m:.10}\t{sd:.10}\t{n}\n");
            println!("{label}\tAUC {m:.5} ± {sd:.5} ({n} runs)");
        }
    }
    for (label, seed, why) in &table.failures {
        let seed = seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        summary += &format!("# failed {label} seed {seed}: {why}\n");
        eprintln!("failed {label} seed {seed}: {why}");
    }
    write_text(&out.join("summary.tsv"), &summary)
}

const TABLE_OUTPUTS: [&str; 3] = ["metrics.tsv", "runs.jsonl", "summary.tsv"];

#[derive(Serialize)]
struct ExperimentSnapshot<'a> {
    model: ModelKind,
    labels: Vec<String>,
    seeds: &'a [u64],
    split_days: (usize, usize, usize),
    iv: Option<&'a IvBuildConfig>,
    train: &'a TrainConfig,
    model_config: &'a ModelConfig,
    recon: &'a ReconConfig,
}

fn cmd_ablate(a: AblateArgs) -> CliResult<()> {
    let model = *required(&a.model, "--model")?;
    if a.variants.is_empty() {
        return usage("missing required flag --variants");
    }
    if a.variants.iter().any(|v| v.needs_ivs()) && a.iv_store.is_none() {
        return usage("variants other than original require --iv-store");
    }
    if a.seeds == 0 {
        return usage("--seeds must be >= 1");
    }
    let out = required(&a.out, "--out")?.clone();
    let (file, tcfg) = resolve_train(&a.train, None)?;
    let iv_p = match &a.iv_store {
        Some(_) => Some(existing(&a.iv_store, "--iv-store")?),
        None => None,
    };
    existing(&a.data.rec, "--rec")?;
    existing(&a.data.items, "--items")?;
    existing(&a.data.contexts, "--contexts")?;
    prepare_dir(&out, a.force)?;
    let seeds: Vec<u64> = (a.seed_base..a.seed_base + a.seeds).collect();
    let mut manifest = RunManifest::new("ablate", serde_json::Value::Null, Some(a.seed_base));
    let loaded = load_data(&a.data, &a.train, tcfg.max_history, &mut manifest)?;
    for p in [iv_p, a.train.config.as_deref()].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    manifest.config = to_json(&ExperimentSnapshot {
        model,
        labels: a.variants.iter().map(|v| v.to_string()).collect(),
        seeds: &seeds,
        split_days: loaded.split,
        iv: None,
        train: &tcfg,
        model_config: &file.model,
        recon: &file.recon,
    });
    for n in TABLE_OUTPUTS {
        manifest.add_output(&out.join(n));
    }
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;

    let store = iv_p.map(IvStore::load).transpose()?;
    let base = RunSpec {
        model,
        variant: a.variants[0],
        recon: file.recon.clone(),
        model_config: file.model.clone(),
        train: tcfg,
    };
    let table = run_ablation(&loaded.data, store.as_ref(), &base, &a.variants, &seeds);
    write_table(&out, &table, model)?;
    if table.rows.is_empty() {
        return Err(CliError::Run(Error::Numerical("every ablation run failed".into())));
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let model = *required(&a.model, "--model")?;
    let kind = *required(&a.mode, "--mode")?;
    if a.values.is_empty() {
        return usage("missing required flag --values");
    }
    if a.seeds == 0 {
        return usage("--seeds must be >= 1");
    }
    let mode = match kind {
        SweepKind::NumQueries => {
            if a.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return usage("--values for num-queries must be positive integers");
            }
            SweepMode::NumQueries(a.values.iter().map(|&v| v as usize).collect())
        }
        SweepKind::ClickedFraction => {
            if a.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return usage("--values for clicked-fraction must lie in [0, 1]");
            }
            SweepMode::ClickedFraction(a.values.clone())
        }
    };
    let out = required(&a.out, "--out")?.clone();
    let (file, tcfg) = resolve_train(&a.train, None)?;
    let search_p = existing(&a.search, "--search")?;
    let queries_p = existing(&a.queries, "--queries")?;
    existing(&a.data.rec, "--rec")?;
    existing(&a.data.items, "--items")?;
    existing(&a.data.contexts, "--contexts")?;
    prepare_dir(&out, a.force)?;
    let mut iv = file.iv.clone();
    if let Some(n) = a.n {
        iv.n = n;
    }
    let seeds: Vec<u64> = (a.seed_base..a.seed_base + a.seeds).collect();
    let mut manifest = RunManifest::new("sweep", serde_json::Value::Null, Some(a.seed_base));
    let mut loaded = load_data(&a.data, &a.train, tcfg.max_history, &mut manifest)?;
    for p in [Some(search_p), Some(queries_p), a.train.config.as_deref()].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    manifest.config = to_json(&ExperimentSnapshot {
        model,
        labels: mode.labels(),
        seeds: &seeds,
        split_days: loaded.split,
        iv: Some(&iv),
        train: &tcfg,
        model_config: &file.model,
        recon: &file.recon,
    });
    for n in TABLE_OUTPUTS {
        manifest.add_output(&out.join(n));
    }
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;

    loaded.data.search = load_search_log(search_p)?;
    loaded.data.queries = Some(EmbeddingTable::load(queries_p)?);
    let base = RunSpec {
        model,
        variant: Variant::Weighted,
        recon: file.recon.clone(),
        model_config: file.model.clone(),
        train: tcfg,
    };
    let table = run_iv_quality_sweep(&loaded.data, &base, &iv, &mode, &seeds)?;
    write_table(&out, &table, model)?;
    if table.rows.is_empty() {
        return Err(CliError::Run(Error::Numerical("every sweep run failed or was skipped".into())));
    }
    Ok(())
}

fn cmd_export_embeddings(a: ExportArgs) -> CliResult<()> {
    let ck_p = existing(&a.checkpoint, "--checkpoint")?;
    let items_p = existing(&a.items, "--items")?;
    let out = required(&a.out, "--out")?.clone();
    let ck = Checkpoint::load(ck_p)?;
    let variant = ck.pipeline.variant;
    let iv_p = if variant.needs_ivs() {
        match &a.iv_store {
            Some(_) => Some(existing(&a.iv_store, "--iv-store")?),
            None => return usage(format!("checkpoint variant {variant} requires --iv-store")),
        }
    } else {
        None
    };
    prepare_file(&out, a.force)?;
    let mut manifest = RunManifest::new("export-embeddings", serde_json::json!({ "variant": variant }), Some(ck.seed));
    for p in [Some(ck_p), Some(items_p), iv_p].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    manifest.add_output(&out);
    manifest.write_atomic(&sidecar_manifest(&out))?;
    let items = EmbeddingTable::load(items_p)?;
    let store = iv_p.map(IvStore::load).transpose()?;
    let table = reconstruct_table(&items, store.as_ref(), &ck.pipeline.recon, variant)?;
    table.save(&out)?;
    println!("wrote {} {variant} embeddings of dim {} to {}", table.len(), table.dim(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_days_parsing() {
        assert_eq!(parse_split_days("5,1,1").unwrap(), (5, 1, 1));
        assert!(parse_split_days("5,1").is_err());
        assert!(parse_split_days("a,b,c").is_err());
    }

    #[test]
    fn missing_out_is_usage_error() {
        assert_eq!(run(["iv4rec", "gen-synthetic", "--seed", "7"]), EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["iv4rec", "train", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn weighted_without_store_names_the_flag() {
        let a = TrainArgs::default_for_test(Variant::Weighted);
        match cmd_train(a) {
            Err(CliError::Usage(m)) => assert!(m.contains("--iv-store")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "[train]\nepochs = 3\n\n[bogus]\nx = 1\n").unwrap();
        assert!(FileConfig::load(Some(&p)).is_err());
        fs::write(&p, "[train]\nepochs = 3\nlearning_rate = 5e-4\n").unwrap();
        let c = FileConfig::load(Some(&p)).unwrap();
        assert_eq!((c.train.epochs, c.train.learning_rate), (3, 5e-4));
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
    }

    impl TrainArgs {
        fn default_for_test(variant: Variant) -> Self {
            TrainArgs {
                data: DataFlags {
                    rec: None,
                    items: None,
                    contexts: None,
                },
                iv_store: None,
                model: Some(ModelKind::DinLite),
                variant: Some(variant),
                seed: None,
                train: TrainFlags::default(),
                out: Some(PathBuf::from("unused")),
                force: false,
            }
        }
    }
}
