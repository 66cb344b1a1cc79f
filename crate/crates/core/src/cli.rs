//! Command-line front end: `run`, `plotdata`, `scatter` and `prep`.
//!
//! `run` settings come from built-in defaults, then an optional flat
//! `key=value` config file, then command-line flags. Keys are the long flag
//! names without leading dashes (`alphas=0,0.5`, `no-standardize=true`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::dataset::{load_manifest, load_orl_dataset, DatasetError, LabeledDataset, SyntheticPreset};
use crate::eval::{
    add_noise, format_alpha, run_experiment, EvalError, EvalReport, ExperimentConfig, MulticlassSystem, NoiseScope, NoiseSpace,
    PairwiseSystem, PcaDim, System, SystemKind,
};
use crate::mlp::TrainConfig;
use crate::pca::{fit_pca, fit_pca_explained, PcaError, PcaOptions};
use crate::report::{self, SchemaError};
use crate::rng;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Schema(#[from] SchemaError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Schema(_) | CliError::Io { .. } => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(msg) => CliError::Config(msg),
            e if e.is_divergence() => CliError::Diverged(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Parser)]
#[command(name = "pairnet", version, about = "Pairwise vs multiclass neural networks under Gaussian noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Cross-validated noise sweep; writes CSVs, a summary table and metadata.
    Run(RunArgs),
    /// Turns an aggregate CSV into per-system `alpha mean lo hi` series files.
    Plotdata(PlotdataArgs),
    /// Writes first-two-component point clouds, clean and noisy, per class.
    Scatter(ScatterArgs),
    /// Fits PCA on a whole dataset and saves the model.
    Prep(PrepArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct SourceArgs {
    /// ORL-style directory with s1..sC subdirectories of PGM files.
    #[arg(long)]
    pub data: Option<String>,
    /// CSV manifest with header `path,label`.
    #[arg(long)]
    pub manifest: Option<String>,
    /// Built-in synthetic dataset (`fig1`).
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Block-average images by this factor before flattening (1 = full resolution).
    #[arg(long)]
    pub downsample: Option<String>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct RunArgs {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Comma-separated subset of `pairwise,multiclass`.
    #[arg(long)]
    pub systems: Option<String>,
    /// Comma-separated noise levels.
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    /// PCA dimension (default: min(30, d, smallest training fold - 1)).
    #[arg(long)]
    pub pca_dim: Option<String>,
    /// Choose the PCA dimension per fold by explained variance instead.
    #[arg(long)]
    pub explained_var: Option<String>,
    #[arg(long)]
    pub hidden_binary: Option<String>,
    #[arg(long)]
    pub hidden_multi: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// Mini-batch size, 0 for full batch.
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    /// Uniform init half-width (default 1/sqrt(fan_in)).
    #[arg(long)]
    pub init_scale: Option<String>,
    /// `train_and_test` or `test_only`.
    #[arg(long)]
    pub noise_scope: Option<String>,
    /// `pca` (standardized PCA coordinates) or `pixel` (raw image vectors).
    #[arg(long)]
    pub noise_space: Option<String>,
    /// Keep raw PCA coordinates instead of unit-variance ones.
    #[arg(long)]
    pub no_standardize: bool,
    /// Sum signs of the pairwise outputs instead of raw outputs.
    #[arg(long)]
    pub hard_vote: bool,
    /// Fit PCA once on all samples instead of per training fold.
    #[arg(long)]
    pub pca_global: bool,
    /// Scale one noise draw per fold by each alpha.
    #[arg(long)]
    pub nested_noise: bool,
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    /// Aggregate CSV written by `run`.
    pub input: PathBuf,
    /// Output directory (default: the input's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Noise level for the noisy point cloud.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value = "scatter")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long)]
    pub explained_var: Option<f64>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long, default_value = "pca_model.txt")]
    pub out: PathBuf,
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Orl(PathBuf),
    Manifest(PathBuf),
    Synthetic(SyntheticPreset),
}

impl DataSource {
    fn describe(&self) -> (&'static str, String) {
        match self {
            DataSource::Orl(p) => ("data", p.display().to_string()),
            DataSource::Manifest(p) => ("manifest", p.display().to_string()),
            DataSource::Synthetic(s) => ("synthetic", s.name().to_string()),
        }
    }

    pub fn load(&self, downsample: usize, seed: u64) -> Result<LabeledDataset, DatasetError> {
        match self {
            DataSource::Orl(p) => load_orl_dataset(p, downsample),
            DataSource::Manifest(p) => load_manifest(p, downsample),
            DataSource::Synthetic(s) => Ok(s.generate(rng::derive_seed(seed, &[rng::TAG_SYNTH]))),
        }
    }
}

/// Fully resolved settings of a `run`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub downsample: usize,
    pub systems: Vec<SystemKind>,
    pub alphas: Vec<f64>,
    pub folds: usize,
    /// `None` picks `min(30, d, smallest training fold - 1)` once data is loaded.
    pub pca_dim: Option<PcaDim>,
    pub hidden_binary: usize,
    pub hidden_multi: usize,
    pub train: TrainConfig,
    pub noise_scope: NoiseScope,
    pub noise_space: NoiseSpace,
    pub standardize: bool,
    pub hard_vote: bool,
    pub pca_per_fold: bool,
    pub nested_noise: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

pub const DEFAULT_PCA_DIM: usize = 30;
pub const DEFAULT_HIDDEN_BINARY: usize = 8;
pub const DEFAULT_HIDDEN_MULTI: usize = 32;

/// Parses `key=value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

const RUN_KEYS: &[&str] = &[
    "data", "manifest", "synthetic", "downsample", "systems", "alphas", "folds", "pca-dim", "explained-var",
    "hidden-binary", "hidden-multi", "lr", "epochs", "batch", "l2", "init-scale", "noise-scope", "noise-space", "no-standardize",
    "hard-vote", "pca-global", "nested-noise", "seed", "threads", "out",
];

impl RunArgs {
    /// Explicitly given flags as config entries.
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let s = &self.source;
        let opts = [
            ("data", &s.data),
            ("manifest", &s.manifest),
            ("synthetic", &s.synthetic),
            ("downsample", &s.downsample),
            ("systems", &self.systems),
            ("alphas", &self.alphas),
            ("folds", &self.folds),
            ("pca-dim", &self.pca_dim),
            ("explained-var", &self.explained_var),
            ("hidden-binary", &self.hidden_binary),
            ("hidden-multi", &self.hidden_multi),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("l2", &self.l2),
            ("init-scale", &self.init_scale),
            ("noise-scope", &self.noise_scope),
            ("noise-space", &self.noise_space),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("out", &self.out),
        ];
        for (k, v) in opts {
            if let Some(v) = v {
                m.insert(k.to_string(), v.clone());
            }
        }
        let flags = [
            ("no-standardize", self.no_standardize),
            ("hard-vote", self.hard_vote),
            ("pca-global", self.pca_global),
            ("nested-noise", self.nested_noise),
        ];
        for (k, on) in flags {
            if on {
                m.insert(k.to_string(), "true".into());
            }
        }
        m
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

pub fn parse_alphas(v: &str) -> Result<Vec<f64>, CliError> {
    let alphas: Vec<f64> = v.split(',').map(|a| parse_num::<f64>("alphas", a)).collect::<Result<_, _>>()?;
    if alphas.is_empty() {
        return Err(CliError::Config("alphas: empty list".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(CliError::Config(format!("alphas: noise level must be non-negative, got {a}")));
    }
    Ok(alphas)
}

fn parse_systems(v: &str) -> Result<Vec<SystemKind>, CliError> {
    let mut out = Vec::new();
    for name in v.split(',').map(str::trim) {
        let kind = match name {
            "pairwise" | "P" => SystemKind::Pairwise,
            "multiclass" | "M" => SystemKind::Multiclass,
            other => return Err(CliError::Config(format!("systems: unknown system `{other}`"))),
        };
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("systems: empty list".into()));
    }
    Ok(out)
}

fn resolve_source(map: &BTreeMap<String, String>) -> Result<DataSource, CliError> {
    let given: Vec<&str> = ["data", "manifest", "synthetic"].into_iter().filter(|k| map.contains_key(*k)).collect();
    match given.as_slice() {
        [] => Err(CliError::Config("one of --data, --manifest or --synthetic is required".into())),
        [one] => {
            let v = &map[*one];
            Ok(match *one {
                "data" => DataSource::Orl(PathBuf::from(v)),
                "manifest" => DataSource::Manifest(PathBuf::from(v)),
                _ => DataSource::Synthetic(
                    SyntheticPreset::parse(v).ok_or_else(|| CliError::Config(format!("synthetic: unknown preset `{v}`")))?,
                ),
            })
        }
        many => Err(CliError::Config(format!("data sources are mutually exclusive, got {}", many.join(" and ")))),
    }
}

impl RunConfig {
    /// Defaults, then the config file, then flags. Performs all validation
    /// that does not need the data.
    pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
        let mut map = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(k) = map.keys().find(|k| !RUN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown config key `{k}`")));
        }
        map.extend(args.to_map());
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunConfig, CliError> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let defaults = TrainConfig::default();
        let flag = |k: &str| get(k).map_or(Ok(false), |v| parse_bool(k, v));

        let pca_dim = match (get("pca-dim"), get("explained-var")) {
            (Some(_), Some(_)) => return Err(CliError::Config("pca-dim and explained-var are mutually exclusive".into())),
            (Some(v), None) => {
                let m: usize = parse_num("pca-dim", v)?;
                if m == 0 {
                    return Err(CliError::Config("pca-dim must be positive".into()));
                }
                Some(PcaDim::Fixed(m))
            }
            (None, Some(v)) => {
                let t: f64 = parse_num("explained-var", v)?;
                if !(t > 0.0 && t <= 1.0) {
                    return Err(CliError::Config(format!("explained-var must be in (0, 1], got {t}")));
                }
                Some(PcaDim::Explained(t))
            }
            (None, None) => None,
        };
        let positive = |k: &str, default: usize| -> Result<usize, CliError> {
            let v = get(k).map_or(Ok(default), |v| parse_num(k, v))?;
            if v == 0 {
                return Err(CliError::Config(format!("{k} must be positive")));
            }
            Ok(v)
        };
        let train = TrainConfig {
            learning_rate: get("lr").map_or(Ok(defaults.learning_rate), |v| parse_num("lr", v))?,
            epochs: positive("epochs", defaults.epochs)?,
            batch_size: get("batch").map_or(Ok(defaults.batch_size), |v| parse_num("batch", v))?,
            weight_init_scale: get("init-scale").map(|v| parse_num("init-scale", v)).transpose()?,
            seed: 0,
            l2: get("l2").map_or(Ok(defaults.l2), |v| parse_num("l2", v))?,
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let noise_scope = match get("noise-scope") {
            None => NoiseScope::default(),
            Some(v) => NoiseScope::parse(v)
                .ok_or_else(|| CliError::Config(format!("noise-scope: expected train_and_test or test_only, got `{v}`")))?,
        };
        let noise_space = match get("noise-space") {
            None => NoiseSpace::default(),
            Some(v) => NoiseSpace::parse(v)
                .ok_or_else(|| CliError::Config(format!("noise-space: expected pca or pixel, got `{v}`")))?,
        };
        let folds = get("folds").map_or(Ok(5), |v| parse_num("folds", v))?;
        if folds < 2 {
            return Err(CliError::Config(format!("folds must be at least 2, got {folds}")));
        }
        let threads = get("threads").map(|v| parse_num::<usize>("threads", v)).transpose()?;
        if threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        let cfg = RunConfig {
            source: resolve_source(map)?,
            downsample: positive("downsample", 1)?,
            systems: parse_systems(get("systems").unwrap_or("pairwise,multiclass"))?,
            alphas: parse_alphas(get("alphas").unwrap_or("0.0,0.1,0.3,0.5,0.7,0.9,1.1,1.3"))?,
            folds,
            pca_dim,
            hidden_binary: positive("hidden-binary", DEFAULT_HIDDEN_BINARY)?,
            hidden_multi: positive("hidden-multi", DEFAULT_HIDDEN_MULTI)?,
            train,
            noise_scope,
            noise_space,
            standardize: !flag("no-standardize")?,
            hard_vote: flag("hard-vote")?,
            pca_per_fold: !flag("pca-global")?,
            nested_noise: flag("nested-noise")?,
            seed: get("seed").map_or(Ok(1), |v| parse_num("seed", v))?,
            threads,
            out: PathBuf::from(get("out").unwrap_or("results")),
        };
        cfg.experiment(PcaDim::Fixed(1)).validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self, pca_dim: PcaDim) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.folds,
            pca_dim,
            standardize: self.standardize,
            pca_per_fold: self.pca_per_fold,
            alphas: self.alphas.clone(),
            noise_scope: self.noise_scope,
            noise_space: self.noise_space,
            nested_noise: self.nested_noise,
            seed: self.seed,
        }
    }

    /// Resolved settings as `key=value` lines, in the config-file syntax.
    pub fn to_text(&self, pca_dim: Option<PcaDim>) -> String {
        let (src_key, src_val) = self.source.describe();
        let mut lines = vec![
            format!("{src_key}={src_val}"),
            format!("downsample={}", self.downsample),
            format!("systems={}", self.systems.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")),
            format!("alphas={}", self.alphas.iter().map(|a| format_alpha(*a)).collect::<Vec<_>>().join(",")),
            format!("folds={}", self.folds),
        ];
        match pca_dim.or(self.pca_dim) {
            Some(PcaDim::Fixed(m)) => lines.push(format!("pca-dim={m}")),
            Some(PcaDim::Explained(t)) => lines.push(format!("explained-var={t}")),
            None => lines.push("pca-dim=auto".into()),
        }
        lines.extend([
            format!("hidden-binary={}", self.hidden_binary),
            format!("hidden-multi={}", self.hidden_multi),
            format!("lr={}", self.train.learning_rate),
            format!("epochs={}", self.train.epochs),
            format!("batch={}", self.train.batch_size),
            format!("l2={}", self.train.l2),
        ]);
        if let Some(s) = self.train.weight_init_scale {
            lines.push(format!("init-scale={s}"));
        }
        lines.extend([
            format!("noise-scope={}", self.noise_scope.as_str()),
            format!("noise-space={}", self.noise_space.as_str()),
            format!("no-standardize={}", !self.standardize),
            format!("hard-vote={}", self.hard_vote),
            format!("pca-global={}", !self.pca_per_fold),
            format!("nested-noise={}", self.nested_noise),
            format!("seed={}", self.seed),
            format!("out={}", self.out.display()),
        ]);
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

/// PCA dimension used when none is configured.
pub fn auto_pca_dim(data: &LabeledDataset, folds: usize, per_fold: bool) -> usize {
    let smallest_train = if per_fold {
        // Stratified folds: each class loses at most ceil(count / k) samples to the test fold.
        let test_max: usize = data.class_counts().iter().map(|&c| c.div_ceil(folds)).sum();
        data.len().saturating_sub(test_max)
    } else {
        data.len()
    };
    DEFAULT_PCA_DIM.min(data.dim()).min(smallest_train.saturating_sub(1)).max(1)
}

// ---------------------------------------------------------------------------
// commands

/// Files written by `run`.
pub const FOLDS_FILE: &str = "folds.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const METADATA_FILE: &str = "metadata.txt";
pub const FAILURE_FILE: &str = "FAILED.txt";

pub fn run_with_config(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let started = Instant::now();
    let data = cfg.source.load(cfg.downsample, cfg.seed)?;
    if data.num_classes() < 2 {
        return Err(CliError::Data(format!("need at least 2 classes, found {}", data.num_classes())));
    }
    let pca_dim = cfg.pca_dim.unwrap_or_else(|| PcaDim::Fixed(auto_pca_dim(&data, cfg.folds, cfg.pca_per_fold)));
    let exp = cfg.experiment(pca_dim);

    let pairwise = PairwiseSystem { hidden: cfg.hidden_binary, train: cfg.train, hard_vote: cfg.hard_vote };
    let multiclass = MulticlassSystem { hidden: cfg.hidden_multi, train: cfg.train };
    let systems: Vec<&dyn System> = cfg
        .systems
        .iter()
        .map(|k| match k {
            SystemKind::Pairwise => &pairwise as &dyn System,
            SystemKind::Multiclass => &multiclass as &dyn System,
        })
        .collect();

    let report = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?
            .install(|| run_experiment(&data, &systems, &exp))?,
        None => run_experiment(&data, &systems, &exp)?,
    };

    create_dir(&cfg.out)?;
    write_file(&cfg.out.join(FOLDS_FILE), &report::folds_csv(&report))?;
    write_file(&cfg.out.join(AGGREGATE_FILE), &report::aggregate_csv(&report))?;

    let resolved = cfg.to_text(Some(pca_dim));
    let mut summary = report::summary_table(&report);
    summary.push_str("\n# configuration\n");
    summary.push_str(&resolved);
    write_file(&cfg.out.join(SUMMARY_FILE), &summary)?;

    let mut meta = String::from("# resolved configuration\n");
    meta.push_str(&resolved);
    meta.push_str("\n# run\n");
    meta.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    meta.push_str(&format!(
        "dataset=classes:{},samples:{},dim:{}\n",
        data.num_classes(),
        data.len(),
        data.dim()
    ));
    for (k, v) in &report.metadata {
        meta.push_str(&format!("{k}={v}\n"));
    }
    meta.push_str(&format!("status={}\n", if report.is_complete() { "complete" } else { "FAILED" }));
    meta.push_str(&format!("wall_time_s={:.3}\n", started.elapsed().as_secs_f64()));
    write_file(&cfg.out.join(METADATA_FILE), &meta)?;

    if let Some(first) = report.failures.first() {
        let mut text = String::from("FAILED\n");
        for f in &report.failures {
            text.push_str(&format!("system={} alpha={} fold={}: {}\n", f.system.name(), format_alpha(f.alpha), f.fold, f.message));
        }
        write_file(&cfg.out.join(FAILURE_FILE), &text)?;
        let msg = format!("system {} alpha {} fold {}: {}", first.system.name(), format_alpha(first.alpha), first.fold, first.message);
        return Err(if first.divergence { CliError::Diverged(msg) } else { CliError::Data(msg) });
    }
    Ok(report)
}

pub fn cmd_run(args: &RunArgs) -> Result<EvalReport, CliError> {
    let cfg = RunConfig::resolve(args)?;
    let report = run_with_config(&cfg)?;
    print!("{}", report::summary_table(&report));
    Ok(report)
}

/// Writes `series_<code>.dat` per system into `out_dir`; returns the paths written.
pub fn cmd_plotdata(input: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(input).map_err(|source| CliError::Io { path: input.to_path_buf(), source })?;
    let rows = report::parse_aggregate_csv(&text)?;
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let out_dir = if out_dir.as_os_str().is_empty() { PathBuf::from(".") } else { out_dir };
    create_dir(&out_dir)?;
    let systems: Vec<SystemKind> = if rows.is_empty() {
        log::warn!("{}: no data rows, writing empty series", input.display());
        vec![SystemKind::Pairwise, SystemKind::Multiclass]
    } else {
        let mut s: Vec<SystemKind> = rows.iter().map(|r| r.system).collect();
        s.dedup();
        s.sort();
        s.dedup();
        s
    };
    let mut written = Vec::new();
    for s in systems {
        let path = out_dir.join(format!("series_{}.dat", s.code()));
        write_file(&path, &report::series(&rows, s))?;
        written.push(path);
    }
    Ok(written)
}

fn source_from_args(src: &SourceArgs) -> Result<(DataSource, usize), CliError> {
    let mut map = BTreeMap::new();
    for (k, v) in [("data", &src.data), ("manifest", &src.manifest), ("synthetic", &src.synthetic)] {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    let factor = src.downsample.as_deref().map_or(Ok(1), |v| parse_num::<usize>("downsample", v))?;
    if factor == 0 {
        return Err(CliError::Config("downsample must be positive".into()));
    }
    Ok((resolve_source(&map)?, factor))
}

fn points_file(points: &[&Vec<f64>]) -> String {
    let mut s = String::from("# p1 p2\n");
    for p in points {
        s.push_str(&format!("{:.6} {:.6}\n", p[0], p[1]));
    }
    s
}

/// Projects onto the first two components (PCA fit on all samples) and writes
/// `clean/class_KK.dat` and `noisy/class_KK.dat` under `out`.
pub fn cmd_scatter(args: &ScatterArgs) -> Result<Vec<PathBuf>, CliError> {
    if !(args.alpha >= 0.0 && args.alpha.is_finite()) {
        return Err(CliError::Config(format!("alpha must be non-negative, got {}", args.alpha)));
    }
    let (source, factor) = source_from_args(&args.source)?;
    let data = source.load(factor, args.seed)?;
    let opts = PcaOptions { standardize: !args.no_standardize, ..PcaOptions::default() };
    let model = fit_pca(data.vectors(), 2, opts).map_err(|e| CliError::Data(format!("PCA: {e}")))?;
    let clean = model.project_all(data.vectors()).map_err(|e| CliError::Data(e.to_string()))?;
    let noise_seed = rng::derive_seed(args.seed, &[rng::TAG_NOISE, args.alpha.to_bits()]);
    let noisy = add_noise(&clean, args.alpha, noise_seed);

    let mut written = Vec::new();
    for (name, pts) in [("clean", &clean), ("noisy", &noisy)] {
        let dir = args.out.join(name);
        create_dir(&dir)?;
        for c in 0..data.num_classes() {
            let members: Vec<&Vec<f64>> = pts.iter().zip(data.labels()).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let path = dir.join(format!("class_{:02}.dat", c + 1));
            write_file(&path, &points_file(&members))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_prep(args: &PrepArgs) -> Result<(), CliError> {
    let (source, factor) = source_from_args(&args.source)?;
    let data = source.load(factor, args.seed)?;
    let opts = PcaOptions { standardize: !args.no_standardize, ..PcaOptions::default() };
    let result: Result<_, PcaError> = match (args.pca_dim, args.explained_var) {
        (Some(_), Some(_)) => return Err(CliError::Config("pca-dim and explained-var are mutually exclusive".into())),
        (Some(m), None) => fit_pca(data.vectors(), m, opts),
        (None, Some(t)) => fit_pca_explained(data.vectors(), t, opts),
        (None, None) => {
            let m = DEFAULT_PCA_DIM.min(data.dim()).min(data.len().saturating_sub(1)).max(1);
            fit_pca(data.vectors(), m, opts)
        }
    };
    let model = result.map_err(|e| match e {
        PcaError::InvalidDimension { .. } | PcaError::BadTarget(_) => CliError::Config(e.to_string()),
        e => CliError::Data(e.to_string()),
    })?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(&args.out, &model.to_text())?;
    println!(
        "wrote {} ({} components, {:.1}% variance)",
        args.out.display(),
        model.num_components(),
        100.0 * model.explained_variance(model.num_components()).unwrap_or(0.0)
    );
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Plotdata(a) => cmd_plotdata(&a.input, a.out.as_deref()).map(|_| ()),
        Command::Scatter(a) => cmd_scatter(a).map(|_| ()),
        Command::Prep(a) => cmd_prep(a),
    }
}
