//! Noise-robustness protocol: stratified k-fold cross-validation over a grid of
//! Gaussian noise levels, comparing classifier systems on identical noisy data.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DatasetError, LabeledDataset};
use crate::decision::Decision;
use crate::mlp::{NetError, TrainConfig};
use crate::multiclass::{train_multiclass, MulticlassError};
use crate::pairwise::{train_pairwise, PairwiseError};
use crate::pca::{fit_pca, fit_pca_explained, PcaError, PcaModel, PcaOptions};
use crate::rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("class {class} has {count} samples, fewer than {k} folds")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("PCA on fold {fold}: {source}")]
    Pca { fold: usize, source: PcaError },
    #[error(transparent)]
    Pairwise(#[from] PairwiseError),
    #[error(transparent)]
    Multiclass(#[from] MulticlassError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl EvalError {
    /// True when the root cause is a training run producing NaN/Inf.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            EvalError::Net(NetError::DivergedToNonFinite { .. })
                | EvalError::Pairwise(PairwiseError::Net { source: NetError::DivergedToNonFinite { .. }, .. })
                | EvalError::Multiclass(MulticlassError::Net(NetError::DivergedToNonFinite { .. }))
        )
    }
}

// ---------------------------------------------------------------------------
// noise

/// Where noise is injected: on the PCA coordinates fed to the classifiers, or
/// on the raw image vectors before projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseSpace {
    #[default]
    Pca,
    Pixel,
}

impl NoiseSpace {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pca" => Some(NoiseSpace::Pca),
            "pixel" => Some(NoiseSpace::Pixel),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseSpace::Pca => "pca",
            NoiseSpace::Pixel => "pixel",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseScope {
    #[default]
    TrainAndTest,
    TestOnly,
}

impl NoiseScope {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train_and_test" => Some(NoiseScope::TrainAndTest),
            "test_only" => Some(NoiseScope::TestOnly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseScope::TrainAndTest => "train_and_test",
            NoiseScope::TestOnly => "test_only",
        }
    }
}

/// Returns a copy of `features` with independent `N(0, alpha^2)` noise on
/// every coordinate, drawn from the stream keyed by `seed`.
pub fn add_noise(features: &[Vec<f64>], alpha: f64, seed: u64) -> Vec<Vec<f64>> {
    assert!(alpha >= 0.0 && alpha.is_finite(), "noise level must be a non-negative real, got {alpha}");
    if alpha == 0.0 {
        return features.to_vec();
    }
    let mut rng = rng::stream(seed, &[rng::TAG_NOISE]);
    features
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + alpha * z
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// folds

/// Fold index (zero-based) for every sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// `(train indices, test indices)` for `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }
}

/// Shuffles each class with a seeded RNG, then deals its samples round-robin
/// across folds. The dealing position carries over between classes so total
/// fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[usize], num_classes: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::Config(format!("fold count must be at least 2, got {k}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(EvalError::ClassTooSmall { class: class + 1, count: members.len(), k });
        }
        let mut rng = rng::stream(seed, &[rng::TAG_FOLDS, class as u64]);
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignments })
}

// ---------------------------------------------------------------------------
// statistics

/// Mean and twice the sample (n - 1) standard deviation.
pub fn mean_and_two_sigma(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], 0.0));
    }
    let rough = values.iter().sum::<f64>() / n;
    // second pass removes most of the rounding left in the first
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, 2.0 * var.sqrt()))
}

// ---------------------------------------------------------------------------
// systems

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    Pairwise,
    Multiclass,
}

impl SystemKind {
    /// One-letter code used in reports.
    pub fn code(self) -> &'static str {
        match self {
            SystemKind::Pairwise => "P",
            SystemKind::Multiclass => "M",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "P" => Some(SystemKind::Pairwise),
            "M" => Some(SystemKind::Multiclass),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Pairwise => "pairwise",
            SystemKind::Multiclass => "multiclass",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A trained classifier, applied to a whole test partition.
pub trait Predictor: Send + Sync {
    fn predict(&self, test: &LabeledDataset) -> Result<Vec<Decision>, EvalError>;
}

/// A trainable classification system.
pub trait System: Sync {
    fn kind(&self) -> SystemKind;
    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<Box<dyn Predictor>, EvalError>;
    /// Settings recorded in run metadata.
    fn describe(&self) -> Vec<(String, String)> {
        Vec::new()
    }
}

fn describe_train(prefix: &str, hidden: usize, cfg: &TrainConfig) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}.hidden"), hidden.to_string()),
        (format!("{prefix}.lr"), cfg.learning_rate.to_string()),
        (format!("{prefix}.epochs"), cfg.epochs.to_string()),
        (format!("{prefix}.batch"), cfg.batch_size.to_string()),
        (format!("{prefix}.l2"), cfg.l2.to_string()),
        (
            format!("{prefix}.init_scale"),
            cfg.weight_init_scale.map_or_else(|| "1/sqrt(fan_in)".to_string(), |s| s.to_string()),
        ),
    ]
}

#[derive(Clone, Debug)]
pub struct PairwiseSystem {
    pub hidden: usize,
    pub train: TrainConfig,
    pub hard_vote: bool,
}

#[derive(Clone, Debug)]
pub struct MulticlassSystem {
    pub hidden: usize,
    pub train: TrainConfig,
}

struct PairwisePredictor(crate::pairwise::PairwiseEnsemble);

impl Predictor for PairwisePredictor {
    fn predict(&self, test: &LabeledDataset) -> Result<Vec<Decision>, EvalError> {
        test.vectors().iter().map(|x| Ok(self.0.classify(x)?)).collect()
    }
}

struct MulticlassPredictor(crate::multiclass::MulticlassNet);

impl Predictor for MulticlassPredictor {
    fn predict(&self, test: &LabeledDataset) -> Result<Vec<Decision>, EvalError> {
        test.vectors().iter().map(|x| Ok(self.0.classify(x)?)).collect()
    }
}

impl System for PairwiseSystem {
    fn kind(&self) -> SystemKind {
        SystemKind::Pairwise
    }

    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<Box<dyn Predictor>, EvalError> {
        let ens = train_pairwise(train, self.hidden, &self.train.with_seed(seed))?;
        Ok(Box::new(PairwisePredictor(ens.with_hard_vote(self.hard_vote))))
    }

    fn describe(&self) -> Vec<(String, String)> {
        let mut d = describe_train("pairwise", self.hidden, &self.train);
        d.push(("pairwise.hard_vote".into(), self.hard_vote.to_string()));
        d
    }
}

impl System for MulticlassSystem {
    fn kind(&self) -> SystemKind {
        SystemKind::Multiclass
    }

    fn fit(&self, train: &LabeledDataset, seed: u64) -> Result<Box<dyn Predictor>, EvalError> {
        let net = train_multiclass(train, self.hidden, &self.train.with_seed(seed))?;
        Ok(Box::new(MulticlassPredictor(net)))
    }

    fn describe(&self) -> Vec<(String, String)> {
        describe_train("multiclass", self.hidden, &self.train)
    }
}

// ---------------------------------------------------------------------------
// experiment

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PcaDim {
    Fixed(usize),
    /// Smallest dimension reaching this explained-variance fraction.
    Explained(f64),
}

impl fmt::Display for PcaDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaDim::Fixed(m) => write!(f, "{m}"),
            PcaDim::Explained(t) => write!(f, "explained>={t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub pca_dim: PcaDim,
    pub standardize: bool,
    /// Fit PCA on each training partition (default) or once on all samples.
    pub pca_per_fold: bool,
    pub alphas: Vec<f64>,
    pub noise_scope: NoiseScope,
    pub noise_space: NoiseSpace,
    /// Reuse one standard-normal draw per fold, scaled by each alpha.
    pub nested_noise: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 5,
            pca_dim: PcaDim::Fixed(30),
            standardize: true,
            pca_per_fold: true,
            alphas: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3],
            noise_scope: NoiseScope::TrainAndTest,
            noise_space: NoiseSpace::Pca,
            nested_noise: false,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.folds < 2 {
            return Err(EvalError::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.alphas.is_empty() {
            return Err(EvalError::Config("alpha grid is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(EvalError::Config(format!("alpha must be a non-negative real, got {a}")));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if self.alphas[..i].contains(a) {
                return Err(EvalError::Config(format!("alpha {a} listed twice")));
            }
        }
        match self.pca_dim {
            PcaDim::Fixed(0) => return Err(EvalError::Config("PCA dimension must be positive".into())),
            PcaDim::Explained(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(EvalError::Config(format!("explained variance target must be in (0, 1], got {t}")))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let alphas: Vec<String> = self.alphas.iter().map(|a| format_alpha(*a)).collect();
        vec![
            ("folds".into(), self.folds.to_string()),
            ("pca_dim".into(), self.pca_dim.to_string()),
            ("standardize".into(), self.standardize.to_string()),
            ("pca_per_fold".into(), self.pca_per_fold.to_string()),
            ("alphas".into(), alphas.join(",")),
            ("noise_scope".into(), self.noise_scope.as_str().into()),
            ("noise_space".into(), self.noise_space.as_str().into()),
            ("nested_noise".into(), self.nested_noise.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Shortest decimal form with at least one fractional digit (`0.0`, `0.5`, `0.05`).
pub fn format_alpha(alpha: f64) -> String {
    let s = alpha.to_string();
    if s.contains('.') || s.contains('e') || !alpha.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

/// Test accuracy of one system on one (fold, alpha) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldRecord {
    pub system: SystemKind,
    pub alpha: f64,
    /// One-based.
    pub fold: usize,
    pub accuracy: f64,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub system: SystemKind,
    pub alpha: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub two_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub system: SystemKind,
    pub alpha: f64,
    pub fold: usize,
    pub message: String,
    pub divergence: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Ordered by system, then alpha in grid order.
    pub rows: Vec<ReportRow>,
    /// Ordered by system, alpha, fold.
    pub folds: Vec<FoldRecord>,
    pub failures: Vec<CellFailure>,
    /// PCA dimension used for each fold.
    pub pca_dims: Vec<usize>,
    pub metadata: Vec<(String, String)>,
}

impl EvalReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn row(&self, system: SystemKind, alpha: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.system == system && r.alpha == alpha)
    }

    pub fn ties(&self, system: SystemKind) -> usize {
        self.folds.iter().filter(|f| f.system == system).map(|f| f.ties).sum()
    }
}

struct FoldData {
    train: LabeledDataset,
    test: LabeledDataset,
    /// Unprojected partitions and the fold's model, kept for pixel-space noise.
    raw: Option<(LabeledDataset, LabeledDataset, PcaModel)>,
    pca_dim: usize,
}

fn fit_model(x: &[Vec<f64>], dim: PcaDim, opts: PcaOptions) -> Result<PcaModel, PcaError> {
    match dim {
        PcaDim::Fixed(m) => fit_pca(x, m, opts),
        PcaDim::Explained(t) => fit_pca_explained(x, t, opts),
    }
}

fn project(model: &PcaModel, part: &LabeledDataset) -> Result<LabeledDataset, EvalError> {
    let feats = model.project_all(part.vectors()).map_err(|source| EvalError::Pca { fold: 0, source })?;
    Ok(part.with_vectors(feats)?)
}

fn noise_seed(cfg: &ExperimentConfig, fold: usize, alpha: f64, partition: u64) -> u64 {
    if cfg.nested_noise {
        rng::derive_seed(cfg.seed, &[rng::TAG_NOISE, fold as u64, partition])
    } else {
        rng::derive_seed(cfg.seed, &[rng::TAG_NOISE, fold as u64, alpha.to_bits(), partition])
    }
}

/// Noisy (train, test) features for one cell, shared by all systems.
fn noisy_cell(cfg: &ExperimentConfig, fd: &FoldData, fold: usize, alpha: f64) -> Result<(LabeledDataset, LabeledDataset), EvalError> {
    let corrupt = |part: &LabeledDataset, partition: u64| -> Vec<Vec<f64>> {
        if partition == 0 && cfg.noise_scope == NoiseScope::TestOnly {
            part.vectors().to_vec()
        } else {
            add_noise(part.vectors(), alpha, noise_seed(cfg, fold, alpha, partition))
        }
    };
    match &fd.raw {
        None => Ok((fd.train.with_vectors(corrupt(&fd.train, 0))?, fd.test.with_vectors(corrupt(&fd.test, 1))?)),
        Some((train_raw, test_raw, model)) => {
            let pca = |source| EvalError::Pca { fold: fold + 1, source };
            let train = model.project_all(&corrupt(train_raw, 0)).map_err(pca)?;
            let test = model.project_all(&corrupt(test_raw, 1)).map_err(pca)?;
            Ok((train_raw.with_vectors(train)?, test_raw.with_vectors(test)?))
        }
    }
}

/// Runs every system on every (fold, alpha) cell.
///
/// For each fold, PCA is fit on the training partition (or once on all data)
/// and both partitions are projected. For each alpha, noise is drawn once per
/// cell and shared by all systems, so comparisons are paired. With
/// `NoiseSpace::Pixel` the noise goes on the raw vectors, which are then
/// projected with the fold's (clean) PCA model. Cells run in
/// parallel; each derives its randomness from `(seed, fold, alpha)`, so the
/// report does not depend on the thread count.
///
/// A failing cell does not abort the run: completed cells are kept and the
/// failure is listed in `EvalReport::failures`. Errors that prevent any
/// cell from running (bad config, folds, PCA) are returned directly.
pub fn run_experiment(data: &LabeledDataset, systems: &[&dyn System], cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if systems.is_empty() {
        return Err(EvalError::Config("no systems selected".into()));
    }
    let plan = stratified_kfold(data.labels(), data.num_classes(), cfg.folds, cfg.seed)?;
    let opts = PcaOptions { standardize: cfg.standardize, ..PcaOptions::default() };

    let global = if cfg.pca_per_fold {
        None
    } else {
        Some(fit_model(data.vectors(), cfg.pca_dim, opts).map_err(|source| EvalError::Pca { fold: 0, source })?)
    };

    let fold_data: Vec<FoldData> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, test_idx) = plan.split(fold);
            let train_raw = data.subset(&train_idx);
            let test_raw = data.subset(&test_idx);
            let owned;
            let model = match &global {
                Some(m) => m,
                None => {
                    owned = fit_model(train_raw.vectors(), cfg.pca_dim, opts)
                        .map_err(|source| EvalError::Pca { fold: fold + 1, source })?;
                    &owned
                }
            };
            let relabel = |e: EvalError| match e {
                EvalError::Pca { source, .. } => EvalError::Pca { fold: fold + 1, source },
                other => other,
            };
            let train = project(model, &train_raw).map_err(relabel)?;
            let test = project(model, &test_raw).map_err(relabel)?;
            let pca_dim = model.num_components();
            let raw = match cfg.noise_space {
                NoiseSpace::Pca => None,
                NoiseSpace::Pixel => Some((train_raw, test_raw, model.clone())),
            };
            Ok(FoldData { train, test, raw, pca_dim })
        })
        .collect::<Result<_, EvalError>>()?;

    let cells: Vec<(usize, usize)> =
        (0..cfg.folds).flat_map(|f| (0..cfg.alphas.len()).map(move |a| (f, a))).collect();

    type CellOutcome = Vec<Result<FoldRecord, CellFailure>>;
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(fold, ai)| {
            let alpha = cfg.alphas[ai];
            let fd = &fold_data[fold];
            let (train, test) = match noisy_cell(cfg, fd, fold, alpha) {
                Ok(parts) => parts,
                Err(e) => {
                    let message = e.to_string();
                    return systems
                        .iter()
                        .map(|sys| {
                            Err(CellFailure { system: sys.kind(), alpha, fold: fold + 1, message: message.clone(), divergence: false })
                        })
                        .collect();
                }
            };
            let train_seed = rng::derive_seed(cfg.seed, &[rng::TAG_CELL, fold as u64, alpha.to_bits()]);

            systems
                .iter()
                .map(|sys| {
                    let fail = |e: EvalError| CellFailure {
                        system: sys.kind(),
                        alpha,
                        fold: fold + 1,
                        divergence: e.is_divergence(),
                        message: e.to_string(),
                    };
                    let predictor = sys.fit(&train, train_seed).map_err(fail)?;
                    let decisions = predictor.predict(&test).map_err(fail)?;
                    let correct = decisions.iter().zip(test.labels()).filter(|(d, &l)| d.label == l).count();
                    Ok(FoldRecord {
                        system: sys.kind(),
                        alpha,
                        fold: fold + 1,
                        accuracy: correct as f64 / test.len() as f64,
                        ties: decisions.iter().filter(|d| d.tied).count(),
                    })
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }

    let mut folds = Vec::new();
    let mut rows = Vec::new();
    for sys in systems {
        for &alpha in &cfg.alphas {
            let mut cell: Vec<FoldRecord> = records
                .iter()
                .filter(|r| r.system == sys.kind() && r.alpha.to_bits() == alpha.to_bits())
                .cloned()
                .collect();
            cell.sort_by_key(|r| r.fold);
            if cell.len() == cfg.folds {
                let accs: Vec<f64> = cell.iter().map(|r| r.accuracy).collect();
                let (mean, two_sigma) = mean_and_two_sigma(&accs)?;
                rows.push(ReportRow { system: sys.kind(), alpha, fold_accuracies: accs, mean, two_sigma });
            }
            folds.extend(cell);
        }
    }
    failures.sort_by_key(|f| (f.system, f.fold));

    let mut metadata = cfg.describe();
    metadata.push((
        "systems".into(),
        systems.iter().map(|s| s.kind().name()).collect::<Vec<_>>().join(","),
    ));
    for sys in systems {
        metadata.extend(sys.describe());
    }
    let pca_dims: Vec<usize> = fold_data.iter().map(|f| f.pca_dim).collect();
    metadata.push((
        "pca_dims_per_fold".into(),
        pca_dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
    ));
    for sys in systems {
        let ties: usize = folds.iter().filter(|f| f.system == sys.kind()).map(|f| f.ties).sum();
        metadata.push((format!("{}.argmax_ties", sys.kind().name()), ties.to_string()));
    }

    Ok(EvalReport { rows, folds, failures, pca_dims, metadata })
}
