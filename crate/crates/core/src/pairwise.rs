//! One-vs-one ensemble: a binary network `f_{i/j}` for every class pair,
//! combined by fixed ±1 output weights into one score per class.
//!
//! Net `f_{i/j}` is trained to output +1 on class `i` and -1 on class `j`
//! (`i < j`). The score of class `c` adds every net where `c` is the first
//! class and subtracts every net where it is the second, so the scores always
//! sum to zero.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::checkpoint::{FormatError, TextReader, TextWriter};
use crate::dataset::LabeledDataset;
use crate::decision::{argmax, Decision};
use crate::mlp::{train, MlpParams, NetError, Network, TrainConfig};
use crate::rng;

#[derive(Debug, Error)]
pub enum PairwiseError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("expected {expected} binary nets, got {found}")]
    WrongNetCount { expected: usize, found: usize },
    #[error("net for pair {pair}: {source}")]
    Net { pair: ClassPair, source: NetError },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Zero-based class indices with `i < j`. Displayed one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassPair {
    pub i: usize,
    pub j: usize,
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.i + 1, self.j + 1)
    }
}

/// All `C(C-1)/2` pairs in lexicographic order.
pub fn enumerate_pairs(num_classes: usize) -> Result<Vec<ClassPair>, PairwiseError> {
    if num_classes < 2 {
        return Err(PairwiseError::TooFewClasses(num_classes));
    }
    Ok((0..num_classes).flat_map(|i| (i + 1..num_classes).map(move |j| ClassPair { i, j })).collect())
}

/// `C x P` output weights: +1 where the class is the pair's first member,
/// -1 where it is the second, 0 elsewhere.
pub fn combiner_weights(num_classes: usize) -> Result<Vec<Vec<i8>>, PairwiseError> {
    let pairs = enumerate_pairs(num_classes)?;
    Ok((0..num_classes)
        .map(|c| {
            pairs
                .iter()
                .map(|p| match c {
                    c if c == p.i => 1,
                    c if c == p.j => -1,
                    _ => 0,
                })
                .collect()
        })
        .collect())
}

/// Per-class scores `g_1 .. g_C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Applies a weight matrix to the binary outputs.
pub fn combine(weights: &[Vec<i8>], outputs: &[f64]) -> ScoreVector {
    ScoreVector(
        weights
            .iter()
            .map(|row| row.iter().zip(outputs).map(|(&w, &f)| f64::from(w) * f).sum())
            .collect(),
    )
}

#[derive(Clone, Debug)]
pub struct PairwiseEnsemble<N = MlpParams> {
    num_classes: usize,
    pairs: Vec<ClassPair>,
    nets: Vec<N>,
    weights: Vec<Vec<i8>>,
    hard_vote: bool,
}

impl<N: Network> PairwiseEnsemble<N> {
    /// `nets` must follow [`enumerate_pairs`] order.
    pub fn from_nets(num_classes: usize, nets: Vec<N>) -> Result<Self, PairwiseError> {
        let pairs = enumerate_pairs(num_classes)?;
        if nets.len() != pairs.len() {
            return Err(PairwiseError::WrongNetCount { expected: pairs.len(), found: nets.len() });
        }
        let weights = combiner_weights(num_classes)?;
        Ok(PairwiseEnsemble { num_classes, pairs, nets, weights, hard_vote: false })
    }

    /// Replace each net output by its sign before summing.
    pub fn with_hard_vote(mut self, hard_vote: bool) -> Self {
        self.hard_vote = hard_vote;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pairs(&self) -> &[ClassPair] {
        &self.pairs
    }

    pub fn nets(&self) -> &[N] {
        &self.nets
    }

    pub fn weights(&self) -> &[Vec<i8>] {
        &self.weights
    }

    /// Outputs of every binary net, in pair order.
    pub fn pair_outputs(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.nets
            .iter()
            .map(|net| {
                let f = net.forward(x)?[0];
                Ok(if self.hard_vote {
                    if f > 0.0 {
                        1.0
                    } else if f < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                } else {
                    f
                })
            })
            .collect()
    }

    pub fn score(&self, x: &[f64]) -> Result<ScoreVector, NetError> {
        Ok(combine(&self.weights, &self.pair_outputs(x)?))
    }

    pub fn classify(&self, x: &[f64]) -> Result<Decision, NetError> {
        Ok(argmax(&self.score(x)?.0))
    }
}

/// Trains one binary net per class pair, in parallel. The net for `(i, j)`
/// sees only samples of classes `i` (target +1) and `j` (target -1) and draws
/// its randomness from `(cfg.seed, i, j)`.
pub fn train_pairwise(train_set: &LabeledDataset, hidden_dim: usize, cfg: &TrainConfig) -> Result<PairwiseEnsemble, PairwiseError> {
    let c = train_set.num_classes();
    let pairs = enumerate_pairs(c)?;
    if let Some(missing) = train_set.first_missing_class() {
        return Err(PairwiseError::MissingClass(missing + 1));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (idx, &l) in train_set.labels().iter().enumerate() {
        by_class[l].push(idx);
    }
    let vectors = train_set.vectors();
    let nets = pairs
        .par_iter()
        .map(|&pair| {
            let members = by_class[pair.i].iter().chain(&by_class[pair.j]);
            let inputs: Vec<Vec<f64>> = members.clone().map(|&k| vectors[k].clone()).collect();
            let targets: Vec<Vec<f64>> = by_class[pair.i]
                .iter()
                .map(|_| vec![1.0])
                .chain(by_class[pair.j].iter().map(|_| vec![-1.0]))
                .collect();
            let seed = rng::derive_seed(cfg.seed, &[rng::TAG_PAIR, pair.i as u64, pair.j as u64]);
            let net_cfg = cfg.with_seed(seed);
            let init = MlpParams::init(train_set.dim(), hidden_dim, 1, seed, cfg.weight_init_scale);
            train(init, &inputs, &targets, &net_cfg)
                .map(|t| t.params)
                .map_err(|source| PairwiseError::Net { pair, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PairwiseEnsemble::from_nets(c, nets)
}

fn net_file_name(pair: ClassPair) -> String {
    format!("pair_{:03}_{:03}.mlp", pair.i + 1, pair.j + 1)
}

impl PairwiseEnsemble<MlpParams> {
    /// Writes `ensemble.txt` (class count, pair-to-file listing, weight matrix)
    /// plus one net file per pair into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PairwiseError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| PairwiseError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut w = TextWriter::new("PAIRNET-PAIRWISE", 1);
        w.scalar("classes", self.num_classes).scalar("hard_vote", self.hard_vote);
        for (pair, net) in self.pairs.iter().zip(&self.nets) {
            let name = net_file_name(*pair);
            let path = dir.join(&name);
            fs::write(&path, net.to_text()).map_err(io(&path))?;
            w.record("pair", &[(pair.i + 1).to_string(), (pair.j + 1).to_string(), name]);
        }
        for row in &self.weights {
            w.record("weights", row);
        }
        let manifest = dir.join("ensemble.txt");
        fs::write(&manifest, w.finish()).map_err(io(&manifest))
    }

    pub fn load(dir: &Path) -> Result<Self, PairwiseError> {
        let manifest = dir.join("ensemble.txt");
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| PairwiseError::Io { path: p.display().to_string(), source })
        };
        let text = read(&manifest)?;
        let (mut r, _) = TextReader::open(&text, "PAIRNET-PAIRWISE", 1)?;
        let c: usize = r.scalar("classes")?;
        let hard_vote: bool = r.scalar("hard_vote")?;
        let pairs = enumerate_pairs(c)?;
        let mut nets = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            let rec = r.record("pair")?;
            let expected = [(pair.i + 1).to_string(), (pair.j + 1).to_string()];
            if rec.len() != 3 || rec[0] != expected[0] || rec[1] != expected[1] {
                return Err(r.bad(format!("expected entry for pair {pair}")).into());
            }
            let net = MlpParams::from_text(&read(&dir.join(rec[2]))?).map_err(|source| PairwiseError::Net { pair: *pair, source })?;
            nets.push(net);
        }
        let expected = combiner_weights(c)?;
        for row in &expected {
            let stored: Vec<i8> = r.values("weights", row.len())?;
            if &stored != row {
                return Err(r.bad("weight matrix does not match the pairwise structure".into()).into());
            }
        }
        r.expect_end()?;
        Ok(PairwiseEnsemble::from_nets(c, nets)?.with_hard_vote(hard_vote))
    }
}
