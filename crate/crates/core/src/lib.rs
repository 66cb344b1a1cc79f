//! Pairwise (one-vs-one) and multiclass neural-network face recognition,
//! benchmarked for robustness to additive Gaussian noise in PCA feature space.
//!
//! Pipeline: [`dataset`] loads PGM faces or synthetic blobs, [`pca`] maps them
//! to standardized eigenface coordinates, [`pairwise`] and [`multiclass`]
//! train the two competing classifiers built from [`mlp`] networks, and
//! [`eval`] runs the cross-validated noise sweep.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod decision;
pub mod eval;
pub mod linalg;
pub mod mlp;
pub mod multiclass;
pub mod pairwise;
pub mod pca;
pub mod pgm;
pub mod report;
pub mod rng;

pub use dataset::{LabeledDataset, SyntheticPreset};
pub use decision::Decision;
pub use eval::{run_experiment, EvalReport, ExperimentConfig, NoiseScope, NoiseSpace, PcaDim, SystemKind};
pub use mlp::{MlpParams, Network, TrainConfig};
pub use pairwise::{PairwiseEnsemble, ScoreVector};
pub use pca::PcaModel;
pub use pgm::GrayImage;
