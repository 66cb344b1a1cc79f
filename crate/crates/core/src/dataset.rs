//! Labeled sample sets: ORL-style directory trees, CSV manifests and synthetic
//! Gaussian blobs.
//!
//! Labels are zero-based class indices internally. On disk, ORL directory `sK`
//! and manifest label `K` both map to index `K - 1`.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::pgm::{parse_pgm, GrayImage, PgmError};
use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Pgm { path: PathBuf, source: PgmError },
    #[error("{path}: image is {found:?}, expected {expected:?} (width, height)")]
    InconsistentImageSize { path: PathBuf, expected: (usize, usize), found: (usize, usize) },
    #[error("class directory {0} contains no PGM files")]
    EmptyClassDirectory(PathBuf),
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },
    #[error("spread must be non-negative, got {0}")]
    BadSpread(f64),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Equal-length real vectors, each tagged with a class index in `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self, DatasetError> {
        if vectors.len() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(DatasetError::Invalid("num_classes must be positive".into()));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
            return Err(DatasetError::Invalid(format!(
                "sample {i} has length {}, expected {dim}",
                vectors[i].len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DatasetError::Invalid(format!("label {l} out of range for {num_classes} classes")));
        }
        Ok(LabeledDataset { vectors, labels, num_classes, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.vectors.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Every class has at least one sample.
    pub fn is_complete(&self) -> bool {
        self.class_counts().iter().all(|&c| c > 0)
    }

    pub fn first_missing_class(&self) -> Option<usize> {
        self.class_counts().iter().position(|&c| c == 0)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    /// Same labels, new vectors (e.g. after projection or noise).
    pub fn with_vectors(&self, vectors: Vec<Vec<f64>>) -> Result<LabeledDataset, DatasetError> {
        LabeledDataset::new(vectors, self.labels.clone(), self.num_classes)
    }
}

/// Row-major pixels scaled by `1 / maxval` into `[0, 1]`.
pub fn flatten_normalize(img: &GrayImage) -> Vec<f64> {
    let scale = f64::from(img.maxval);
    img.pixels.iter().map(|&p| f64::from(p) / scale).collect()
}

/// Averages non-overlapping `factor x factor` blocks; partial blocks at the
/// right and bottom edges are dropped.
pub fn downsample(img: &GrayImage, factor: usize) -> GrayImage {
    if factor <= 1 {
        return img.clone();
    }
    let (w, h) = ((img.width / factor).max(1), (img.height / factor).max(1));
    let fx = factor.min(img.width);
    let fy = factor.min(img.height);
    let mut pixels = Vec::with_capacity(w * h);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0u32;
            for y in by * fy..(by + 1) * fy {
                for x in bx * fx..(bx + 1) * fx {
                    sum += u32::from(img.get(x, y));
                }
            }
            let n = (fx * fy) as u32;
            pixels.push(((sum + n / 2) / n) as u8);
        }
    }
    GrayImage { width: w, height: h, maxval: img.maxval, pixels }
}

fn read_image(path: &Path, factor: usize) -> Result<GrayImage, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img = parse_pgm(&bytes).map_err(|source| DatasetError::Pgm { path: path.to_path_buf(), source })?;
    Ok(downsample(&img, factor))
}

/// Decodes all `(path, label)` entries in parallel, keeping input order, and
/// checks that every image has the same size.
fn images_to_dataset(entries: &[(PathBuf, usize)], num_classes: usize, factor: usize) -> Result<LabeledDataset, DatasetError> {
    let images = entries
        .par_iter()
        .map(|(p, _)| read_image(p, factor))
        .collect::<Result<Vec<_>, _>>()?;
    let expected = images.first().map(|i| (i.width, i.height)).unwrap_or((0, 0));
    for ((path, _), img) in entries.iter().zip(&images) {
        if (img.width, img.height) != expected {
            return Err(DatasetError::InconsistentImageSize {
                path: path.clone(),
                expected,
                found: (img.width, img.height),
            });
        }
    }
    let vectors = images.iter().map(flatten_normalize).collect();
    let labels = entries.iter().map(|(_, l)| *l).collect();
    let ds = LabeledDataset::new(vectors, labels, num_classes)?;
    match ds.first_missing_class() {
        Some(c) => Err(DatasetError::MissingClass(c + 1)),
        None => Ok(ds),
    }
}

fn class_number(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('s')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&k| k >= 1)
}

fn is_pgm(path: &Path) -> bool {
    path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Loads an ORL-style tree: `root/s1 .. root/sC`, each with one or more `.pgm`
/// files. Samples are ordered by class number, then by file name.
///
/// `factor > 1` block-averages every image before flattening.
pub fn load_orl_dataset(root: &Path, factor: usize) -> Result<LabeledDataset, DatasetError> {
    let mut classes: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        if let Some(k) = path.file_name().and_then(|n| n.to_str()).and_then(class_number) {
            classes.push((k, path));
        }
    }
    if classes.is_empty() {
        return Err(DatasetError::Invalid(format!("{}: no s<K> class directories", root.display())));
    }
    classes.sort();
    let num_classes = classes.last().map(|(k, _)| *k).unwrap_or(0);

    let mut entries = Vec::new();
    for (k, dir) in &classes {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if is_pgm(&path) {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(DatasetError::EmptyClassDirectory(dir.clone()));
        }
        files.sort();
        entries.extend(files.into_iter().map(|f| (f, k - 1)));
    }
    images_to_dataset(&entries, num_classes, factor)
}

/// Loads images listed in a UTF-8 CSV with header `path,label`. Relative paths
/// resolve against the manifest's directory; labels run from 1 to C.
pub fn load_manifest(manifest: &Path, factor: usize) -> Result<LabeledDataset, DatasetError> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| DatasetError::Manifest {
        path: manifest.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let bad = |line: usize, msg: String| DatasetError::Manifest { path: manifest.to_path_buf(), line, msg };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(bad(1, "header must be `path,label`".into()));
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        let label: usize = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|&l| l >= 1)
            .ok_or_else(|| bad(line, format!("label `{}` is not a positive integer", &record[1])))?;
        let p = Path::new(record[0].trim());
        let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        entries.push((path, label - 1));
    }
    if entries.is_empty() {
        return Err(bad(2, "manifest lists no images".into()));
    }
    let num_classes = entries.iter().map(|(_, l)| l + 1).max().unwrap_or(0);
    images_to_dataset(&entries, num_classes, factor)
}

/// Isotropic Gaussian blobs, `n_per_class` samples around each center, class by class.
pub fn make_synthetic(
    centers: &[Vec<f64>],
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    if centers.len() < 2 {
        return Err(DatasetError::Invalid("need at least 2 class centers".into()));
    }
    if n_per_class == 0 {
        return Err(DatasetError::Invalid("n_per_class must be at least 1".into()));
    }
    if spread.is_nan() || spread < 0.0 || spread.is_infinite() {
        return Err(DatasetError::BadSpread(spread));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(DatasetError::Invalid("centers must share one positive dimension".into()));
    }
    for (a, ca) in centers.iter().enumerate() {
        if centers[a + 1..].iter().any(|cb| cb == ca) {
            log::warn!("synthetic class {} duplicates another center", a + 1);
        }
    }

    let normal = Normal::new(0.0, spread).map_err(|_| DatasetError::BadSpread(spread))?;
    let mut rng = rng::stream(seed, &[rng::TAG_SYNTH]);
    let mut vectors = Vec::with_capacity(centers.len() * n_per_class);
    let mut labels = Vec::with_capacity(centers.len() * n_per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            vectors.push(center.iter().map(|&c| c + normal.sample(&mut rng)).collect());
            labels.push(k);
        }
    }
    LabeledDataset::new(vectors, labels, centers.len())
}

/// Built-in synthetic presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticPreset {
    /// Four 2-D classes at (±1, ±1), spread 0.3, 250 samples each.
    Fig1,
}

impl SyntheticPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "fig1" => Some(SyntheticPreset::Fig1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticPreset::Fig1 => "fig1",
        }
    }

    pub fn generate(self, seed: u64) -> LabeledDataset {
        match self {
            SyntheticPreset::Fig1 => {
                let centers = [[-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]].map(|c| c.to_vec());
                make_synthetic(&centers, 250, 0.3, seed).expect("fig1 preset parameters are valid")
            }
        }
    }
}
