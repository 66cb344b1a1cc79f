//! Principal component analysis for eigenface-style feature extraction.
//!
//! The top-m eigenvectors of the training covariance are found either directly
//! from the `d x d` covariance or, when there are fewer samples than
//! dimensions, from the `n x n` Gram matrix of centered samples. Projected
//! coordinates are optionally divided by `sqrt(eigenvalue)` so every feature
//! has unit variance on the training set.

use thiserror::Error;

use crate::checkpoint::{FormatError, TextReader, TextWriter};
use crate::linalg::{dot, jacobi_eigen, EigenError};

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("requested {requested} components but at most {max} are possible")]
    InvalidDimension { requested: usize, max: usize },
    #[error("only {available} positive eigenvalues, {requested} components requested")]
    RankDeficient { requested: usize, available: usize },
    #[error("all samples are identical")]
    DegenerateInput,
    #[error("expected vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("explained variance target {0} must be in (0, 1]")]
    BadTarget(f64),
    #[error("index {k} out of range 1..={m}")]
    OutOfRange { k: usize, m: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Eigenvalues at or below this fraction of the total variance count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Route {
    /// Gram matrix when `d > n`, covariance otherwise.
    #[default]
    Auto,
    Covariance,
    Gram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PcaOptions {
    pub standardize: bool,
    pub route: Route,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions { standardize: true, route: Route::Auto }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `m` unit rows of length `d`, mutually orthogonal.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub component_scales: Vec<f64>,
    /// Trace of the training covariance.
    pub total_variance: f64,
}

/// Full spectrum of the centered training data, before choosing `m`.
struct Spectrum {
    mean: Vec<f64>,
    centered: Vec<Vec<f64>>,
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    gram: bool,
    total_variance: f64,
}

impl Spectrum {
    fn compute(x: &[Vec<f64>], route: Route) -> Result<Spectrum, PcaError> {
        let n = x.len();
        if n < 2 {
            return Err(PcaError::TooFewSamples(n));
        }
        let d = x[0].len();
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(PcaError::DimensionMismatch { expected: d, found: bad.len() });
        }
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<Vec<f64>> =
            x.iter().map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();

        let denom = (n - 1) as f64;
        let total_variance = centered.iter().map(|r| dot(r, r)).sum::<f64>() / denom;
        if total_variance == 0.0 {
            return Err(PcaError::DegenerateInput);
        }

        let gram = match route {
            Route::Auto => d > n,
            Route::Covariance => false,
            Route::Gram => true,
        };
        let eig = if gram {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = dot(&centered[i], &centered[j]) / denom;
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            jacobi_eigen(&g, n)?
        } else {
            let mut c = vec![0.0; d * d];
            for row in &centered {
                for i in 0..d {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..d {
                        c[i * d + j] += ri * row[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let v = c[i * d + j] / denom;
                    c[i * d + j] = v;
                    c[j * d + i] = v;
                }
            }
            jacobi_eigen(&c, d)?
        };
        let values = eig.values.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        Ok(Spectrum { mean, centered, values, vectors: eig.vectors, gram, total_variance })
    }

    fn max_components(&self) -> usize {
        let n = self.centered.len();
        (n - 1).min(self.mean.len())
    }

    fn positive_count(&self) -> usize {
        let floor = RANK_TOL * self.total_variance;
        self.values.iter().take(self.max_components()).take_while(|&&v| v > floor).count()
    }

    fn build(self, m: usize, standardize: bool) -> Result<PcaModel, PcaError> {
        let max = self.max_components();
        if m == 0 || m > max {
            return Err(PcaError::InvalidDimension { requested: m, max });
        }
        let available = self.positive_count();
        if available < m {
            return Err(PcaError::RankDeficient { requested: m, available });
        }
        let d = self.mean.len();
        let mut components = Vec::with_capacity(m);
        for k in 0..m {
            let mut w = if self.gram {
                // w = Xcᵀ u, then normalized.
                let u = &self.vectors[k];
                let mut w = vec![0.0; d];
                for (row, &ui) in self.centered.iter().zip(u) {
                    for (wj, rj) in w.iter_mut().zip(row) {
                        *wj += ui * rj;
                    }
                }
                let norm = dot(&w, &w).sqrt();
                w.iter_mut().for_each(|x| *x /= norm);
                w
            } else {
                self.vectors[k].clone()
            };
            fix_sign(&mut w);
            components.push(w);
        }
        let eigenvalues: Vec<f64> = self.values[..m].to_vec();
        let component_scales = eigenvalues
            .iter()
            .map(|&v| if standardize && v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(PcaModel { mean: self.mean, components, eigenvalues, component_scales, total_variance: self.total_variance })
    }
}

/// Flips `w` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(w: &mut [f64]) {
    let mut best = 0;
    for (i, v) in w.iter().enumerate() {
        if v.abs() > w[best].abs() {
            best = i;
        }
    }
    if w.get(best).is_some_and(|&v| v < 0.0) {
        w.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits `m` components on the rows of `x`.
pub fn fit_pca(x: &[Vec<f64>], m: usize, opts: PcaOptions) -> Result<PcaModel, PcaError> {
    if x.len() >= 2 {
        let max = (x.len() - 1).min(x[0].len());
        if m == 0 || m > max {
            return Err(PcaError::InvalidDimension { requested: m, max });
        }
    }
    Spectrum::compute(x, opts.route)?.build(m, opts.standardize)
}

/// Fits the smallest number of components whose explained variance reaches `target`.
pub fn fit_pca_explained(x: &[Vec<f64>], target: f64, opts: PcaOptions) -> Result<PcaModel, PcaError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(PcaError::BadTarget(target));
    }
    let spectrum = Spectrum::compute(x, opts.route)?;
    let available = spectrum.positive_count().max(1);
    let mut acc = 0.0;
    let mut m = available;
    for (k, v) in spectrum.values.iter().take(available).enumerate() {
        acc += v;
        // Small slack so a target of exactly 1.0 is reachable despite rounding.
        if acc >= (target - 1e-12) * spectrum.total_variance {
            m = k + 1;
            break;
        }
    }
    spectrum.build(m, opts.standardize)
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.dim() {
            return Err(PcaError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self
            .components
            .iter()
            .zip(&self.component_scales)
            .map(|(w, s)| dot(w, &centered) / s)
            .collect())
    }

    pub fn project_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PcaError> {
        xs.iter().map(|x| self.project(x)).collect()
    }

    /// Maps feature coordinates back into input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>, PcaError> {
        if coords.len() != self.num_components() {
            return Err(PcaError::DimensionMismatch { expected: self.num_components(), found: coords.len() });
        }
        let mut x = self.mean.clone();
        for ((w, s), c) in self.components.iter().zip(&self.component_scales).zip(coords) {
            for (xi, wi) in x.iter_mut().zip(w) {
                *xi += c * s * wi;
            }
        }
        Ok(x)
    }

    /// Fraction of training variance captured by the first `k` components.
    pub fn explained_variance(&self, k: usize) -> Result<f64, PcaError> {
        let m = self.num_components();
        if k == 0 || k > m {
            return Err(PcaError::OutOfRange { k, m });
        }
        Ok((self.eigenvalues[..k].iter().sum::<f64>() / self.total_variance).min(1.0))
    }

    pub fn to_text(&self) -> String {
        let mut w = TextWriter::new("PAIRNET-PCA", 1);
        w.scalar("m", self.num_components())
            .scalar("d", self.dim())
            .scalar("total_variance", self.total_variance)
            .record("mean", &self.mean)
            .record("eigenvalues", &self.eigenvalues)
            .record("scales", &self.component_scales);
        for c in &self.components {
            w.record("component", c);
        }
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<PcaModel, PcaError> {
        let (mut r, _) = TextReader::open(text, "PAIRNET-PCA", 1)?;
        let m: usize = r.scalar("m")?;
        let d: usize = r.scalar("d")?;
        let total_variance = r.scalar("total_variance")?;
        let mean = r.values("mean", d)?;
        let eigenvalues = r.values("eigenvalues", m)?;
        let component_scales = r.values("scales", m)?;
        let components = (0..m).map(|_| r.values("component", d)).collect::<Result<_, _>>()?;
        r.expect_end()?;
        Ok(PcaModel { mean, components, eigenvalues, component_scales, total_variance })
    }
}
