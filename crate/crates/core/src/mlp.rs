//! Two-layer feed-forward network with tanh hidden and output units, trained by
//! plain (mini-)batch gradient descent on mean squared error.

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::checkpoint::{FormatError, TextReader, TextWriter};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("expected {what} of length {expected}, got {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}: {what} became non-finite")]
    DivergedToNonFinite { epoch: usize, what: &'static str },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Anything that maps an input vector to an output vector.
pub trait Network: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// `hidden_dim x input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `output_dim x hidden_dim`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    /// Half-width of the uniform weight init; `None` uses `1/sqrt(fan_in)` per layer.
    pub weight_init_scale: Option<f64>,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.05, epochs: 200, batch_size: 16, weight_init_scale: None, seed: 0, l2: 1e-4 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::BadConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(NetError::BadConfig("epochs must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(NetError::BadConfig(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if let Some(s) = self.weight_init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(NetError::BadConfig(format!("weight_init_scale must be non-negative, got {s}")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn tanh_layer(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[i];
        *o = z.tanh();
    }
}

impl MlpParams {
    /// Uniform weights in `[-scale, scale]`, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64, scale: Option<f64>) -> MlpParams {
        assert!(input_dim >= 1 && hidden_dim >= 1 && output_dim >= 1, "all layer sizes must be positive");
        let mut rng = rng::stream(seed, &[1]);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = scale.unwrap_or(1.0 / (fan_in as f64).sqrt());
            if s == 0.0 {
                return vec![0.0; n];
            }
            (0..n).map(|_| rng.random_range(-s..=s)).collect()
        };
        let w1 = draw(hidden_dim * input_dim, input_dim);
        let w2 = draw(output_dim * hidden_dim, hidden_dim);
        MlpParams {
            input_dim,
            hidden_dim,
            output_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; output_dim],
        }
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
            ..*self
        }
    }

    /// Every parameter in a fixed order: w1, b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for slot in self.w1.iter_mut().chain(&mut self.b1).chain(&mut self.w2).chain(&mut self.b2) {
            *slot = it.next().expect("flat vector too short");
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::DimensionMismatch { what: "input", expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    /// Mean squared error over samples and outputs plus `l2/2 * |W|^2`
    /// (weights only, biases are not decayed), with its exact gradient.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>], l2: f64) -> Result<(f64, MlpParams), NetError> {
        if inputs.len() != targets.len() {
            return Err(NetError::DimensionMismatch { what: "target list", expected: inputs.len(), found: targets.len() });
        }
        let idx: Vec<usize> = (0..inputs.len()).collect();
        self.batch_loss_grad(inputs, targets, &idx, l2)
    }

    fn batch_loss_grad(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>], idx: &[usize], l2: f64) -> Result<(f64, MlpParams), NetError> {
        if idx.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let (h, o, m) = (self.hidden_dim, self.output_dim, self.input_dim);
        let mut grad = self.zeros_like();
        let mut hidden = vec![0.0; h];
        let mut out = vec![0.0; o];
        let mut dz2 = vec![0.0; o];
        let mut dz1 = vec![0.0; h];
        let norm = 1.0 / (idx.len() * o) as f64;
        let mut sq = 0.0;

        for &i in idx {
            let x = &inputs[i];
            let t = &targets[i];
            self.check_input(x)?;
            if t.len() != o {
                return Err(NetError::DimensionMismatch { what: "target", expected: o, found: t.len() });
            }
            tanh_layer(&self.w1, &self.b1, x, &mut hidden);
            tanh_layer(&self.w2, &self.b2, &hidden, &mut out);
            for k in 0..o {
                let e = out[k] - t[k];
                sq += e * e;
                dz2[k] = 2.0 * e * norm * (1.0 - out[k] * out[k]);
                grad.b2[k] += dz2[k];
                let row = &mut grad.w2[k * h..(k + 1) * h];
                for (g, a) in row.iter_mut().zip(&hidden) {
                    *g += dz2[k] * a;
                }
            }
            for j in 0..h {
                let back: f64 = (0..o).map(|k| self.w2[k * h + j] * dz2[k]).sum();
                dz1[j] = back * (1.0 - hidden[j] * hidden[j]);
                grad.b1[j] += dz1[j];
                let row = &mut grad.w1[j * m..(j + 1) * m];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz1[j] * xi;
                }
            }
        }

        let mut loss = sq * norm;
        if l2 > 0.0 {
            let w_sq: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
            loss += 0.5 * l2 * w_sq;
            for (g, w) in grad.w1.iter_mut().zip(&self.w1) {
                *g += l2 * w;
            }
            for (g, w) in grad.w2.iter_mut().zip(&self.w2) {
                *g += l2 * w;
            }
        }
        Ok((loss, grad))
    }

    fn step(&mut self, grad: &MlpParams, lr: f64) {
        let pairs = [
            (&mut self.w1, &grad.w1),
            (&mut self.b1, &grad.b1),
            (&mut self.w2, &grad.w2),
            (&mut self.b2, &grad.b2),
        ];
        for (p, g) in pairs {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= lr * gi;
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut w = TextWriter::new("PAIRNET-MLP", 1);
        w.record("dims", &[self.input_dim, self.hidden_dim, self.output_dim])
            .record("w1", &self.w1)
            .record("b1", &self.b1)
            .record("w2", &self.w2)
            .record("b2", &self.b2);
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<MlpParams, NetError> {
        let (mut r, _) = TextReader::open(text, "PAIRNET-MLP", 1)?;
        let dims: Vec<usize> = r.values("dims", 3)?;
        let (m, h, o) = (dims[0], dims[1], dims[2]);
        if m == 0 || h == 0 || o == 0 {
            return Err(r.bad("layer sizes must be positive".into()).into());
        }
        let net = MlpParams {
            input_dim: m,
            hidden_dim: h,
            output_dim: o,
            w1: r.values("w1", h * m)?,
            b1: r.values("b1", h)?,
            w2: r.values("w2", o * h)?,
            b2: r.values("b2", o)?,
        };
        r.expect_end()?;
        Ok(net)
    }
}

impl Network for MlpParams {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.hidden_dim];
        tanh_layer(&self.w1, &self.b1, x, &mut hidden);
        let mut out = vec![0.0; self.output_dim];
        tanh_layer(&self.w2, &self.b2, &hidden, &mut out);
        Ok(out)
    }
}

/// Final parameters plus the full-dataset loss before training and after every epoch.
#[derive(Clone, Debug)]
pub struct Trained {
    pub params: MlpParams,
    pub losses: Vec<f64>,
}

/// Gradient descent from `net` for `cfg.epochs` passes. Mini-batch order is
/// reshuffled every epoch from `cfg.seed`; a full batch keeps dataset order.
pub fn train(net: MlpParams, inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<Trained, NetError> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    if inputs.len() != targets.len() {
        return Err(NetError::DimensionMismatch { what: "target list", expected: inputs.len(), found: targets.len() });
    }
    if let Some(t) = targets.iter().flatten().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(NetError::BadConfig(format!("target {t} outside [-1, 1]")));
    }
    let n = inputs.len();
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    let batch = if full_batch { n } else { cfg.batch_size };
    let mut rng = rng::stream(cfg.seed, &[2]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut net = net;
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    losses.push(net.loss_and_gradient(inputs, targets, cfg.l2)?.0);

    for epoch in 1..=cfg.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = net.batch_loss_grad(inputs, targets, chunk, cfg.l2)?;
            net.step(&grad, cfg.learning_rate);
            if !net.is_finite() {
                return Err(NetError::DivergedToNonFinite { epoch, what: "weights" });
            }
        }
        let loss = net.loss_and_gradient(inputs, targets, cfg.l2)?.0;
        if !loss.is_finite() {
            return Err(NetError::DivergedToNonFinite { epoch, what: "loss" });
        }
        losses.push(loss);
    }
    Ok(Trained { params: net, losses })
}
