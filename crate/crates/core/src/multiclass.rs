//! Baseline: a single network with one tanh output per class, trained on
//! signed one-hot targets (+1 for the true class, -1 elsewhere).

use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::decision::{argmax, Decision};
use crate::mlp::{train, MlpParams, NetError, Network, TrainConfig};
use crate::rng;

#[derive(Debug, Error)]
pub enum MulticlassError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("network has {found} outputs for {expected} classes")]
    OutputMismatch { expected: usize, found: usize },
    #[error("multiclass net: {0}")]
    Net(#[from] NetError),
}

#[derive(Clone, Debug)]
pub struct MulticlassNet<N = MlpParams> {
    num_classes: usize,
    net: N,
}

impl<N: Network> MulticlassNet<N> {
    pub fn new(num_classes: usize, net: N) -> Result<Self, MulticlassError> {
        if num_classes < 2 {
            return Err(MulticlassError::TooFewClasses(num_classes));
        }
        if net.output_dim() != num_classes {
            return Err(MulticlassError::OutputMismatch { expected: num_classes, found: net.output_dim() });
        }
        Ok(MulticlassNet { num_classes, net })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn net(&self) -> &N {
        &self.net
    }

    pub fn classify(&self, x: &[f64]) -> Result<Decision, NetError> {
        Ok(argmax(&self.net.forward(x)?))
    }
}

pub fn signed_one_hot(label: usize, num_classes: usize) -> Vec<f64> {
    (0..num_classes).map(|c| if c == label { 1.0 } else { -1.0 }).collect()
}

/// Trains one `C`-output net on every sample; randomness comes from
/// `(cfg.seed, "multiclass")`.
pub fn train_multiclass(train_set: &LabeledDataset, hidden_dim: usize, cfg: &TrainConfig) -> Result<MulticlassNet, MulticlassError> {
    let c = train_set.num_classes();
    if c < 2 {
        return Err(MulticlassError::TooFewClasses(c));
    }
    if let Some(missing) = train_set.first_missing_class() {
        return Err(MulticlassError::MissingClass(missing + 1));
    }
    let targets: Vec<Vec<f64>> = train_set.labels().iter().map(|&l| signed_one_hot(l, c)).collect();
    let seed = rng::derive_seed(cfg.seed, &[rng::TAG_MULTICLASS]);
    let init = MlpParams::init(train_set.dim(), hidden_dim, c, seed, cfg.weight_init_scale);
    let trained = train(init, train_set.vectors(), &targets, &cfg.with_seed(seed))?;
    MulticlassNet::new(c, trained.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Network for Fixed {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            self.0.len()
        }
        fn forward(&self, _x: &[f64]) -> Result<Vec<f64>, NetError> {
            Ok(self.0.clone())
        }
    }

    /// Adds a constant to every output of the wrapped net.
    struct Shifted<N>(N, f64);

    impl<N: Network> Network for Shifted<N> {
        fn input_dim(&self) -> usize {
            self.0.input_dim()
        }
        fn output_dim(&self) -> usize {
            self.0.output_dim()
        }
        fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
            Ok(self.0.forward(x)?.into_iter().map(|v| v + self.1).collect())
        }
    }

    #[test]
    fn stub_outputs_pick_first_class() {
        let mc = MulticlassNet::new(3, Fixed(vec![0.9, -0.9, 0.1])).unwrap();
        assert_eq!(mc.classify(&[0.0]).unwrap(), Decision { label: 0, tied: false });
    }

    #[test]
    fn shift_invariance() {
        let net = MlpParams::init(3, 5, 4, 21, Some(1.0));
        let mc = MulticlassNet::new(4, net.clone()).unwrap();
        for shift in [-3.0, -0.5, 0.25, 7.0] {
            let shifted = MulticlassNet::new(4, Shifted(net.clone(), shift)).unwrap();
            for x in [[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5], [3.0, -3.0, 0.0]] {
                assert_eq!(mc.classify(&x).unwrap().label, shifted.classify(&x).unwrap().label);
            }
        }
    }

    #[test]
    fn output_count_checked() {
        assert!(matches!(
            MulticlassNet::new(3, Fixed(vec![0.0, 0.0])),
            Err(MulticlassError::OutputMismatch { expected: 3, found: 2 })
        ));
        assert!(matches!(MulticlassNet::new(1, Fixed(vec![0.0])), Err(MulticlassError::TooFewClasses(1))));
    }

    #[test]
    fn one_hot() {
        assert_eq!(signed_one_hot(1, 3), vec![-1.0, 1.0, -1.0]);
    }
}
