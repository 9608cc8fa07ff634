//! The rApp's learned models and their datasets.
//!
//! - [`knn`]: exact brute-force k-NN mobility-mode classifier.
//! - [`forest`]: multi-output CART random forest.
//! - [`models`]: trajectory and RSRP regressors built on the forest, and the
//!   self-feedback mode classifier used at inference.
//! - [`dataset`]: sliding-window and one-step-ahead sample assembly.
//! - [`metrics`]: classification and regression scores.

pub mod dataset;
pub mod forest;
pub mod knn;
pub mod metrics;
pub mod models;

pub use dataset::{ClassifierSample, RsrpSample, TrajSample};
pub use forest::{ForestModel, ForestParams};
pub use knn::KnnClassifier;
pub use metrics::{ClassificationReport, RegressionReport};
pub use models::{
    train_and_evaluate, ModeClassifier, PredictorBundle, PredictorConfig, PredictorReport, RsrpPredictor, TrajectoryPredictor,
};

use serde::{Deserialize, Serialize};

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits mean and population std per column. Constant columns get std 1.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1;
            for d in 0..dim {
                let delta = row[d] - mean[d];
                mean[d] += delta / n as f64;
                m2[d] += delta * (row[d] - mean[d]);
            }
        }
        let std = m2
            .iter()
            .map(|s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_column_gets_unit_std() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.std, vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn normalization_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 3), 2..30),
                                    x in prop::collection::vec(-1e4f64..1e4, 3)) {
            let n = Normalizer::fit(rows.iter().map(|r| r.as_slice()), 3);
            let back = n.denormalize(&n.normalize(&x));
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
