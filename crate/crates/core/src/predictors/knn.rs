//! Exact brute-force k-NN mobility-mode classifier.

use super::dataset::{ClassifierSample, CLASSIFIER_FEATURES};
use super::Normalizer;
use crate::mobility::MobilityMode;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    dist2: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Majority vote among the `k` nearest training points (Euclidean, already
/// normalized space). Distance ties are resolved by training index; vote ties
/// by smaller mean distance, then lower mode index.
pub fn knn_classify(points: &[Vec<f64>], labels: &[MobilityMode], k: usize, query: &[f64]) -> Result<MobilityMode> {
    if points.is_empty() {
        return Err(Error::Empty("k-NN training set"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidInput(format!("k = {k} with {} training points", points.len())));
    }
    // Max-heap of the k best so far; the root is the current worst.
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    for (index, p) in points.iter().enumerate() {
        let dist2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        let cand = Neighbor { dist2, index };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap holds k items") {
            heap.pop();
            heap.push(cand);
        }
    }
    let mut votes = [0usize; MobilityMode::COUNT];
    let mut dist_sum = [0.0f64; MobilityMode::COUNT];
    for n in heap {
        let m = labels[n.index].index();
        votes[m] += 1;
        dist_sum[m] += n.dist2.sqrt();
    }
    let best = (0..MobilityMode::COUNT)
        .filter(|&m| votes[m] > 0)
        .min_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then((dist_sum[a] / votes[a] as f64).total_cmp(&(dist_sum[b] / votes[b] as f64)))
                .then(a.cmp(&b))
        })
        .expect("k >= 1 neighbours voted");
    Ok(MobilityMode::ALL[best])
}

/// Fitted classifier: z-scored training windows plus a weight on the
/// previous-mode dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnClassifier {
    pub k: usize,
    pub normalizer: Normalizer,
    /// Multiplies the normalized previous-mode coordinate.
    pub prev_mode_weight: f64,
    points: Vec<Vec<f64>>,
    labels: Vec<MobilityMode>,
}

impl KnnClassifier {
    pub fn fit(samples: &[ClassifierSample], k: usize, prev_mode_weight: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("k-NN training set"));
        }
        let normalizer = Normalizer::fit(samples.iter().map(|s| s.features.as_slice()), CLASSIFIER_FEATURES);
        let mut model = Self {
            k,
            normalizer,
            prev_mode_weight,
            points: Vec::new(),
            labels: samples.iter().map(|s| s.label).collect(),
        };
        model.points = samples.iter().map(|s| model.embed(&s.features)).collect();
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[MobilityMode] {
        &self.labels
    }

    /// Maps raw features into the space distances are measured in.
    pub fn embed(&self, features: &[f64]) -> Vec<f64> {
        let mut z = self.normalizer.normalize(features);
        if let Some(last) = z.last_mut() {
            *last *= self.prev_mode_weight;
        }
        z
    }

    pub fn classify(&self, features: &[f64]) -> Result<MobilityMode> {
        if features.len() != CLASSIFIER_FEATURES {
            return Err(Error::LengthMismatch {
                expected: CLASSIFIER_FEATURES,
                got: features.len(),
            });
        }
        knn_classify(&self.points, &self.labels, self.k, &self.embed(features))
    }
}
