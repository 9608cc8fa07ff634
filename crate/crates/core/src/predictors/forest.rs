//! Multi-output CART random forest.
//!
//! Features and targets are z-scored before training; leaves store target
//! means in normalized units and predictions are mapped back on the way out.
//! Each tree sees a bootstrap resample and, at every node, an exhaustive
//! variance-reduction search over a random subset of ⌈√d⌉ features.

use super::Normalizer;
use crate::rng;
use crate::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"MMAHCRF\0";
pub const FOREST_FORMAT_VERSION: u32 = 1;
const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    /// Features tried per split; `None` means ⌈√d⌉.
    #[serde(default)]
    pub max_features: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 12,
            min_leaf: 2,
            bootstrap: true,
            max_features: None,
        }
    }
}

/// A split node, or a leaf when `feature == u32::MAX` (then `left` indexes
/// the leaf table).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    /// Row-major `n_leaves × n_outputs` normalized leaf means.
    pub leaves: Vec<f64>,
    pub n_outputs: usize,
}

impl DecisionTree {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len() / self.n_outputs
    }

    pub fn leaf_value(&self, leaf: usize) -> &[f64] {
        &self.leaves[leaf * self.n_outputs..(leaf + 1) * self.n_outputs]
    }

    /// Leaf reached by a normalized feature vector.
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            node = if x[node.feature as usize] <= node.threshold {
                &self.nodes[node.left as usize]
            } else {
                &self.nodes[node.right as usize]
            };
        }
        node.left as usize
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &DecisionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + rec(t, n.left as usize).max(rec(t, n.right as usize))
            }
        }
        rec(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    pub n_outputs: usize,
    pub x_norm: Normalizer,
    pub y_norm: Normalizer,
    pub trees: Vec<DecisionTree>,
    /// Mean over trees of each tree's in-bag RMSE, in target units.
    pub inbag_rmse: f64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Vec<f64>],
    params: &'a ForestParams,
    n_try: usize,
    tree_seed: u64,
    nodes: Vec<TreeNode>,
    leaves: Vec<f64>,
}

impl Builder<'_> {
    fn n_outputs(&self) -> usize {
        self.y[0].len()
    }

    fn push_leaf(&mut self, idx: &[usize]) -> u32 {
        let n_out = self.n_outputs();
        let mut mean = vec![0.0; n_out];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(&self.y[i]) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= idx.len() as f64;
        }
        let leaf = (self.leaves.len() / n_out) as u32;
        self.leaves.extend(mean);
        self.nodes.push(TreeNode {
            feature: LEAF,
            threshold: 0.0,
            left: leaf,
            right: leaf,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Best (feature, threshold, gain) by exhaustive sweep over the sampled features.
    fn best_split(&self, idx: &[usize], heap_id: u64) -> Option<(usize, f64)> {
        let n = idx.len();
        let n_out = self.n_outputs();
        let d = self.x[0].len();
        let mut node_rng = rng::stream(self.tree_seed, &[heap_id]);
        let mut features: Vec<usize> = sample(&mut node_rng, d, self.n_try.min(d)).into_vec();
        features.sort_unstable();

        let mut total = vec![0.0; n_out];
        for &i in idx {
            for (t, v) in total.iter_mut().zip(&self.y[i]) {
                *t += v;
            }
        }
        let parent_score: f64 = total.iter().map(|t| t * t).sum::<f64>() / n as f64;

        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        let mut left = vec![0.0; n_out];
        for &f in &features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            left.iter_mut().for_each(|l| *l = 0.0);
            for split in 1..n {
                let prev = order[split - 1];
                for (l, v) in left.iter_mut().zip(&self.y[prev]) {
                    *l += v;
                }
                let nl = split;
                let nr = n - split;
                if nl < self.params.min_leaf || nr < self.params.min_leaf {
                    continue;
                }
                let lo = self.x[prev][f];
                let hi = self.x[order[split]][f];
                if lo >= hi {
                    continue;
                }
                let mut score = 0.0;
                for (l, t) in left.iter().zip(&total) {
                    let r = t - l;
                    score += l * l / nl as f64 + r * r / nr as f64;
                }
                let gain = score - parent_score;
                if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                    let mut thr = 0.5 * (lo + hi);
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((f, thr, gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, heap_id: u64) -> u32 {
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) {
            return self.push_leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx, heap_id) else {
            return self.push_leaf(idx);
        };
        // Partition in place: x <= threshold to the front.
        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: feature as u32,
            threshold,
            left: 0,
            right: 0,
        });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1, heap_id.wrapping_mul(2));
        let right = self.build(r, depth + 1, heap_id.wrapping_mul(2).wrapping_add(1));
        self.nodes[me].left = left;
        self.nodes[me].right = right;
        me as u32
    }
}

/// Trains a forest on raw (unnormalized) rows. Deterministic in `seed`.
///
/// Node-level feature subsets are drawn from streams keyed by the node's
/// position in the tree, so growing deeper only refines an existing tree.
pub fn train_forest(
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    if features.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    let n = features.len();
    if n < 2 * params.min_leaf.max(1) || n == 0 {
        return Err(Error::InvalidInput(format!(
            "forest needs at least {} samples, got {n}",
            2 * params.min_leaf.max(1)
        )));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidInput("forest needs at least one tree".into()));
    }
    let n_features = features[0].len();
    let n_outputs = targets[0].len();
    if features.iter().any(|f| f.len() != n_features) || targets.iter().any(|t| t.len() != n_outputs) {
        return Err(Error::InvalidInput("ragged forest training rows".into()));
    }
    let x_norm = Normalizer::fit(features.iter().map(|f| f.as_slice()), n_features);
    let y_norm = Normalizer::fit(targets.iter().map(|t| t.as_slice()), n_outputs);
    let x: Vec<Vec<f64>> = features.iter().map(|f| x_norm.normalize(f)).collect();
    let y: Vec<Vec<f64>> = targets.iter().map(|t| y_norm.normalize(t)).collect();
    let n_try = params
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features.max(1));

    let mut trees = Vec::with_capacity(params.n_trees);
    let mut inbag_sum = 0.0;
    for t in 0..params.n_trees {
        let tree_seed = rng::derive_seed(seed, &[rng::tag::FOREST, t as u64]);
        let mut boot = rng::stream(tree_seed, &[0]);
        let mut idx: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| boot.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let inbag = idx.clone();
        let mut b = Builder {
            x: &x,
            y: &y,
            params,
            n_try,
            tree_seed,
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        b.build(&mut idx, 0, 1);
        let tree = DecisionTree {
            nodes: b.nodes,
            leaves: b.leaves,
            n_outputs,
        };
        let mut sse = 0.0;
        for &i in &inbag {
            let leaf = tree.leaf_value(tree.leaf_for(&x[i]));
            for o in 0..n_outputs {
                let e = (leaf[o] - y[i][o]) * y_norm.std[o];
                sse += e * e;
            }
        }
        inbag_sum += (sse / (inbag.len() * n_outputs) as f64).sqrt();
        trees.push(tree);
    }

    Ok(ForestModel {
        params: params.clone(),
        n_features,
        n_outputs,
        x_norm,
        y_norm,
        inbag_rmse: inbag_sum / params.n_trees as f64,
        trees,
    })
}

/// Mean of per-tree leaf outputs, mapped back to target units.
pub fn forest_predict(model: &ForestModel, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != model.n_features {
        return Err(Error::LengthMismatch {
            expected: model.n_features,
            got: features.len(),
        });
    }
    let x = model.x_norm.normalize(features);
    let mut acc = vec![0.0; model.n_outputs];
    for tree in &model.trees {
        for (a, v) in acc.iter_mut().zip(tree.leaf_value(tree.leaf_for(&x))) {
            *a += v;
        }
    }
    let k = model.trees.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(model.y_norm.denormalize(&acc))
}

impl ForestModel {
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        forest_predict(self, features)
    }

    pub fn max_depth_reached(&self) -> usize {
        self.trees.iter().map(|t| t.depth()).max().unwrap_or(0)
    }

    /// Binary checkpoint: magic, version, JSON header, then little-endian
    /// node and leaf tables per tree.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ForestHeader {
            params: self.params.clone(),
            n_features: self.n_features,
            n_outputs: self.n_outputs,
            x_norm: self.x_norm.clone(),
            y_norm: self.y_norm.clone(),
            inbag_rmse: self.inbag_rmse,
            tree_sizes: self.trees.iter().map(|t| (t.nodes.len(), t.n_leaves())).collect(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FOREST_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for t in &self.trees {
            for n in &t.nodes {
                buf.extend_from_slice(&n.feature.to_le_bytes());
                buf.extend_from_slice(&n.threshold.to_le_bytes());
                buf.extend_from_slice(&n.left.to_le_bytes());
                buf.extend_from_slice(&n.right.to_le_bytes());
            }
            for v in &t.leaves {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput("not a forest checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FOREST_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: version,
                expected: FOREST_FORMAT_VERSION,
            });
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let h: ForestHeader = serde_json::from_slice(&header)?;
        let mut trees = Vec::with_capacity(h.tree_sizes.len());
        for &(n_nodes, n_leaves) in &h.tree_sizes {
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let feature = read_u32(&mut r)?;
                let threshold = read_f64(&mut r)?;
                let left = read_u32(&mut r)?;
                let right = read_u32(&mut r)?;
                nodes.push(TreeNode {
                    feature,
                    threshold,
                    left,
                    right,
                });
            }
            let leaves = (0..n_leaves * h.n_outputs)
                .map(|_| read_f64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            trees.push(DecisionTree {
                nodes,
                leaves,
                n_outputs: h.n_outputs,
            });
        }
        Ok(Self {
            params: h.params,
            n_features: h.n_features,
            n_outputs: h.n_outputs,
            x_norm: h.x_norm,
            y_norm: h.y_norm,
            trees,
            inbag_rmse: h.inbag_rmse,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ForestHeader {
    params: ForestParams,
    n_features: usize,
    n_outputs: usize,
    x_norm: Normalizer,
    y_norm: Normalizer,
    inbag_rmse: f64,
    tree_sizes: Vec<(usize, usize)>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn exact_params(depth: usize) -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: depth,
            min_leaf: 1,
            bootstrap: false,
            max_features: None,
        }
    }

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut s = rng::stream(seed, &[]);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![s.random_range(-3.0..3.0), s.random_range(-3.0..3.0)]).collect();
        let y = x
            .iter()
            .map(|r| vec![r[0].sin() * 4.0 + r[1], r[0] * r[1] + s.random_range(-0.1..0.1)])
            .collect();
        (x, y)
    }

    #[test]
    fn constant_targets_predict_constant() {
        let (x, _) = toy(40, 1);
        let y = vec![vec![7.5]; 40];
        let m = train_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        for row in &x {
            assert!((m.predict(row).unwrap()[0] - 7.5).abs() < 1e-12);
        }
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn four_point_split_matches_exhaustive_search() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
        // Oracle: SSE for each of the three candidate thresholds.
        let sse = |t: f64| {
            let side = |left: bool| -> f64 {
                let v: Vec<f64> = x.iter().zip(&y).filter(|(a, _)| (a[0] <= t) == left).map(|(_, b)| b[0]).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|q| (q - m).powi(2)).sum()
            };
            side(true) + side(false)
        };
        let best = [0.5, 1.5, 2.5].into_iter().min_by(|a, b| sse(*a).total_cmp(&sse(*b))).unwrap();
        assert_eq!(best, 1.5);

        let m = train_forest(&x, &y, &exact_params(1), 0).unwrap();
        let tree = &m.trees[0];
        let root = tree.nodes[0];
        assert!(!root.is_leaf());
        let thr = m.x_norm.denormalize(&[root.threshold])[0];
        assert!(thr > 1.0 && thr < 2.0, "threshold {thr}");
        let mut leaf_means: Vec<f64> = (0..tree.n_leaves())
            .map(|l| m.y_norm.denormalize(tree.leaf_value(l))[0])
            .collect();
        leaf_means.sort_by(f64::total_cmp);
        assert!((leaf_means[0] - 0.0).abs() < 1e-9 && (leaf_means[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn averaging_two_trees() {
        let x = vec![vec![0.0], vec![1.0]];
        let mut m = train_forest(&x, &[vec![4.0], vec![6.0]], &exact_params(0), 0).unwrap();
        let mut t2 = m.trees[0].clone();
        // Single-leaf trees: one predicts 4, the other 6 (in normalized units).
        m.trees[0].leaves[0] = m.y_norm.normalize(&[4.0])[0];
        t2.leaves[0] = m.y_norm.normalize(&[6.0])[0];
        m.trees.push(t2);
        assert!((m.predict(&[0.3]).unwrap()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_leaf_forest_predicts_global_mean() {
        let (x, y) = toy(30, 2);
        let m = train_forest(&x, &y, &exact_params(0), 0).unwrap();
        let mean0 = y.iter().map(|r| r[0]).sum::<f64>() / 30.0;
        assert!((m.predict(&x[0]).unwrap()[0] - mean0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_retrain() {
        let (x, y) = toy(200, 4);
        let a = train_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }, 9).unwrap();
        let b = train_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_and_leaf_constraints() {
        let (x, y) = toy(300, 5);
        let p = ForestParams {
            n_trees: 4,
            max_depth: 5,
            min_leaf: 7,
            ..Default::default()
        };
        let m = train_forest(&x, &y, &p, 1).unwrap();
        assert!(m.max_depth_reached() <= 5);
        // Every leaf is reachable from the root.
        for t in &m.trees {
            let mut seen = vec![false; t.n_leaves()];
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                let n = t.nodes[i];
                if n.is_leaf() {
                    seen[n.left as usize] = true;
                } else {
                    stack.push(n.left as usize);
                    stack.push(n.right as usize);
                }
            }
            assert!(seen.iter().all(|s| *s));
        }
    }

    #[test]
    fn inbag_loss_nonincreasing_in_depth() {
        let (x, y) = toy(400, 6);
        let mut prev = f64::INFINITY;
        for depth in 0..10 {
            let p = ForestParams {
                n_trees: 8,
                max_depth: depth,
                ..Default::default()
            };
            let m = train_forest(&x, &y, &p, 21).unwrap();
            assert!(m.inbag_rmse <= prev + 1e-12, "depth {depth}: {} > {prev}", m.inbag_rmse);
            prev = m.inbag_rmse;
        }
    }

    #[test]
    fn errors() {
        assert!(train_forest(&[vec![0.0]], &[vec![0.0]], &ForestParams::default(), 0).is_err());
        let (x, y) = toy(20, 7);
        let m = train_forest(&x, &y, &ForestParams { n_trees: 2, ..Default::default() }, 0).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn constant_features_give_single_leaf() {
        let x = vec![vec![1.0, 1.0]; 10];
        let y: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let m = train_forest(&x, &y, &ForestParams::default(), 0).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn checkpoint_round_trip() {
        let (x, y) = toy(100, 8);
        let m = train_forest(&x, &y, &ForestParams { n_trees: 3, ..Default::default() }, 2).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = ForestModel::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        buf[8] = 99;
        assert!(matches!(ForestModel::read_from(&buf[..]), Err(Error::FormatVersion { .. })));
    }
}
