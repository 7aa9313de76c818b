//! Bagged regression trees with pluggable split criteria and per-tree
//! in-bag/out-of-bag bookkeeping.
//!
//! Each tree is grown on a bootstrap sample of size n drawn with replacement;
//! leaves keep their in-bag index multiset and the out-of-bag training rows
//! routed to them, which is what the BOP constructions downstream consume.

mod split;
mod tree;

pub use split::{eval_split_l1, eval_split_ls, eval_split_spi, SplitRule};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use tree::{grow_tree, GrowParams, Node, Tree};

/// Default candidate-feature count per node: `max(floor(p/3), 1)`.
pub fn default_mtry(p: usize) -> usize {
    (p / 3).max(1)
}

/// Stable seed derivation for parallel substreams (splitmix64 steps).
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Tuning parameters for forest fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Candidate features per node; `None` resolves to `max(floor(p/3), 1)`.
    pub mtry: Option<usize>,
    /// Minimum observations (with bootstrap multiplicity) per terminal node.
    pub min_node_size: usize,
    pub split_rule: SplitRule,
    /// Level used by the SPI splitting rule.
    pub split_alpha: f64,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(split_rule: SplitRule) -> Self {
        ForestConfig {
            num_trees: 1000,
            mtry: None,
            min_node_size: 5,
            split_rule,
            split_alpha: 0.05,
            seed: 0,
        }
    }

    pub fn with_trees(mut self, num_trees: usize) -> Self {
        self.num_trees = num_trees;
        self
    }

    pub fn with_mtry(mut self, mtry: Option<usize>) -> Self {
        self.mtry = mtry;
        self
    }

    pub fn with_min_node_size(mut self, min_node_size: usize) -> Self {
        self.min_node_size = min_node_size;
        self
    }

    pub fn with_split_alpha(mut self, split_alpha: f64) -> Self {
        self.split_alpha = split_alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self, n: usize, p: usize) -> Result<usize> {
        if p == 0 {
            return Err(Error::InvalidConfig("dataset has no features".into()));
        }
        if self.num_trees == 0 {
            return Err(Error::InvalidConfig("num_trees must be >= 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidConfig("min_node_size must be >= 1".into()));
        }
        if n < self.min_node_size {
            return Err(Error::InvalidConfig(format!(
                "n={n} is smaller than min_node_size={}",
                self.min_node_size
            )));
        }
        if !(0.0 < self.split_alpha && self.split_alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_alpha must be in (0,1), got {}",
                self.split_alpha
            )));
        }
        let mtry = self.mtry.unwrap_or_else(|| default_mtry(p));
        if mtry == 0 || mtry > p {
            return Err(Error::InvalidConfig(format!(
                "mtry={mtry} must be in 1..={p}"
            )));
        }
        Ok(mtry)
    }
}

/// Which leaf co-members to collect for a query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BopFlavor {
    /// In-bag observations sharing the leaf, with bootstrap multiplicity.
    Inbag,
    /// Out-of-bag observations sharing the leaf, each at most once per tree.
    Oob,
}

/// OOB point predictions for the training rows; rows never out of bag carry
/// an invalid flag instead of a value.
#[derive(Debug, Clone)]
pub struct OobPredictions {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl OobPredictions {
    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| !v).count()
    }
}

/// A fitted forest: trees plus the B x n bootstrap multiplicity matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    inbag_counts: Vec<u32>, // tree-major, num_trees * n_train
    n_train: usize,
    config: ForestConfig,
    mtry_used: usize,
}

impl Forest {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn mtry_used(&self) -> usize {
        self.mtry_used
    }

    /// Bootstrap multiplicity of training row `i` in tree `b`.
    #[inline]
    pub fn inbag_count(&self, b: usize, i: usize) -> u32 {
        self.inbag_counts[b * self.n_train + i]
    }

    /// Forest prediction: the average of the tree leaf means for this row.
    pub fn predict_point(&self, row: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        total / self.trees.len() as f64
    }

    /// OOB prediction per training row: average over the trees where the row
    /// was not in the bootstrap sample.
    pub fn oob_predictions(&self) -> OobPredictions {
        let n = self.n_train;
        let mut acc = vec![0.0f64; n];
        let mut hits = vec![0u32; n];
        for tree in &self.trees {
            for node in tree.leaves() {
                if let Node::Leaf { mean, oob, .. } = node {
                    for &i in oob {
                        acc[i as usize] += *mean;
                        hits[i as usize] += 1;
                    }
                }
            }
        }
        let values = acc
            .iter()
            .zip(&hits)
            .map(|(&a, &h)| if h > 0 { a / h as f64 } else { f64::NAN })
            .collect();
        let valid = hits.iter().map(|&h| h > 0).collect();
        OobPredictions { values, valid }
    }

    /// Training indices sharing the leaf that `row` is routed to in tree `b`.
    pub fn leaf_comembers(&self, row: &[f64], b: usize, flavor: BopFlavor) -> &[u32] {
        let tree = &self.trees[b];
        match &tree.nodes[tree.leaf_for(row)] {
            Node::Leaf { inbag, oob, .. } => match flavor {
                BopFlavor::Inbag => inbag,
                BopFlavor::Oob => oob,
            },
            Node::Split { .. } => unreachable!("leaf_for returned a split node"),
        }
    }

    /// Leaf mean for `row` in tree `b`.
    pub fn tree_prediction(&self, row: &[f64], b: usize) -> f64 {
        self.trees[b].predict(row)
    }

    #[cfg(test)]
    pub(crate) fn tree(&self, b: usize) -> &Tree {
        &self.trees[b]
    }
}

/// Fit a forest of `cfg.num_trees` trees on independent bootstrap samples.
/// Per-tree seeds are derived from the master seed and the tree index, so
/// fitting is deterministic no matter how trees are scheduled.
pub fn fit_forest(ds: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mtry = cfg.validate(ds.n(), ds.p())?;
    let n = ds.n();
    let params = GrowParams {
        mtry,
        min_node_size: cfg.min_node_size,
        split_rule: cfg.split_rule,
        split_alpha: cfg.split_alpha,
    };

    let per_tree: Vec<(Tree, Vec<u32>)> = (0..cfg.num_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, b as u64));
            let mut sample: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n) as u32).collect();
            sample.sort_unstable();
            let mut counts = vec![0u32; n];
            for &i in &sample {
                counts[i as usize] += 1;
            }
            let mut tree = grow_tree(ds, &params, &mut sample, rng);
            for (i, &count) in counts.iter().enumerate() {
                if count == 0 {
                    let leaf = tree.leaf_for(ds.row(i));
                    if let Node::Leaf { oob, .. } = &mut tree.nodes[leaf] {
                        oob.push(i as u32);
                    }
                }
            }
            (tree, counts)
        })
        .collect();

    let mut trees = Vec::with_capacity(cfg.num_trees);
    let mut inbag_counts = Vec::with_capacity(cfg.num_trees * n);
    for (tree, counts) in per_tree {
        trees.push(tree);
        inbag_counts.extend_from_slice(&counts);
    }
    Ok(Forest {
        trees,
        inbag_counts,
        n_train: n,
        config: cfg.clone(),
        mtry_used: mtry,
    })
}
