//! Binary regression tree grown on one bootstrap sample.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{best_split_for_feature, node_criterion_tolerance, SplitRule};
use crate::data::Dataset;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        mean: f64,
        /// In-bag training indices with bootstrap multiplicity, sorted.
        inbag: Vec<u32>,
        /// Out-of-bag training indices routed to this leaf, each once.
        oob: Vec<u32>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf a feature row is routed to. The root is node 0.
    pub(crate) fn leaf_for(&self, row: &[f64]) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    pub(crate) fn leaf_mean(&self, leaf: usize) -> f64 {
        match &self.nodes[leaf] {
            Node::Leaf { mean, .. } => *mean,
            Node::Split { .. } => unreachable!("leaf_mean on a split node"),
        }
    }

    pub(crate) fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_mean(self.leaf_for(row))
    }

    pub(crate) fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }
}

/// Per-tree growth parameters with the mtry default already resolved.
pub(crate) struct GrowParams {
    pub(crate) mtry: usize,
    pub(crate) min_node_size: usize,
    pub(crate) split_rule: SplitRule,
    pub(crate) split_alpha: f64,
}

struct Grower<'a> {
    ds: &'a Dataset,
    params: &'a GrowParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    feature_pool: Vec<usize>,
    pair_buf: Vec<(f64, f64)>,
}

/// Grow a tree on an expanded bootstrap sample (training indices with
/// multiplicity). Splitting stops when a node is pure or no candidate leaves
/// both children with at least `min_node_size` observations.
pub(crate) fn grow_tree(
    ds: &Dataset,
    params: &GrowParams,
    sample: &mut [u32],
    rng: ChaCha8Rng,
) -> Tree {
    let mut grower = Grower {
        ds,
        params,
        rng,
        nodes: Vec::new(),
        feature_pool: (0..ds.p()).collect(),
        pair_buf: Vec::with_capacity(sample.len()),
    };
    grower.build(sample);
    Tree {
        nodes: grower.nodes,
    }
}

impl Grower<'_> {
    fn build(&mut self, sample: &mut [u32]) -> u32 {
        let id = self.nodes.len() as u32;
        // Placeholder so children receive later indices; patched below.
        self.nodes.push(Node::Leaf {
            mean: 0.0,
            inbag: Vec::new(),
            oob: Vec::new(),
        });

        let y = self.ds.y();
        let count = sample.len();
        let mean = sample.iter().map(|&i| y[i as usize]).sum::<f64>() / count as f64;
        let first_y = y[sample[0] as usize];
        let pure = sample.iter().all(|&i| y[i as usize] == first_y);

        if !pure && count >= 2 * self.params.min_node_size {
            if let Some((feature, threshold)) = self.find_best_split(sample) {
                let mid = partition_by_feature(self.ds, sample, feature, threshold);
                debug_assert!(mid > 0 && mid < sample.len());
                let (left_slice, right_slice) = sample.split_at_mut(mid);
                let left = self.build(left_slice);
                let right = self.build(right_slice);
                self.nodes[id as usize] = Node::Split {
                    feature: feature as u32,
                    threshold,
                    left,
                    right,
                };
                return id;
            }
        }

        let mut inbag = sample.to_vec();
        inbag.sort_unstable();
        self.nodes[id as usize] = Node::Leaf {
            mean,
            inbag,
            oob: Vec::new(),
        };
        id
    }

    /// Sample mtry features without replacement, then keep the best candidate
    /// across them. Criterion ties (within the node tolerance) keep the
    /// earlier feature in sampling order.
    fn find_best_split(&mut self, sample: &[u32]) -> Option<(usize, f64)> {
        let p = self.ds.p();
        let mtry = self.params.mtry.min(p);
        for t in 0..mtry {
            let j = self.rng.gen_range(t..p);
            self.feature_pool.swap(t, j);
        }
        let y = self.ds.y();
        let mean = sample.iter().map(|&i| y[i as usize]).sum::<f64>() / sample.len() as f64;
        let tol = node_criterion_tolerance(
            self.params.split_rule,
            sample.iter().map(|&i| y[i as usize]),
        );

        let mut best: Option<(usize, f64, f64)> = None;
        for t in 0..mtry {
            let feature = self.feature_pool[t];
            self.pair_buf.clear();
            self.pair_buf
                .extend(sample.iter().map(|&i| (self.ds.x(i as usize, feature), y[i as usize])));
            let found = best_split_for_feature(
                self.params.split_rule,
                self.params.split_alpha,
                &mut self.pair_buf,
                self.params.min_node_size,
                mean,
                tol,
            );
            if let Some((threshold, crit)) = found {
                if best.is_none_or(|(_, _, b)| crit < b - tol) {
                    best = Some((feature, threshold, crit));
                }
            }
        }
        best.map(|(feature, threshold, _)| (feature, threshold))
    }
}

/// Partition the sample in place: rows with `x < threshold` first. Returns the
/// boundary position.
fn partition_by_feature(ds: &Dataset, sample: &mut [u32], feature: usize, threshold: f64) -> usize {
    let mut i = 0usize;
    let mut j = sample.len();
    while i < j {
        if ds.x(sample[i] as usize, feature) < threshold {
            i += 1;
        } else {
            j -= 1;
            sample.swap(i, j);
        }
    }
    i
}
