//! Bags of observations for prediction: the training-index multisets a query
//! point shares terminal nodes with, pooled over all trees.

use crate::data::Dataset;
use crate::forest::{BopFlavor, Forest};

/// A neighborhood of training-row indices for one query point. Indices repeat
/// when an observation co-occupies leaves in several trees (and, for the
/// in-bag flavor, per bootstrap multiplicity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bop {
    pub indices: Vec<u32>,
    pub flavor: BopFlavor,
}

impl Bop {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// Response values of the members, with multiplicity.
    pub fn values(&self, from: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| from[i as usize]).collect()
    }
}

/// Concatenate the query's leaf co-members over all trees, retaining
/// multiplicity across trees.
pub fn build_bop(forest: &Forest, row: &[f64], flavor: BopFlavor) -> Bop {
    let mut indices = Vec::new();
    for b in 0..forest.num_trees() {
        indices.extend_from_slice(forest.leaf_comembers(row, b, flavor));
    }
    Bop { indices, flavor }
}

/// OOB-BOP of a training row: in-bag leaf co-members collected only over the
/// trees where the row itself was out of bag. Empty when the row was in-bag
/// everywhere; the caller decides how to handle that.
pub fn build_oob_bop_training(forest: &Forest, train: &Dataset, i: usize) -> Bop {
    let row = train.row(i);
    let mut indices = Vec::new();
    for b in 0..forest.num_trees() {
        if forest.inbag_count(b, i) == 0 {
            indices.extend_from_slice(forest.leaf_comembers(row, b, BopFlavor::Inbag));
        }
    }
    Bop {
        indices,
        flavor: BopFlavor::Inbag,
    }
}
