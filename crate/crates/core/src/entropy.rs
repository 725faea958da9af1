//! Cumulative meta-path Top-K entropy, in nats.

use crate::model::ProbDist;
use crate::tree::{DraftTree, NodeId};

/// Entropy of the renormalized `k` largest probabilities of `dist`.
///
/// `k` is clamped to the vocabulary size; `0 * ln 0` counts as 0.
pub fn topk_step_entropy(dist: &ProbDist, k: usize) -> f64 {
    let k = k.max(1).min(dist.len());
    let top = dist.top_k(k);
    let mass: f64 = top.iter().map(|(_, p)| p).sum();
    if !(mass > 0.0) {
        return 0.0;
    }
    let h = top
        .iter()
        .map(|(_, p)| p / mass)
        .filter(|q| *q > 0.0)
        .map(|q| -q * q.ln())
        .sum::<f64>();
    h.max(0.0)
}

/// Root-to-leaf path chosen as the per-iteration predictability probe.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPath {
    pub nodes: Vec<NodeId>,
    /// Top-1 probability of the leaf's step distribution.
    pub final_confidence: f64,
    /// Set when no node reached the tree's base depth and a shallower layer was used.
    pub truncated: bool,
}

/// Picks, among the deepest-layer nodes, the one whose step distribution has the
/// highest Top-1 probability; ties go to the larger value, then the earlier node.
///
/// The deepest layer is the tree's base depth unless the tree was cut short.
/// Returns `None` only for an empty tree.
pub fn select_meta_path(tree: &DraftTree) -> Option<MetaPath> {
    let deepest = tree.nodes().iter().map(|n| n.depth).max()?;
    let leaf = tree.layer(deepest).max_by(|a, b| {
        let (na, nb) = (tree.node(*a), tree.node(*b));
        top1(&na.step_dist)
            .total_cmp(&top1(&nb.step_dist))
            .then(na.value.total_cmp(&nb.value))
            .then(nb.insertion_index.cmp(&na.insertion_index))
    })?;
    Some(MetaPath {
        nodes: tree.path(leaf),
        final_confidence: top1(&tree.node(leaf).step_dist),
        truncated: deepest < tree.depth(),
    })
}

fn top1(dist: &ProbDist) -> f64 {
    dist.prob(dist.argmax())
}

/// Sum of per-step Top-K entropies along the path.
pub fn cumulative_path_entropy(tree: &DraftTree, path: &MetaPath, k: usize) -> f64 {
    path.nodes
        .iter()
        .map(|id| topk_step_entropy(&tree.node(*id).step_dist, k))
        .sum()
}

/// Entropy of the meta path of `tree`, or 0 for an empty tree.
pub fn tree_entropy(tree: &DraftTree, k: usize) -> (f64, bool) {
    match select_meta_path(tree) {
        Some(path) => (cumulative_path_entropy(tree, &path, k), path.truncated),
        None => (0.0, true),
    }
}
