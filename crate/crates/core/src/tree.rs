//! Dynamic draft tree: layer-wise expansion by path value, then Top-N reranking.
//!
//! Every node carries the draft confidence `c` of its token and the path value
//! `V = V(parent) * c` (the root has value 1). Because `c <= 1`, a node's value
//! never exceeds its parent's, and with ties broken by depth first the Top-N
//! nodes by value always form a root-connected subtree.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{LanguageModel, ProbDist, TokenId};

pub const DEFAULT_EXPAND_WIDTH: usize = 10;

/// Position of a node in [`DraftTree::nodes`]; equal to its insertion index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct DraftNode {
    pub token: TokenId,
    pub confidence: f64,
    pub value: f64,
    pub depth: usize,
    pub parent: Option<NodeId>,
    /// Draft distribution this node's token was chosen from (shared by siblings).
    pub step_dist: Arc<ProbDist>,
    pub insertion_index: usize,
}

/// Ordering used for every value comparison: higher value first, then shallower,
/// then earlier insertion.
pub fn value_order(a: &DraftNode, b: &DraftNode) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(a.depth.cmp(&b.depth))
        .then(a.insertion_index.cmp(&b.insertion_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub top_k: usize,
    pub expand_width: usize,
}

impl TreeShape {
    pub fn new(top_k: usize, expand_width: usize) -> Result<Self> {
        if top_k == 0 || expand_width == 0 {
            return Err(Error::Contract(
                "top_k and expand_width must be >= 1".into(),
            ));
        }
        Ok(Self {
            top_k,
            expand_width,
        })
    }
}

/// Expansion-phase tree.
#[derive(Debug, Clone)]
pub struct DraftTree {
    context: Vec<TokenId>,
    nodes: Vec<DraftNode>,
    depth: usize,
    shape: TreeShape,
}

impl DraftTree {
    /// Builds the tree to `depth` layers.
    ///
    /// Layer 1 holds the `top_k` most probable root tokens. Each later layer expands
    /// the `expand_width` highest-value nodes of the previous layer, each
    /// contributing its own `top_k` most probable children. Zero-probability
    /// children are never created.
    pub fn expand(
        draft: &dyn LanguageModel,
        context: &[TokenId],
        depth: usize,
        top_k: usize,
        expand_width: usize,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Contract("draft depth must be >= 1".into()));
        }
        let mut tree = Self {
            context: context.to_vec(),
            nodes: Vec::new(),
            depth: 0,
            shape: TreeShape::new(top_k, expand_width)?,
        };
        for _ in 0..depth {
            tree.grow_layer(draft);
        }
        Ok(tree)
    }

    /// Continues expansion by `extra_layers`; the result matches a fresh
    /// [`expand`](Self::expand) to the combined depth.
    pub fn extend(&mut self, draft: &dyn LanguageModel, extra_layers: usize) -> Result<()> {
        if extra_layers == 0 {
            return Err(Error::Contract(
                "extend needs at least one extra layer".into(),
            ));
        }
        for _ in 0..extra_layers {
            self.grow_layer(draft);
        }
        Ok(())
    }

    fn grow_layer(&mut self, draft: &dyn LanguageModel) {
        let next_depth = self.depth + 1;
        let parents: Vec<Option<NodeId>> = if self.depth == 0 {
            vec![None]
        } else {
            let mut frontier: Vec<NodeId> = self.layer(self.depth).collect();
            frontier.sort_by(|a, b| value_order(&self.nodes[a.0], &self.nodes[b.0]));
            frontier.truncate(self.shape.expand_width);
            frontier.into_iter().map(Some).collect()
        };
        for parent in parents {
            let mut ctx = self.context.clone();
            let parent_value = match parent {
                Some(p) => {
                    ctx.extend(self.path_tokens(p));
                    self.nodes[p.0].value
                }
                None => 1.0,
            };
            let dist = Arc::new(draft.next_dist(&ctx));
            for (token, confidence) in dist.top_k(self.shape.top_k) {
                if confidence <= 0.0 {
                    continue;
                }
                let index = self.nodes.len();
                self.nodes.push(DraftNode {
                    token,
                    confidence,
                    value: parent_value * confidence,
                    depth: next_depth,
                    parent,
                    step_dist: Arc::clone(&dist),
                    insertion_index: index,
                });
            }
        }
        self.depth = next_depth;
    }

    pub fn context(&self) -> &[TokenId] {
        &self.context
    }

    pub fn nodes(&self) -> &[DraftNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DraftNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of layers grown so far.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn layer(&self, depth: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.depth == depth)
            .map(|(i, _)| NodeId(i))
    }

    /// Node ids from layer 1 down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = self.nodes[id.0].parent;
        while let Some(p) = cur {
            path.push(p);
            cur = self.nodes[p.0].parent;
        }
        path.reverse();
        path
    }

    pub fn path_tokens(&self, id: NodeId) -> Vec<TokenId> {
        self.path(id)
            .into_iter()
            .map(|n| self.nodes[n.0].token)
            .collect()
    }

    /// Selects the `n` highest-value nodes.
    pub fn rerank(&self, n: usize) -> Result<RerankedTree> {
        if n == 0 {
            return Err(Error::Contract("rerank budget must be >= 1".into()));
        }
        let mut order: Vec<NodeId> = (0..self.nodes.len()).map(NodeId).collect();
        order.sort_by(|a, b| value_order(&self.nodes[a.0], &self.nodes[b.0]));
        order.truncate(n);
        Ok(RerankedTree::from_selection(self, order, n))
    }

    /// Text rendering, one node per line in insertion order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or("-".to_string(), |p| p.0.to_string());
            let _ = writeln!(
                out,
                "{}node {i} parent={parent} token={} c={:.6} V={:.6} depth={}",
                "  ".repeat(n.depth - 1),
                n.token,
                n.confidence,
                n.value,
                n.depth
            );
        }
        out
    }
}

/// The Top-N subtree submitted for verification.
#[derive(Debug, Clone)]
pub struct RerankedTree {
    /// Selected nodes in value order; ancestors always precede descendants.
    selected: Vec<NodeId>,
    budget: usize,
    children: HashMap<Option<NodeId>, Vec<NodeId>>,
    rank: HashMap<NodeId, usize>,
    max_depth: usize,
}

impl RerankedTree {
    fn from_selection(tree: &DraftTree, selected: Vec<NodeId>, budget: usize) -> Self {
        let mut children: HashMap<Option<NodeId>, Vec<NodeId>> = HashMap::new();
        let mut rank = HashMap::with_capacity(selected.len());
        let mut max_depth = 0;
        for (i, &id) in selected.iter().enumerate() {
            let node = tree.node(id);
            children.entry(node.parent).or_default().push(id);
            rank.insert(id, i + 1);
            max_depth = max_depth.max(node.depth);
        }
        Self {
            selected,
            budget,
            children,
            rank,
            max_depth,
        }
    }

    /// An empty selection: verification degenerates to one autoregressive step.
    pub fn empty(budget: usize) -> Self {
        Self {
            selected: Vec::new(),
            budget,
            children: HashMap::new(),
            rank: HashMap::new(),
            max_depth: 0,
        }
    }

    pub fn selected(&self) -> &[NodeId] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// The budget `N` this selection was made with.
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Selected children of `parent` (`None` for the root), in value order.
    pub fn children(&self, parent: Option<NodeId>) -> &[NodeId] {
        self.children.get(&parent).map_or(&[], Vec::as_slice)
    }

    /// 1-based value-order rank of a selected node.
    pub fn rank(&self, id: NodeId) -> Option<usize> {
        self.rank.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.rank.contains_key(&id)
    }

    /// Every selected node's parent is selected or is the root.
    pub fn is_root_connected(&self, tree: &DraftTree) -> bool {
        self.selected.iter().all(|id| match tree.node(*id).parent {
            None => true,
            Some(p) => self.contains(p),
        })
    }
}
