//! Target-model verification of drafted tokens.
//!
//! Greedy tree verification reproduces target-only greedy decoding exactly.
//! Stochastic chain verification uses the accept/residual rule, whose emitted
//! tokens follow the target distribution whatever the draft.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{LanguageModel, ProbDist, TokenId};
use crate::tree::{DraftTree, NodeId, RerankedTree};

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptResult {
    /// Accepted tree nodes from layer 1 downward (empty for chain verification).
    pub accepted_path: Vec<NodeId>,
    pub accepted_tokens: Vec<TokenId>,
    /// Token the target emits at the first non-accepted position.
    pub bonus_token: TokenId,
    /// Drafted candidates processed by the target in this call.
    pub tokens_verified: usize,
    /// Value-order rank of the deepest accepted node, `N + 1` if none was
    /// accepted. `None` in chain mode.
    pub deepest_accepted_rank: Option<usize>,
}

impl AcceptResult {
    pub fn accepted_len(&self) -> usize {
        self.accepted_tokens.len()
    }

    /// Accepted tokens followed by the bonus token.
    pub fn emitted(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.accepted_tokens
            .iter()
            .copied()
            .chain(std::iter::once(self.bonus_token))
    }
}

pub fn argmax(dist: &ProbDist) -> TokenId {
    dist.argmax()
}

/// Greedy verification of `t2` against the target.
pub fn verify_greedy(
    target: &dyn LanguageModel,
    tree: &DraftTree,
    t2: &RerankedTree,
) -> AcceptResult {
    verify_greedy_until(target, tree, t2, None)
}

/// Like [`verify_greedy`], but a target argmax equal to `stop` ends the walk and
/// becomes the bonus token, so nothing past a terminator is accepted.
pub fn verify_greedy_until(
    target: &dyn LanguageModel,
    tree: &DraftTree,
    t2: &RerankedTree,
    stop: Option<TokenId>,
) -> AcceptResult {
    let mut ctx = tree.context().to_vec();
    let mut current: Option<NodeId> = None;
    let mut accepted_path = Vec::new();
    let mut accepted_tokens = Vec::new();
    let bonus_token = loop {
        let want = target.next_dist(&ctx).argmax();
        if Some(want) == stop {
            break want;
        }
        let hit = t2
            .children(current)
            .iter()
            .copied()
            .find(|id| tree.node(*id).token == want);
        match hit {
            Some(id) => {
                accepted_path.push(id);
                accepted_tokens.push(want);
                ctx.push(want);
                current = Some(id);
            }
            None => break want,
        }
    };
    let deepest_accepted_rank = Some(match current {
        Some(id) => t2.rank(id).expect("accepted node is selected"),
        None => t2.budget() + 1,
    });
    AcceptResult {
        accepted_path,
        accepted_tokens,
        bonus_token,
        tokens_verified: t2.len(),
        deepest_accepted_rank,
    }
}

/// `min(1, p[t] / q[t])`.
pub fn accept_prob(p: &ProbDist, q: &ProbDist, t: TokenId) -> Result<f64> {
    let qt = q.prob(t);
    if !(qt > 0.0) {
        return Err(Error::Contract(format!(
            "draft assigns zero mass to proposed token {t}"
        )));
    }
    Ok((p.prob(t) / qt).min(1.0))
}

/// `normalize(max(0, p - q))`.
pub fn residual_dist(p: &ProbDist, q: &ProbDist) -> Result<ProbDist> {
    let residual: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    if residual.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Contract(
            "residual distribution has zero mass".into(),
        ));
    }
    ProbDist::from_weights(residual)
}

/// Speculative sampling over a single drafted chain.
///
/// Token `i` is accepted with probability `accept_prob(p_i, q_i, t_i)`. The first
/// rejection emits a sample of the residual and drops the rest of the chain; if
/// every token is accepted the bonus is sampled from the target at the next
/// position.
pub fn verify_stochastic_chain<R: Rng + ?Sized>(
    target: &dyn LanguageModel,
    context: &[TokenId],
    drafted: &[TokenId],
    draft_dists: &[ProbDist],
    rng: &mut R,
) -> Result<AcceptResult> {
    if drafted.len() != draft_dists.len() {
        return Err(Error::Contract(format!(
            "{} drafted tokens but {} draft distributions",
            drafted.len(),
            draft_dists.len()
        )));
    }
    let mut ctx = context.to_vec();
    let mut accepted_tokens = Vec::with_capacity(drafted.len());
    for (&t, q) in drafted.iter().zip(draft_dists) {
        let p = target.next_dist(&ctx);
        let a = accept_prob(&p, q, t)?;
        if rng.gen::<f64>() < a {
            accepted_tokens.push(t);
            ctx.push(t);
        } else {
            let bonus_token = residual_dist(&p, q)?.sample_with(rng.gen());
            return Ok(AcceptResult {
                accepted_path: Vec::new(),
                accepted_tokens,
                bonus_token,
                tokens_verified: drafted.len(),
                deepest_accepted_rank: None,
            });
        }
    }
    let bonus_token = target.next_dist(&ctx).sample_with(rng.gen());
    Ok(AcceptResult {
        accepted_path: Vec::new(),
        accepted_tokens,
        bonus_token,
        tokens_verified: drafted.len(),
        deepest_accepted_rank: None,
    })
}

/// Samples a chain of `len` tokens from the draft, returning tokens and the
/// distributions they were drawn from.
pub fn draft_chain<R: Rng + ?Sized>(
    draft: &dyn LanguageModel,
    context: &[TokenId],
    len: usize,
    rng: &mut R,
) -> (Vec<TokenId>, Vec<ProbDist>) {
    let mut ctx = context.to_vec();
    let mut tokens = Vec::with_capacity(len);
    let mut dists = Vec::with_capacity(len);
    for _ in 0..len {
        let q = draft.next_dist(&ctx);
        let t = q.sample_with(rng.gen());
        ctx.push(t);
        tokens.push(t);
        dists.push(q);
    }
    (tokens, dists)
}
