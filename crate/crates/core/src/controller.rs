//! Decoding loops: the fixed-shape baseline and the entropy-bin adaptive variant.
//!
//! Each cycle drafts a tree to the base depth, scores its meta path, and (in the
//! adaptive loop) lets the entropy bin decide how many extra layers to draft and
//! how many candidates to verify. Verification is greedy, so both loops emit the
//! target model's greedy continuation; only the cost of getting there differs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinningModel;
use crate::entropy::{cumulative_path_entropy, select_meta_path};
use crate::error::{Error, Result};
use crate::metrics::{summarize, CostModel, IterationRecord, RunSummary};
use crate::model::{LanguageModel, TokenId};
use crate::tree::{DraftTree, DEFAULT_EXPAND_WIDTH};
use crate::verify::verify_greedy_until;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeteroConfig {
    /// Base draft depth `d`.
    pub depth: usize,
    pub top_k: usize,
    /// Default rerank budget.
    pub top_n: usize,
    pub expand_width: usize,
    /// Extension budget; `None` means `ceil(depth / 2)`.
    pub alpha: Option<usize>,
    /// Pruning multipliers indexed by bin.
    pub gamma: Vec<f64>,
    pub low_bins: Vec<usize>,
    /// Top-K used for the entropy metric; `None` means `top_k`.
    pub entropy_k: Option<usize>,
    pub max_new_tokens: usize,
    pub stop_token: Option<TokenId>,
}

impl Default for HeteroConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            top_k: 2,
            top_n: 20,
            expand_width: DEFAULT_EXPAND_WIDTH,
            alpha: None,
            gamma: vec![0.3, 0.6, 1.0],
            low_bins: vec![0, 1, 2],
            entropy_k: None,
            max_new_tokens: 128,
            stop_token: None,
        }
    }
}

impl HeteroConfig {
    pub fn alpha(&self) -> usize {
        self.alpha.unwrap_or(self.depth.div_ceil(2))
    }

    pub fn entropy_k(&self) -> usize {
        self.entropy_k.unwrap_or(self.top_k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.depth == 0 || self.top_k == 0 || self.top_n == 0 || self.expand_width == 0 {
            return bad("depth, top_k, top_n and expand_width must all be >= 1");
        }
        if self.entropy_k() == 0 {
            return bad("entropy_k must be >= 1");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be >= 1");
        }
        if self.gamma.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return bad("gamma entries must lie in (0, 1]");
        }
        if self.low_bins.iter().any(|b| *b > 7) {
            return bad("low bins must be within 0..=7");
        }
        if self.low_bins.iter().any(|b| *b >= self.gamma.len()) {
            return bad("every low bin needs a gamma entry");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adaptation {
    pub extra_layers: usize,
    pub top_n: usize,
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5 + 1e-9).floor() as i64
}

/// Drafting depth extension and rerank budget for entropy bin `bin`.
pub fn adapt(bin: usize, config: &HeteroConfig) -> Adaptation {
    if !config.low_bins.contains(&bin) {
        return Adaptation {
            extra_layers: 0,
            top_n: config.top_n,
        };
    }
    let lift = config.alpha() as i64 - bin as i64;
    let scaled = round_half_up(config.gamma[bin] * config.top_n as f64);
    Adaptation {
        extra_layers: lift.max(0) as usize,
        top_n: (scaled + lift).max(1) as usize,
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Fixed depth and budget; bins, if given, are only recorded.
    Baseline {
        annotate: Option<&'a BinningModel>,
    },
    HeteroSpec(&'a BinningModel),
}

impl Policy<'_> {
    fn bins(&self) -> Option<&BinningModel> {
        match self {
            Policy::Baseline { annotate } => *annotate,
            Policy::HeteroSpec(b) => Some(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub prompt: usize,
    pub tokens: Vec<TokenId>,
    pub records: Vec<IterationRecord>,
}

impl GenerationResult {
    pub fn summary(&self, cost: &CostModel) -> Result<RunSummary> {
        summarize(&self.records, cost)
    }
}

fn check_models(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompt: &[TokenId],
) -> Result<()> {
    if target.vocab_size() != draft.vocab_size() {
        return Err(Error::Config(format!(
            "target vocabulary ({}) and draft vocabulary ({}) differ",
            target.vocab_size(),
            draft.vocab_size()
        )));
    }
    if let Some(t) = prompt.iter().find(|t| t.index() >= target.vocab_size()) {
        return Err(Error::Config(format!(
            "prompt token {t} outside vocabulary"
        )));
    }
    Ok(())
}

/// Runs one prompt to `max_new_tokens` (or the stop token) under `policy`.
pub fn decode(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &HeteroConfig,
    policy: Policy<'_>,
    prompt_index: usize,
) -> Result<GenerationResult> {
    config.validate()?;
    check_models(target, draft, prompt)?;
    let entropy_k = config.entropy_k();
    let mut ctx = prompt.to_vec();
    let mut tokens = Vec::with_capacity(config.max_new_tokens);
    let mut records = Vec::new();

    while tokens.len() < config.max_new_tokens {
        let mut tree =
            DraftTree::expand(draft, &ctx, config.depth, config.top_k, config.expand_width)?;
        let meta = select_meta_path(&tree);
        let (entropy, meta_truncated) = match &meta {
            Some(p) => (cumulative_path_entropy(&tree, p, entropy_k), p.truncated),
            None => (0.0, true),
        };
        let bin = policy.bins().map(|b| b.assign(entropy));
        let plan = match (policy, bin) {
            (Policy::HeteroSpec(bins), Some(i)) if i < bins.low_bin_count() => adapt(i, config),
            _ => Adaptation {
                extra_layers: 0,
                top_n: config.top_n,
            },
        };
        if plan.extra_layers > 0 {
            tree.extend(draft, plan.extra_layers)?;
        }
        let t2 = tree.rerank(plan.top_n)?;
        let mut result = verify_greedy_until(target, &tree, &t2, config.stop_token);

        let remaining = config.max_new_tokens - tokens.len();
        if result.accepted_len() + 1 > remaining {
            // the accepted tokens are the target's own greedy choices, so the
            // token at the cut point is exactly what the target would emit there
            result.bonus_token = result.accepted_tokens[remaining - 1];
            result.accepted_tokens.truncate(remaining - 1);
            result.accepted_path.truncate(remaining - 1);
        }
        let tcr = match result.accepted_path.last() {
            Some(id) => t2.rank(*id).expect("accepted node is selected"),
            None => t2.budget() + 1,
        };
        let meta_rank = meta
            .as_ref()
            .and_then(|p| p.nodes.last())
            .and_then(|leaf| t2.rank(*leaf))
            .unwrap_or(t2.budget() + 1);

        records.push(IterationRecord {
            prompt: prompt_index,
            index: records.len(),
            entropy,
            meta_truncated,
            bin,
            depth: tree.depth(),
            budget: t2.budget(),
            tree_size: tree.len(),
            accepted_len: result.accepted_len(),
            tcr,
            meta_rank,
            tokens_verified: result.tokens_verified,
        });
        let stopped = Some(result.bonus_token) == config.stop_token;
        for t in result.emitted() {
            ctx.push(t);
            tokens.push(t);
        }
        if stopped {
            break;
        }
    }
    Ok(GenerationResult {
        prompt: prompt_index,
        tokens,
        records,
    })
}

pub fn decode_baseline(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &HeteroConfig,
) -> Result<GenerationResult> {
    decode(
        target,
        draft,
        prompt,
        config,
        Policy::Baseline { annotate: None },
        0,
    )
}

pub fn decode_heterospec(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompt: &[TokenId],
    config: &HeteroConfig,
    bins: &BinningModel,
) -> Result<GenerationResult> {
    decode(target, draft, prompt, config, Policy::HeteroSpec(bins), 0)
}

/// Results of one policy over a prompt set.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub generations: Vec<GenerationResult>,
    pub summary: RunSummary,
}

impl ArmResult {
    pub fn records(&self) -> Vec<IterationRecord> {
        self.generations
            .iter()
            .flat_map(|g| g.records.iter().cloned())
            .collect()
    }
}

/// Decodes every prompt (in parallel) and merges in prompt order.
pub fn run_arm(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    config: &HeteroConfig,
    policy: Policy<'_>,
    cost: &CostModel,
) -> Result<ArmResult> {
    if prompts.is_empty() {
        return Err(Error::Config("no prompts to decode".into()));
    }
    let generations = prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| decode(target, draft, p, config, policy, i))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<IterationRecord> = generations
        .iter()
        .flat_map(|g| g.records.iter().cloned())
        .collect();
    let summary = summarize(&records, cost)?;
    Ok(ArmResult {
        generations,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: ArmResult,
    pub heterospec: ArmResult,
}

/// First position where two token sequences differ, if any.
pub fn first_divergence(a: &[TokenId], b: &[TokenId]) -> Option<usize> {
    match a.iter().zip(b).position(|(x, y)| x != y) {
        Some(i) => Some(i),
        None if a.len() != b.len() => Some(a.len().min(b.len())),
        None => None,
    }
}

/// Paired baseline/adaptive runs over the same prompts. Fails if any prompt's
/// outputs differ between the arms.
pub fn run_comparison(
    target: &dyn LanguageModel,
    draft: &dyn LanguageModel,
    prompts: &[Vec<TokenId>],
    config: &HeteroConfig,
    bins: &BinningModel,
    cost: &CostModel,
) -> Result<Comparison> {
    let baseline = run_arm(
        target,
        draft,
        prompts,
        config,
        Policy::Baseline {
            annotate: Some(bins),
        },
        cost,
    )?;
    let heterospec = run_arm(
        target,
        draft,
        prompts,
        config,
        Policy::HeteroSpec(bins),
        cost,
    )?;
    for (b, h) in baseline.generations.iter().zip(&heterospec.generations) {
        if let Some(position) = first_divergence(&b.tokens, &h.tokens) {
            return Err(Error::IdentityViolation {
                prompt: b.prompt,
                position,
            });
        }
    }
    Ok(Comparison {
        baseline,
        heterospec,
    })
}
