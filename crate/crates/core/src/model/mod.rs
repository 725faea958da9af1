//! Vocabularies, distributions, and the surrogate target/draft models.

mod dist;
mod ngram;
mod perturbed;
mod planted;
mod vocab;

use std::sync::Arc;

pub use dist::{ProbDist, TokenId, MASS_TOLERANCE};
pub use ngram::NGramModel;
pub use perturbed::{perturb, PerturbedDraftModel};
pub use planted::PlantedTemplateModel;
pub use vocab::{TokenMode, Vocabulary, UNK_SYMBOL};

/// Next-token predictor. Implementations are immutable once built and must be
/// deterministic in the context.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn next_dist(&self, context: &[TokenId]) -> ProbDist;
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        (**self).next_dist(context)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        (**self).next_dist(context)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        (**self).next_dist(context)
    }
}

/// Plain target-only greedy decoding, the reference every speculative loop must reproduce.
pub fn greedy_decode(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    new_tokens: usize,
) -> Vec<TokenId> {
    let mut ctx = prompt.to_vec();
    for _ in 0..new_tokens {
        let t = model.next_dist(&ctx).argmax();
        ctx.push(t);
    }
    ctx.split_off(prompt.len())
}
