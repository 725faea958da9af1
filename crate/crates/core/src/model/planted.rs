use super::{LanguageModel, ProbDist, TokenId};
use crate::error::{Error, Result};

/// Synthetic model with fixed high-frequency token templates.
///
/// The model is inside a template when the context ends with a proper prefix of
/// one; the next template token then gets mass `rho` and the remaining `1 - rho`
/// is spread evenly over every other token. Outside templates it is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTemplateModel {
    templates: Vec<Vec<TokenId>>,
    rho: f64,
    vocab_size: usize,
}

impl PlantedTemplateModel {
    pub fn new(templates: Vec<Vec<TokenId>>, rho: f64, vocab_size: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary size must be at least 2".into()));
        }
        if !(rho > 0.5 && rho <= 1.0) {
            return Err(Error::Config(format!(
                "rho must lie in (0.5, 1], got {rho}"
            )));
        }
        if templates.iter().any(|t| t.len() < 2) {
            return Err(Error::Config("templates need at least 2 tokens".into()));
        }
        if templates.iter().flatten().any(|t| t.index() >= vocab_size) {
            return Err(Error::Config("template token outside vocabulary".into()));
        }
        Ok(Self {
            templates,
            rho,
            vocab_size,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn templates(&self) -> &[Vec<TokenId>] {
        &self.templates
    }

    /// Longest template prefix the context ends with, as `(template, matched_len)`.
    /// Full-template matches do not count; ties go to the lower template index.
    pub fn template_state(&self, context: &[TokenId]) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for (ti, tpl) in self.templates.iter().enumerate() {
            let max = (tpl.len() - 1).min(context.len());
            for len in (1..=max).rev() {
                if context.ends_with(&tpl[..len]) {
                    if best.is_none_or(|(_, l)| len > l) {
                        best = Some((ti, len));
                    }
                    break;
                }
            }
        }
        best
    }

    /// Template continuation the model favours after `context`, if any.
    pub fn continuation(&self, context: &[TokenId]) -> Option<TokenId> {
        self.template_state(context)
            .map(|(ti, len)| self.templates[ti][len])
    }
}

impl LanguageModel for PlantedTemplateModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        match self.continuation(context) {
            Some(next) => {
                let rest = (1.0 - self.rho) / (self.vocab_size - 1) as f64;
                let mut probs = vec![rest; self.vocab_size];
                probs[next.index()] = self.rho;
                ProbDist::new(probs).expect("template distribution is normalized")
            }
            None => ProbDist::uniform(self.vocab_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().map(|&i| TokenId(i)).collect()
    }

    #[test]
    fn inside_template_mass_is_rho() {
        let m = PlantedTemplateModel::new(vec![ids(&[3, 5, 7])], 0.9, 11).unwrap();
        let d = m.next_dist(&ids(&[0, 3]));
        assert_eq!(d.prob(TokenId(5)), 0.9);
        for t in (0..11).filter(|&t| t != 5) {
            assert!((d.prob(TokenId(t)) - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn outside_template_is_uniform() {
        let m = PlantedTemplateModel::new(vec![ids(&[3, 5, 7])], 0.9, 11).unwrap();
        assert_eq!(m.next_dist(&ids(&[1, 2])), ProbDist::uniform(11));
        // a completed template is no longer "inside"
        assert_eq!(m.next_dist(&ids(&[3, 5, 7])), ProbDist::uniform(11));
        assert_eq!(m.next_dist(&[]), ProbDist::uniform(11));
    }

    #[test]
    fn longest_prefix_wins() {
        let m = PlantedTemplateModel::new(vec![ids(&[1, 2, 3]), ids(&[2, 4])], 0.8, 6).unwrap();
        assert_eq!(m.continuation(&ids(&[1, 2])), Some(TokenId(3)));
        assert_eq!(m.continuation(&ids(&[0, 2])), Some(TokenId(4)));
    }

    #[test]
    fn rejects_bad_rho() {
        assert!(PlantedTemplateModel::new(vec![ids(&[0, 1])], 0.5, 4).is_err());
        assert!(PlantedTemplateModel::new(vec![ids(&[0, 1])], 1.01, 4).is_err());
    }
}
