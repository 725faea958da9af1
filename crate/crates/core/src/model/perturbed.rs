use super::{LanguageModel, ProbDist, TokenId};
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = -700.0;

/// Tempers `base` by `temperature` and mixes in `epsilon` of the uniform distribution.
///
/// `(1, 0)` returns the input unchanged, bit for bit. Zero entries are treated as
/// `exp(LOG_FLOOR)` before tempering so that very high temperatures approach uniform.
pub fn perturb(base: &ProbDist, temperature: f64, epsilon: f64) -> Result<ProbDist> {
    check_params(temperature, epsilon)?;
    let mut dist = if temperature == 1.0 {
        base.clone()
    } else {
        let logw: Vec<f64> = base
            .probs()
            .iter()
            .map(|&p| p.ln().max(LOG_FLOOR) / temperature)
            .collect();
        ProbDist::from_log_weights(&logw)?
    };
    if epsilon > 0.0 {
        let u = 1.0 / dist.len() as f64;
        let mixed = dist
            .probs()
            .iter()
            .map(|p| (1.0 - epsilon) * p + epsilon * u)
            .collect();
        dist = ProbDist::from_weights(mixed)?;
    }
    Ok(dist)
}

fn check_params(temperature: f64, epsilon: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Config(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Draft model derived from a base model through [`perturb`].
#[derive(Debug, Clone)]
pub struct PerturbedDraftModel<M> {
    base: M,
    temperature: f64,
    epsilon: f64,
}

impl<M: LanguageModel> PerturbedDraftModel<M> {
    pub fn new(base: M, temperature: f64, epsilon: f64) -> Result<Self> {
        check_params(temperature, epsilon)?;
        Ok(Self {
            base,
            temperature,
            epsilon,
        })
    }

    pub fn base(&self) -> &M {
        &self.base
    }
}

impl<M: LanguageModel> LanguageModel for PerturbedDraftModel<M> {
    fn vocab_size(&self) -> usize {
        self.base.vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        perturb(
            &self.base.next_dist(context),
            self.temperature,
            self.epsilon,
        )
        .expect("parameters validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_parameters_are_exact() {
        let d = ProbDist::new(vec![0.123, 0.456, 0.421]).unwrap();
        assert_eq!(perturb(&d, 1.0, 0.0).unwrap(), d);
    }

    #[test]
    fn mixture_arithmetic() {
        let d = ProbDist::new(vec![0.8, 0.2]).unwrap();
        let p = perturb(&d, 1.0, 0.5).unwrap();
        assert!((p.prob(TokenId(0)) - 0.65).abs() < 1e-15);
        assert!((p.prob(TokenId(1)) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn high_temperature_flattens() {
        let d = ProbDist::new(vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let p = perturb(&d, 1e6, 0.0).unwrap();
        assert!(p.total_variation(&ProbDist::uniform(4)) < 1e-5);
    }

    #[test]
    fn one_hot_at_huge_temperature_is_nearly_uniform() {
        let d = ProbDist::one_hot(3, TokenId(1));
        let p = perturb(&d, 1e6, 0.0).unwrap();
        assert!(p.total_variation(&ProbDist::uniform(3)) < 1e-3);
        // sharpening keeps zero entries at zero
        assert_eq!(perturb(&d, 0.5, 0.0).unwrap(), d);
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = ProbDist::uniform(2);
        assert!(matches!(perturb(&d, 0.0, 0.0), Err(Error::Config(_))));
        assert!(perturb(&d, -1.0, 0.0).is_err());
        assert!(perturb(&d, 1.0, 1.0).is_err());
    }
}
