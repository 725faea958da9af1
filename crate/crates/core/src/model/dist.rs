use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`](super::Vocabulary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Tolerance on the total mass of a [`ProbDist`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Normalized next-token distribution over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    /// Wraps an already-normalized vector, checking the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Contract("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Contract(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Contract(format!(
                "distribution mass {total} is not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Contract(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Contract("weights have zero total mass".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Softmax over log-weights; `-inf` entries get zero mass.
    pub fn from_log_weights(logw: &[f64]) -> Result<Self> {
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Contract("log-weights have no finite entry".into()));
        }
        Self::from_weights(logw.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform distribution over empty vocabulary");
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn one_hot(size: usize, token: TokenId) -> Self {
        let mut probs = vec![0.0; size];
        probs[token.index()] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token.index()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The `k` most probable tokens, descending by probability, ties to the smaller id.
    /// Zero-probability tokens are included when `k` exceeds the support.
    pub fn top_k(&self, k: usize) -> Vec<(TokenId, f64)> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(k)
            .map(|i| (TokenId::from(i), self.probs[i]))
            .collect()
    }

    /// Smallest token id attaining the maximum probability.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        TokenId::from(best)
    }

    /// Inverse-CDF sample for a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> TokenId {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return TokenId::from(i);
                }
            }
        }
        TokenId::from(last_positive)
    }

    /// Total-variation distance to another distribution of the same length.
    pub fn total_variation(&self, other: &ProbDist) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_to_smaller_id() {
        let d = ProbDist::new(vec![0.1, 0.8, 0.1]).unwrap();
        assert_eq!(d.argmax(), TokenId(1));
        let d = ProbDist::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(d.argmax(), TokenId(0));
        assert_eq!(ProbDist::uniform(7).argmax(), TokenId(0));
    }

    #[test]
    fn top_k_orders_by_probability_then_id() {
        let d = ProbDist::new(vec![0.2, 0.4, 0.2, 0.2]).unwrap();
        let ids: Vec<u32> = d.top_k(3).iter().map(|(t, _)| t.0).collect();
        assert_eq!(ids, vec![1, 0, 2]);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(ProbDist::new(vec![0.5, 0.4]).is_err());
        assert!(ProbDist::new(vec![1.5, -0.5]).is_err());
        assert!(ProbDist::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let d = ProbDist::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.sample_with(0.0), TokenId(1));
        assert_eq!(d.sample_with(0.999_999), TokenId(1));
    }
}
