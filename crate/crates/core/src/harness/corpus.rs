use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenMode;
use crate::rng::stream;

const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Synthetic corpus mixing fixed templates with uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedCorpusSpec {
    pub templates: usize,
    pub template_len: usize,
    /// Target fraction of positions emitted from inside a template.
    pub lambda: f64,
    /// Probability that a template position carries the template token (else uniform noise).
    pub rho: f64,
    pub vocab_size: usize,
    pub documents: usize,
    pub doc_len: usize,
}

impl Default for PlantedCorpusSpec {
    fn default() -> Self {
        Self {
            templates: 8,
            template_len: 16,
            lambda: 0.7,
            rho: 0.97,
            vocab_size: 32,
            documents: 400,
            doc_len: 256,
        }
    }
}

impl PlantedCorpusSpec {
    pub fn validate(&self, mode: TokenMode) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be >= 2".into());
        }
        if mode == TokenMode::Char && self.vocab_size > ALPHABET.len() {
            return bad(format!(
                "char mode supports at most {} symbols",
                ALPHABET.len()
            ));
        }
        if self.template_len < 2 || (self.lambda > 0.0 && self.templates == 0) {
            return bad("templates need at least 2 tokens and lambda > 0 needs a template".into());
        }
        if self.documents == 0 || self.doc_len == 0 {
            return bad("documents and doc_len must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCorpus {
    pub documents: Vec<String>,
    pub templates: Vec<String>,
    pub template_positions: usize,
    pub total_positions: usize,
}

impl PlantedCorpus {
    pub fn coverage(&self) -> f64 {
        self.template_positions as f64 / self.total_positions as f64
    }
}

fn symbols(vocab_size: usize, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Char => ALPHABET
            .chars()
            .take(vocab_size)
            .map(String::from)
            .collect(),
        TokenMode::Word => (0..vocab_size).map(|i| format!("w{i}")).collect(),
    }
}

/// Generates documents position by position: at each free position a template
/// instance starts with a probability tuned so the expected share of template
/// positions is `lambda`, nudged by the running shortfall.
pub fn gen_corpus(spec: &PlantedCorpusSpec, mode: TokenMode, seed: u64) -> Result<PlantedCorpus> {
    spec.validate(mode)?;
    let syms = symbols(spec.vocab_size, mode);
    let mut rng = stream(seed, "corpus", &[]);
    let templates: Vec<Vec<usize>> = (0..spec.templates)
        .map(|_| {
            (0..spec.template_len)
                .map(|_| rng.gen_range(0..spec.vocab_size))
                .collect()
        })
        .collect();
    let len = spec.template_len as f64;
    let base_start = if spec.lambda >= 1.0 {
        1.0
    } else {
        spec.lambda / (len - spec.lambda * (len - 1.0))
    };

    let mut documents = Vec::with_capacity(spec.documents);
    let (mut in_template, mut total) = (0usize, 0usize);
    for _ in 0..spec.documents {
        let mut doc: Vec<usize> = Vec::with_capacity(spec.doc_len);
        while doc.len() < spec.doc_len {
            let coverage = if total == 0 {
                spec.lambda
            } else {
                in_template as f64 / total as f64
            };
            let p_start = (base_start + (spec.lambda - coverage)).clamp(0.0, 1.0);
            let p_start = if spec.lambda == 0.0 { 0.0 } else { p_start };
            if rng.gen::<f64>() < p_start {
                let tpl = &templates[rng.gen_range(0..templates.len())];
                for &t in tpl.iter().take(spec.doc_len - doc.len()) {
                    let tok = if rng.gen::<f64>() < spec.rho {
                        t
                    } else {
                        rng.gen_range(0..spec.vocab_size)
                    };
                    doc.push(tok);
                    in_template += 1;
                    total += 1;
                }
            } else {
                doc.push(rng.gen_range(0..spec.vocab_size));
                total += 1;
            }
        }
        documents.push(render(&doc, &syms, mode));
    }
    Ok(PlantedCorpus {
        documents,
        templates: templates.iter().map(|t| render(t, &syms, mode)).collect(),
        template_positions: in_template,
        total_positions: total,
    })
}

fn render(tokens: &[usize], syms: &[String], mode: TokenMode) -> String {
    let parts: Vec<&str> = tokens.iter().map(|t| syms[*t].as_str()).collect();
    match mode {
        TokenMode::Char => parts.concat(),
        TokenMode::Word => parts.join(" "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64, documents: usize, doc_len: usize) -> PlantedCorpusSpec {
        PlantedCorpusSpec {
            lambda,
            documents,
            doc_len,
            ..PlantedCorpusSpec::default()
        }
    }

    #[test]
    fn full_template_coverage() {
        let c = gen_corpus(&spec(1.0, 10, 100), TokenMode::Char, 1).unwrap();
        assert_eq!(c.template_positions, c.total_positions);
    }

    #[test]
    fn zero_lambda_is_pure_noise() {
        let c = gen_corpus(&spec(0.0, 10, 100), TokenMode::Char, 1).unwrap();
        assert_eq!(c.template_positions, 0);
        assert_eq!(c.total_positions, 1000);
    }

    #[test]
    fn coverage_tracks_lambda() {
        for seed in 0..10 {
            let c = gen_corpus(&spec(0.6, 40, 250), TokenMode::Char, seed).unwrap();
            assert_eq!(c.total_positions, 10_000);
            assert!(
                (c.coverage() - 0.6).abs() <= 0.02,
                "seed {seed}: {}",
                c.coverage()
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_corpus(&spec(0.5, 5, 50), TokenMode::Word, 3).unwrap();
        let b = gen_corpus(&spec(0.5, 5, 50), TokenMode::Word, 3).unwrap();
        let c = gen_corpus(&spec(0.5, 5, 50), TokenMode::Word, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.documents, c.documents);
        assert_eq!(a.documents[0].split(' ').count(), 50);
    }
}
