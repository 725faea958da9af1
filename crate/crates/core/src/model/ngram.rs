use std::collections::HashMap;
use std::fmt::Write as _;

use super::{LanguageModel, ProbDist, TokenId, TokenMode, Vocabulary};
use crate::error::{Error, Result};

const MAGIC: &str = "heterospec-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct Counts {
    next: HashMap<TokenId, u64>,
    total: u64,
}

impl Counts {
    fn add(&mut self, token: TokenId, n: u64) {
        *self.next.entry(token).or_insert(0) += n;
        self.total += n;
    }
}

/// Backoff n-gram model with add-k smoothing at whichever order answers.
///
/// A context is looked up at the longest usable length first; an unseen context
/// is shortened one token at a time down to the add-k unigram.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    // tables[len] maps a context of `len` tokens to the counts of what followed it.
    tables: Vec<HashMap<Vec<TokenId>, Counts>>,
}

impl NGramModel {
    pub fn train(
        vocab: &Vocabulary,
        docs: &[Vec<TokenId>],
        order: usize,
        smoothing: f64,
    ) -> Result<Self> {
        Self::validate(order, smoothing)?;
        let mut tables: Vec<HashMap<Vec<TokenId>, Counts>> = vec![HashMap::new(); order];
        for doc in docs {
            for (i, &tok) in doc.iter().enumerate() {
                if !vocab.contains(tok) {
                    return Err(Error::Config(format!("token {tok} outside vocabulary")));
                }
                for len in 0..order.min(i + 1) {
                    let ctx = doc[i - len..i].to_vec();
                    tables[len].entry(ctx).or_default().add(tok, 1);
                }
            }
        }
        Ok(Self {
            vocab: vocab.clone(),
            order,
            smoothing,
            tables,
        })
    }

    pub fn train_text<S: AsRef<str>>(
        vocab: &Vocabulary,
        corpus: &[S],
        order: usize,
        smoothing: f64,
    ) -> Result<Self> {
        let docs: Vec<Vec<TokenId>> = corpus.iter().map(|d| vocab.encode(d.as_ref())).collect();
        Self::train(vocab, &docs, order, smoothing)
    }

    fn validate(order: usize, smoothing: f64) -> Result<()> {
        if order < 1 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(smoothing > 0.0) || !smoothing.is_finite() {
            return Err(Error::Config(format!(
                "smoothing constant must be > 0, got {smoothing}"
            )));
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    fn smoothed(&self, counts: Option<&Counts>) -> ProbDist {
        let v = self.vocab.len();
        let k = self.smoothing;
        let mut weights = vec![k; v];
        if let Some(c) = counts {
            for (tok, n) in &c.next {
                weights[tok.index()] = *n as f64 + k;
            }
        }
        ProbDist::from_weights(weights).expect("add-k weights are positive")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "smoothing {:.16e}", self.smoothing);
        let _ = writeln!(out, "mode {}", self.vocab.mode());
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        for s in self.vocab.symbols() {
            let _ = writeln!(
                out,
                "sym {}",
                serde_json::to_string(s).expect("string encodes")
            );
        }
        let mut records = Vec::new();
        for table in &self.tables {
            for (ctx, counts) in table {
                for (tok, n) in &counts.next {
                    records.push((ctx.clone(), *tok, *n));
                }
            }
        }
        records.sort_by(|a, b| (a.0.len(), &a.0, a.1).cmp(&(b.0.len(), &b.0, b.1)));
        let _ = writeln!(out, "records {}", records.len());
        for (ctx, tok, n) in records {
            let ctx = if ctx.is_empty() {
                "-".to_string()
            } else {
                ctx.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(out, "count {ctx} {tok} {n}");
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |field: &str| -> Result<(usize, Vec<&str>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, field, "unexpected end of file"))?;
            let parts: Vec<&str> = line.splitn(2, ' ').collect();
            if parts[0] != field {
                return Err(Error::parse(
                    no,
                    field,
                    format!("expected `{field}`, found `{}`", parts[0]),
                ));
            }
            Ok((no, parts))
        };
        fn value<T: std::str::FromStr>(no: usize, field: &str, parts: &[&str]) -> Result<T> {
            parts
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::parse(no, field, "missing or malformed value"))
        }

        let (no, parts) = next(MAGIC)?;
        let version: u32 = value(no, "version", &parts)?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                no,
                "version",
                format!("unsupported version {version}"),
            ));
        }
        let (no, parts) = next("order")?;
        let order: usize = value(no, "order", &parts)?;
        let (no, parts) = next("smoothing")?;
        let smoothing: f64 = value(no, "smoothing", &parts)?;
        let (no, parts) = next("mode")?;
        let mode: TokenMode = parts
            .get(1)
            .ok_or_else(|| Error::parse(no, "mode", "missing value"))?
            .parse()
            .map_err(|_| Error::parse(no, "mode", "unknown mode"))?;
        let (no, parts) = next("vocab")?;
        let vsize: usize = value(no, "vocab", &parts)?;
        let mut symbols = Vec::with_capacity(vsize);
        for _ in 0..vsize {
            let (no, parts) = next("sym")?;
            let raw = parts
                .get(1)
                .ok_or_else(|| Error::parse(no, "sym", "missing symbol"))?;
            let s: String =
                serde_json::from_str(raw).map_err(|e| Error::parse(no, "sym", e.to_string()))?;
            symbols.push(s);
        }
        let vocab = Vocabulary::from_symbols(symbols, mode)?;
        Self::validate(order, smoothing)?;
        let (no, parts) = next("records")?;
        let nrec: usize = value(no, "records", &parts)?;
        let mut tables: Vec<HashMap<Vec<TokenId>, Counts>> = vec![HashMap::new(); order];
        for _ in 0..nrec {
            let (no, parts) = next("count")?;
            let fields: Vec<&str> = parts
                .get(1)
                .map(|r| r.split(' ').collect())
                .unwrap_or_default();
            if fields.len() != 3 {
                return Err(Error::parse(
                    no,
                    "count",
                    "expected `<context> <token> <count>`",
                ));
            }
            let ctx: Vec<TokenId> = if fields[0] == "-" {
                Vec::new()
            } else {
                fields[0]
                    .split(',')
                    .map(|t| t.parse::<u32>().map(TokenId))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(no, "context", "malformed token id"))?
            };
            let tok = fields[1]
                .parse::<u32>()
                .map(TokenId)
                .map_err(|_| Error::parse(no, "token", "malformed token id"))?;
            let n: u64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(no, "count", "malformed count"))?;
            if ctx.len() >= order {
                return Err(Error::parse(no, "context", "context longer than order - 1"));
            }
            if !vocab.contains(tok) || ctx.iter().any(|t| !vocab.contains(*t)) {
                return Err(Error::parse(no, "token", "token id outside vocabulary"));
            }
            tables[ctx.len()].entry(ctx).or_default().add(tok, n);
        }
        next("end")?;
        Ok(Self {
            vocab,
            order,
            smoothing,
            tables,
        })
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        let max_len = (self.order - 1).min(context.len());
        for len in (1..=max_len).rev() {
            let ctx = &context[context.len() - len..];
            if let Some(c) = self.tables[len].get(ctx) {
                if c.total > 0 {
                    return self.smoothed(Some(c));
                }
            }
        }
        self.smoothed(self.tables[0].get(&[][..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(corpus: &[&str], order: usize, k: f64) -> NGramModel {
        let vocab = Vocabulary::build(corpus, TokenMode::Char).unwrap();
        NGramModel::train_text(&vocab, corpus, order, k).unwrap()
    }

    #[test]
    fn bigram_on_repeated_symbol() {
        let m = model(&["aaaa"], 2, 0.01);
        let a = m.vocab().id("a").unwrap();
        let d = m.next_dist(&[a]);
        // 3 bigram observations of a->a: (3 + 0.01) / (3 + 0.02)
        assert!((d.prob(a) - 3.01 / 3.02).abs() < 1e-12);
        assert!(d.prob(a) > 0.99);
    }

    #[test]
    fn unseen_context_falls_back_to_unigram() {
        let m = model(&["abcab"], 3, 0.5);
        let unk = m.vocab().unk();
        let unigram = m.next_dist(&[]);
        assert_eq!(m.next_dist(&[unk, unk]), unigram);
        // counts a:2 b:2 c:1 over V=4 with k=0.5 -> denominators 5 + 2
        let a = m.vocab().id("a").unwrap();
        assert!((unigram.prob(a) - 2.5 / 7.0).abs() < 1e-12);
        assert!((unigram.prob(unk) - 0.5 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_bigram_usage_gives_uniform_next() {
        // every ordered pair over {a,b} appears once
        let m = model(&["aabba"], 2, 0.1);
        let a = m.vocab().id("a").unwrap();
        let b = m.vocab().id("b").unwrap();
        let d = m.next_dist(&[a]);
        assert!((d.prob(a) - d.prob(b)).abs() < 1e-15);
    }

    #[test]
    fn backoff_shortens_one_token_at_a_time() {
        let m = model(&["abc", "xbd"], 3, 0.01);
        let v = m.vocab();
        let (a, b, c, d, x) = (
            v.id("a").unwrap(),
            v.id("b").unwrap(),
            v.id("c").unwrap(),
            v.id("d").unwrap(),
            v.id("x").unwrap(),
        );
        assert_eq!(m.next_dist(&[a, b]).argmax(), c);
        assert_eq!(m.next_dist(&[x, b]).argmax(), d);
        // (c, b) unseen at length 2: bigram b -> {c, d} split evenly
        let mixed = m.next_dist(&[c, b]);
        assert_eq!(mixed.prob(c), mixed.prob(d));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = model(&["the cat sat", "on the mat\t\"x\""], 3, 0.037);
        let back = NGramModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn malformed_file_reports_line() {
        let m = model(&["abab"], 2, 0.1);
        let text = m.to_text().replace("order 2", "order two");
        match NGramModel::from_text(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let vocab = Vocabulary::build(&["ab"], TokenMode::Char).unwrap();
        assert!(NGramModel::train(&vocab, &[], 0, 0.1).is_err());
        assert!(NGramModel::train(&vocab, &[], 2, 0.0).is_err());
    }
}
