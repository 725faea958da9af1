use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{Error, Result};

pub const UNK_SYMBOL: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenMode {
    #[default]
    Char,
    Word,
}

impl TokenMode {
    pub fn split<'a>(&self, text: &'a str) -> Box<dyn Iterator<Item = String> + 'a> {
        match self {
            TokenMode::Char => Box::new(text.chars().map(String::from)),
            TokenMode::Word => Box::new(text.split_whitespace().map(String::from)),
        }
    }

    fn separator(&self) -> &'static str {
        match self {
            TokenMode::Char => "",
            TokenMode::Word => " ",
        }
    }
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenMode::Char => "char",
            TokenMode::Word => "word",
        })
    }
}

impl FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(TokenMode::Char),
            "word" => Ok(TokenMode::Word),
            other => Err(Error::Config(format!(
                "unknown tokenization mode `{other}`"
            ))),
        }
    }
}

/// Closed symbol inventory. Corpus symbols are sorted; `<unk>` takes the last id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, TokenId>,
    mode: TokenMode,
}

impl Vocabulary {
    pub fn from_symbols(symbols: Vec<String>, mode: TokenMode) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Config(format!(
                "vocabulary needs at least 2 symbols, got {}",
                symbols.len()
            )));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), TokenId::from(i)).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary symbol {s:?}")));
            }
        }
        Ok(Self {
            symbols,
            index,
            mode,
        })
    }

    pub fn build<S: AsRef<str>>(corpus: &[S], mode: TokenMode) -> Result<Self> {
        if corpus.iter().all(|doc| doc.as_ref().is_empty()) {
            return Err(Error::Config(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let distinct: BTreeSet<String> = corpus
            .iter()
            .flat_map(|doc| mode.split(doc.as_ref()).collect::<Vec<_>>())
            .filter(|s| s != UNK_SYMBOL)
            .collect();
        if distinct.is_empty() {
            return Err(Error::Config("corpus contains no symbols".into()));
        }
        let mut symbols: Vec<String> = distinct.into_iter().collect();
        symbols.push(UNK_SYMBOL.to_string());
        Self::from_symbols(symbols, mode)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn unk(&self) -> TokenId {
        self.index
            .get(UNK_SYMBOL)
            .copied()
            .unwrap_or_else(|| TokenId::from(self.symbols.len() - 1))
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: TokenId) -> &str {
        &self.symbols[id.index()]
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.symbols.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let unk = self.unk();
        self.mode
            .split(text)
            .map(|s| self.id(&s).unwrap_or(unk))
            .collect()
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|t| self.symbol(*t))
            .collect::<Vec<_>>()
            .join(self.mode.separator())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_vocab_includes_unk() {
        let v = Vocabulary::build(&["abab"], TokenMode::Char).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.symbols(), &["a", "b", "<unk>"]);
    }

    #[test]
    fn word_vocab() {
        let v = Vocabulary::build(&["to be or not to be"], TokenMode::Word).unwrap();
        assert_eq!(v.len(), 5);
        for w in ["to", "be", "or", "not", "<unk>"] {
            assert!(v.id(w).is_some(), "{w}");
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            Vocabulary::build(&empty, TokenMode::Char),
            Err(Error::Config(_))
        ));
        assert!(Vocabulary::build(&[""], TokenMode::Char).is_err());
    }

    #[test]
    fn unknown_symbols_map_to_unk() {
        let v = Vocabulary::build(&["ab"], TokenMode::Char).unwrap();
        assert_eq!(v.encode("azb"), vec![TokenId(0), v.unk(), TokenId(1)]);
        assert_eq!(v.decode(&v.encode("ba")), "ba");
    }
}
