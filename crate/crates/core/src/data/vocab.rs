use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::blitzer::RawDoc;
use super::feature::FeatureVector;
use crate::error::{Error, Result};

/// Token -> id map; ids follow frequency rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Top-`size` tokens by total count over every document of every corpus.
    /// Ties break lexicographically; ids are assigned in rank order.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a [RawDoc]>, size: usize) -> Self {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for corpus in corpora {
            for doc in corpus {
                for (tok, &c) in &doc.counts {
                    *totals.entry(tok.as_str()).or_insert(0) += c;
                }
            }
        }
        if totals.len() < size {
            log::warn!(
                "only {} distinct tokens, vocabulary smaller than requested {size}",
                totals.len()
            );
        }
        let mut ranked: Vec<(&str, u64)> = totals.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(size);
        let tokens = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
        Self::from_tokens(tokens).expect("tokens are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the tokens in id order, newline separated.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps a document onto the vocabulary: OOV tokens are dropped and counts
    /// become `ln(1 + count)`.
    pub fn vectorize(&self, doc: &RawDoc) -> FeatureVector {
        let mut pairs: Vec<(u32, f64)> = doc
            .counts
            .iter()
            .filter_map(|(tok, &c)| self.id(tok).map(|id| (id, (c as f64).ln_1p())))
            .collect();
        pairs.sort_by_key(|p| p.0);
        let (idx, val) = pairs.into_iter().unzip();
        FeatureVector::new(idx, val).expect("vocabulary ids are unique")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for t in &self.tokens {
            text.push_str(t);
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}
