//! Synthetic multi-domain sentiment corpora.
//!
//! Every document has a uniformly drawn polarity and a Poisson number of
//! tokens. Each token is either noise (uniform over the vocabulary) or comes
//! from one of three kinds of blocks:
//!
//! * the **shared** block, whose words carry the same polarity in every domain;
//! * the **flip** block, common to all domains, whose polarity is multiplied
//!   by the domain's sign (`+1` or `-1`), so the same word can be positive in
//!   one domain and negative in another;
//! * the domain's own **topic** block, sentiment-neutral, which identifies
//!   the domain. Target documents draw topic words from a mixture over all
//!   topic blocks, which sets how strongly the target resembles each source.
//!
//! Inside a polar block the first half holds positive words and the second
//! half negative words; a polar token lands in the half agreeing with the
//! document (after the sign) with probability `purity`.

use std::ops::Range;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::blitzer::{format_doc, format_labels, RawDoc};
use super::bundle::{Corpus, DatasetBundle};
use super::feature::Polarity;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::DomainLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub vocab_size: u32,
    pub num_sources: usize,
    pub shared_block: Range<u32>,
    pub flip_block: Range<u32>,
    /// One topic block per domain, sources first, target last.
    pub topic_blocks: Vec<Range<u32>>,
    /// Polarity sign of the flip block per domain, sources first, target last.
    pub signs: Vec<i8>,
    /// Target topic mixture over the K+1 topic blocks.
    pub target_topic_mix: Vec<f64>,
    /// Relative frequency of shared, flip and topic tokens among non-noise tokens.
    pub token_mix: [f64; 3],
    pub purity: f64,
    pub docs_per_domain: usize,
    pub mean_tokens: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            num_sources: 3,
            shared_block: 0..50,
            flip_block: 50..80,
            topic_blocks: vec![80..110, 110..140, 140..170, 170..200],
            signs: vec![1, -1, -1, 1],
            target_topic_mix: vec![0.7, 0.0, 0.0, 0.3],
            token_mix: [0.2, 0.4, 0.4],
            purity: 0.8,
            docs_per_domain: 1000,
            mean_tokens: 30.0,
            noise_rate: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let k1 = self.num_sources + 1;
        let bad = |m: String| Err(Error::Config(m));
        if self.num_sources == 0 {
            return bad("num_sources must be at least 1".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be at least 1".into());
        }
        if self.docs_per_domain == 0 {
            return bad("docs_per_domain must be at least 1".into());
        }
        if self.topic_blocks.len() != k1 || self.signs.len() != k1 || self.target_topic_mix.len() != k1 {
            return bad(format!(
                "topic_blocks, signs and target_topic_mix need {k1} entries (sources + target)"
            ));
        }
        if self.signs.iter().any(|&s| s != 1 && s != -1) {
            return bad("signs must be +1 or -1".into());
        }
        let mut blocks: Vec<&Range<u32>> = vec![&self.shared_block, &self.flip_block];
        blocks.extend(&self.topic_blocks);
        for b in &blocks {
            if b.end > self.vocab_size || b.start > b.end {
                return bad(format!("block {b:?} outside vocabulary of {}", self.vocab_size));
            }
        }
        for (i, a) in blocks.iter().enumerate() {
            for b in &blocks[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return bad(format!("blocks {a:?} and {b:?} overlap"));
                }
            }
        }
        let probs = [self.purity, self.noise_rate];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("purity and noise_rate must lie in [0, 1]".into());
        }
        if self.token_mix.iter().chain(&self.target_topic_mix).any(|&w| w < 0.0 || !w.is_finite()) {
            return bad("mixture weights must be non-negative".into());
        }
        if self.noise_rate < 1.0 && self.token_mix.iter().sum::<f64>() <= 0.0 {
            return bad("token_mix must have positive mass".into());
        }
        if !(self.mean_tokens > 0.0) {
            return bad("mean_tokens must be positive".into());
        }
        Ok(())
    }

    pub fn domain_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.num_sources).map(|j| format!("source{j}")).collect();
        names.push("target".into());
        names
    }
}

/// Generated corpora; target labels are kept apart from the target documents.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpora {
    pub names: Vec<String>,
    pub sources: Vec<Vec<RawDoc>>,
    pub target: Vec<RawDoc>,
    pub target_labels: Vec<Polarity>,
}

pub fn token_name(id: u32) -> String {
    format!("w{id:03}")
}

fn polar_token<R: Rng>(rng: &mut R, block: &Range<u32>, positive: bool, purity: f64) -> u32 {
    let half = (block.end - block.start) / 2;
    let agree = rng.random_bool(purity);
    let use_first = positive == agree;
    if half == 0 {
        return block.start;
    }
    if use_first {
        rng.random_range(block.start..block.start + half)
    } else {
        rng.random_range(block.start + half..block.end)
    }
}

fn uniform_in<R: Rng>(rng: &mut R, block: &Range<u32>) -> Option<u32> {
    (!block.is_empty()).then(|| rng.random_range(block.clone()))
}

fn generate_doc<R: Rng>(
    spec: &SynthSpec,
    rng: &mut R,
    sign: i8,
    topics: &WeightedIndex<f64>,
    kinds: Option<&WeightedIndex<f64>>,
    poisson: &Poisson<f64>,
) -> RawDoc {
    let positive = rng.random_bool(0.5);
    // Empty lines are not documents in the file format, so keep at least one token.
    let n = (poisson.sample(rng) as usize).max(1);
    let mut doc = RawDoc {
        counts: Default::default(),
        label: Some(if positive { Polarity::Positive } else { Polarity::Negative }),
    };
    for _ in 0..n {
        let id = match kinds {
            Some(kinds) if !rng.random_bool(spec.noise_rate) => match kinds.sample(rng) {
                0 => (!spec.shared_block.is_empty())
                    .then(|| polar_token(rng, &spec.shared_block, positive, spec.purity)),
                1 => (!spec.flip_block.is_empty())
                    .then(|| polar_token(rng, &spec.flip_block, positive == (sign > 0), spec.purity)),
                _ => {
                    let block = &spec.topic_blocks[topics.sample(rng)];
                    uniform_in(rng, block)
                }
            },
            _ => None,
        };
        let id = id.unwrap_or_else(|| rng.random_range(0..spec.vocab_size));
        *doc.counts.entry(token_name(id)).or_insert(0) += 1;
    }
    doc
}

/// Generates all corpora. Identical specs give identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpora> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let poisson = Poisson::new(spec.mean_tokens).map_err(|e| Error::Config(e.to_string()))?;
    let kinds = (spec.noise_rate < 1.0)
        .then(|| WeightedIndex::new(spec.token_mix))
        .transpose()
        .map_err(|e| Error::Config(format!("token_mix: {e}")))?;
    let k = spec.num_sources;
    let mut domains = Vec::with_capacity(k + 1);
    for d in 0..=k {
        let topic_weights: Vec<f64> = if d < k {
            (0..=k).map(|i| if i == d { 1.0 } else { 0.0 }).collect()
        } else {
            spec.target_topic_mix.clone()
        };
        let topics = WeightedIndex::new(&topic_weights)
            .map_err(|e| Error::Config(format!("topic mixture: {e}")))?;
        let docs: Vec<RawDoc> = (0..spec.docs_per_domain)
            .map(|_| generate_doc(spec, &mut rng, spec.signs[d], &topics, kinds.as_ref(), &poisson))
            .collect();
        domains.push(docs);
    }
    let mut target = domains.pop().expect("target corpus");
    let target_labels = target
        .iter_mut()
        .map(|d| d.label.take().expect("generated docs are labeled"))
        .collect();
    Ok(SynthCorpora {
        names: spec.domain_names(),
        sources: domains,
        target,
        target_labels,
    })
}

impl SynthCorpora {
    /// Vocabulary over every generated document.
    pub fn vocabulary(&self, size: usize) -> Vocabulary {
        let corpora = self
            .sources
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.target.as_slice()));
        Vocabulary::build(corpora, size)
    }

    pub fn bundle(&self, vocab: &Vocabulary) -> Result<DatasetBundle> {
        let k = self.sources.len();
        let sources = self
            .sources
            .iter()
            .enumerate()
            .map(|(j, docs)| Corpus::from_raw(&self.names[j], docs, DomainLabel(j), vocab))
            .collect();
        let target = Corpus::from_raw(&self.names[k], &self.target, DomainLabel(k), vocab);
        DatasetBundle::new(sources, target)
    }

    /// Writes `<name>.review` per domain plus `target.labels`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let k = self.sources.len();
        for (j, docs) in self.sources.iter().enumerate() {
            written.push(write_corpus(&dir.join(format!("{}.review", self.names[j])), docs, true)?);
        }
        written.push(write_corpus(&dir.join(format!("{}.review", self.names[k])), &self.target, false)?);
        let labels = dir.join(format!("{}.labels", self.names[k]));
        std::fs::write(&labels, format_labels(&self.target_labels))?;
        written.push(labels);
        Ok(written)
    }
}

fn write_corpus(path: &Path, docs: &[RawDoc], labels: bool) -> Result<std::path::PathBuf> {
    let mut text = String::new();
    for d in docs {
        text.push_str(&format_doc(d, labels));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::blitzer::parse_file;

    fn small() -> SynthSpec {
        SynthSpec {
            docs_per_domain: 50,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthSpec { seed: 1, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn shapes() {
        let g = generate(&small()).unwrap();
        assert_eq!(g.sources.len(), 3);
        assert!(g.sources.iter().all(|s| s.len() == 50 && s.iter().all(|d| d.label.is_some())));
        assert_eq!(g.target.len(), 50);
        assert!(g.target.iter().all(|d| d.label.is_none()));
        assert_eq!(g.target_labels.len(), 50);
        let vocab = g.vocabulary(200);
        let b = g.bundle(&vocab).unwrap();
        assert_eq!(b.n_total(), 200);
    }

    #[test]
    fn source_topics_stay_in_own_block() {
        let spec = SynthSpec {
            noise_rate: 0.0,
            ..small()
        };
        let g = generate(&spec).unwrap();
        for doc in &g.sources[1] {
            for tok in doc.counts.keys() {
                let id: u32 = tok[1..].parse().unwrap();
                let in_topic_of_other = spec
                    .topic_blocks
                    .iter()
                    .enumerate()
                    .any(|(d, b)| d != 1 && b.contains(&id));
                assert!(!in_topic_of_other, "{tok}");
            }
        }
    }

    #[test]
    fn validation_guards() {
        assert!(generate(&SynthSpec {
            docs_per_domain: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthSpec {
            flip_block: 40..80,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthSpec {
            signs: vec![1, 1, 1],
            ..small()
        })
        .is_err());
    }

    #[test]
    fn written_files_parse_back() {
        let g = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = g.write(dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let back = parse_file(dir.path().join("source0.review")).unwrap();
        assert_eq!(back, g.sources[0]);
        let t = parse_file(dir.path().join("target.review")).unwrap();
        assert_eq!(t, g.target);
    }
}
