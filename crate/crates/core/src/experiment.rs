//! Turns corpora into a training bundle plus held-out evaluation sets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::amazon;
use crate::data::synth::generate;
use crate::data::{split, Corpus, RawDoc, DatasetBundle, Example, FeatureVector, Polarity, SynthSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{DomainLabel, ModelConfig};
use crate::training::{LabeledSet, TrainConfig, Validation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fractions of the target corpus for the unlabeled pool, validation and test.
    pub target: [f64; 3],
    /// Fraction of each source's labeled examples held out for validation.
    pub source_holdout: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            target: [0.6, 0.1, 0.3],
            source_holdout: 0.0,
            seed: 0,
        }
    }
}

/// Network sizes used on the generated benchmark.
pub fn benchmark_model_config(input_dim: usize, num_sources: usize) -> ModelConfig {
    ModelConfig {
        input_dim,
        hidden_dim: 64,
        feature_dim: 32,
        num_sources,
        num_classes: 2,
    }
}

/// Network sizes used on the review benchmark.
pub fn review_model_config(input_dim: usize, num_sources: usize) -> ModelConfig {
    ModelConfig {
        input_dim,
        hidden_dim: 256,
        feature_dim: 64,
        num_sources,
        num_classes: 2,
    }
}

/// Training settings used on the generated benchmark. The small corpora
/// need a larger step size than the defaults, and a light adversarial
/// weight plus the private cooperative term keep the min-max game stable.
pub fn benchmark_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        lambda: 0.1,
        include_private_coop_term: true,
        max_epochs: 40,
        patience: 10,
        seed,
        ..TrainConfig::default()
    }
}

/// Training bundle whose target corpus is the unlabeled pool, with every
/// label needed for evaluation kept outside it.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub bundle: DatasetBundle,
    /// Labels of the pool, in pool order. Never reach training.
    pub pool_labels: Vec<Option<usize>>,
    pub target_val: LabeledSet,
    pub target_test: LabeledSet,
    /// Held-out labeled examples per source; empty sets when no holdout.
    pub source_val: Vec<LabeledSet>,
}

fn labeled_only(items: Vec<(FeatureVector, Option<usize>)>) -> LabeledSet {
    let (features, labels) = items
        .into_iter()
        .filter_map(|(f, l)| l.map(|l| (f, l)))
        .unzip();
    LabeledSet { features, labels }
}

impl Experiment {
    pub fn new(
        mut sources: Vec<Corpus>,
        target_name: &str,
        target: Vec<FeatureVector>,
        target_labels: Vec<Option<Polarity>>,
        cfg: &SplitConfig,
    ) -> Result<Self> {
        if target.len() != target_labels.len() {
            return Err(Error::Data(format!(
                "{} target labels for {} target documents",
                target_labels.len(),
                target.len()
            )));
        }
        let k = sources.len();
        let items: Vec<(FeatureVector, Option<usize>)> = target
            .into_iter()
            .zip(target_labels.into_iter().map(|l| l.map(Polarity::class_index)))
            .collect();
        let parts = split(items, cfg.target, cfg.seed)?;
        let (pool, pool_labels): (Vec<FeatureVector>, Vec<Option<usize>>) = parts.train.into_iter().unzip();
        let target_corpus = Corpus {
            name: target_name.to_string(),
            examples: pool
                .into_iter()
                .map(|features| Example {
                    features,
                    label: None,
                    domain: DomainLabel(k),
                })
                .collect(),
        };

        let mut source_val = Vec::with_capacity(k);
        for (j, corpus) in sources.iter_mut().enumerate() {
            if cfg.source_holdout <= 0.0 {
                source_val.push(LabeledSet::default());
                continue;
            }
            let (labeled, unlabeled): (Vec<Example>, Vec<Example>) =
                std::mem::take(&mut corpus.examples).into_iter().partition(|e| e.label.is_some());
            let parts = split(
                labeled,
                [1.0 - cfg.source_holdout, cfg.source_holdout, 0.0],
                cfg.seed.wrapping_add(1 + j as u64),
            )?;
            source_val.push(labeled_only(
                parts
                    .val
                    .into_iter()
                    .map(|e| (e.features, e.label.map(Polarity::class_index)))
                    .collect(),
            ));
            corpus.examples = parts.train;
            corpus.examples.extend(unlabeled);
        }

        Ok(Self {
            bundle: DatasetBundle::new(sources, target_corpus)?,
            pool_labels,
            target_val: labeled_only(parts.val),
            target_test: labeled_only(parts.test),
            source_val,
        })
    }

    /// Generated corpora over a vocabulary of every generated word.
    pub fn synthetic(spec: &SynthSpec, cfg: &SplitConfig) -> Result<(Self, Vocabulary)> {
        let corpora = generate(spec)?;
        let vocab = corpora.vocabulary(spec.vocab_size as usize);
        let k = corpora.sources.len();
        let sources = corpora
            .sources
            .iter()
            .enumerate()
            .map(|(j, docs)| Corpus::from_raw(&corpora.names[j], docs, DomainLabel(j), &vocab))
            .collect();
        let target = corpora.target.iter().map(|d| vocab.vectorize(d)).collect();
        let labels = corpora.target_labels.iter().copied().map(Some).collect();
        Ok((Self::new(sources, &corpora.names[k], target, labels, cfg)?, vocab))
    }

    /// The four-domain review benchmark with `target` held out. Every
    /// unlabeled target review forms the pool; the labeled target reviews
    /// split into validation and test by `cfg.target[1..]` renormalized.
    pub fn amazon(root: impl AsRef<Path>, target: &str, vocab_size: usize, cfg: &SplitConfig) -> Result<(Self, Vocabulary)> {
        let domains = amazon::load_all(root)?;
        let t = domains
            .iter()
            .position(|d| d.name == target)
            .ok_or_else(|| Error::Config(format!("unknown target domain `{target}`, expected one of {:?}", amazon::DOMAINS)))?;
        let mut corpora: Vec<&[RawDoc]> = Vec::new();
        for (j, d) in domains.iter().enumerate() {
            if j != t {
                corpora.push(&d.labeled);
            }
            corpora.push(&d.unlabeled);
        }
        let vocab = Vocabulary::build(corpora, vocab_size);
        let sources: Vec<Corpus> = domains
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != t)
            .enumerate()
            .map(|(j, (_, d))| {
                let mut c = Corpus::from_raw(&d.name, &d.labeled, DomainLabel(j), &vocab);
                c.examples.extend(Corpus::from_raw(&d.name, &d.unlabeled, DomainLabel(j), &vocab).examples);
                c
            })
            .collect();
        let k = sources.len();
        let pool = Corpus::from_raw(target, &domains[t].unlabeled, DomainLabel(k), &vocab);
        let pool_labels = vec![None; pool.len()];
        let held = cfg.target[1] + cfg.target[2];
        if held <= 0.0 {
            return Err(Error::Config("target validation and test fractions are both zero".into()));
        }
        let labeled: Vec<(FeatureVector, Option<usize>)> = domains[t]
            .labeled
            .iter()
            .map(|d| (vocab.vectorize(d), d.label.map(Polarity::class_index)))
            .collect();
        let parts = split(labeled, [0.0, cfg.target[1] / held, cfg.target[2] / held], cfg.seed)?;
        let exp = Self {
            bundle: DatasetBundle::new(sources, pool)?,
            pool_labels,
            target_val: labeled_only(parts.val),
            target_test: labeled_only(parts.test),
            source_val: vec![LabeledSet::default(); k],
        };
        Ok((exp, vocab))
    }

    /// Labeled pool examples, for transductive evaluation.
    pub fn pool_set(&self) -> LabeledSet {
        labeled_only(
            self.bundle
                .target()
                .examples
                .iter()
                .zip(&self.pool_labels)
                .map(|(e, &l)| (e.features.clone(), l))
                .collect(),
        )
    }

    pub fn pool_features(&self) -> Vec<FeatureVector> {
        self.bundle.target().examples.iter().map(|e| e.features.clone()).collect()
    }

    /// Target validation when it has labels, otherwise the source holdout.
    pub fn validation(&self, prefer_target: bool) -> Result<Validation> {
        if prefer_target && !self.target_val.is_empty() {
            return Ok(Validation::Target(self.target_val.clone()));
        }
        if self.source_val.iter().all(|s| !s.is_empty()) && !self.source_val.is_empty() {
            return Ok(Validation::SourceHeldOut(self.source_val.clone()));
        }
        Err(Error::Config(
            "no validation data: give labeled target validation or a source holdout".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_split_sizes() {
        let spec = SynthSpec {
            docs_per_domain: 100,
            ..Default::default()
        };
        let cfg = SplitConfig {
            source_holdout: 0.2,
            ..Default::default()
        };
        let (e, _) = Experiment::synthetic(&spec, &cfg).unwrap();
        assert_eq!(e.bundle.target().examples.len(), 60);
        assert!(e.bundle.target().examples.iter().all(|x| x.label.is_none()));
        assert_eq!(e.target_val.len(), 10);
        assert_eq!(e.target_test.len(), 30);
        assert_eq!(e.pool_set().len(), 60);
        for (j, s) in e.source_val.iter().enumerate() {
            assert_eq!(s.len(), 20);
            assert_eq!(e.bundle.sources()[j].examples.len(), 80);
        }
        assert!(matches!(e.validation(false).unwrap(), Validation::SourceHeldOut(_)));
        assert!(matches!(e.validation(true).unwrap(), Validation::Target(_)));
    }
}
