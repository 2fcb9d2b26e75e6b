use super::blitzer::RawDoc;
use super::feature::{Example, Polarity};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::DomainLabel;

/// Examples of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn from_raw(name: impl Into<String>, docs: &[RawDoc], domain: DomainLabel, vocab: &Vocabulary) -> Self {
        Self {
            name: name.into(),
            examples: docs
                .iter()
                .map(|d| Example {
                    features: vocab.vectorize(d),
                    label: d.label,
                    domain,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.label.is_some())
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled().count()
    }
}

/// K source corpora plus the unlabeled target corpus.
///
/// Source `j` carries domain label `j`; the target carries `K`. Target
/// examples never hold class labels here: evaluation labels travel
/// separately.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    sources: Vec<Corpus>,
    target: Corpus,
}

impl DatasetBundle {
    pub fn new(sources: Vec<Corpus>, target: Corpus) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Config("at least one source domain is required".into()));
        }
        let k = sources.len();
        for (j, s) in sources.iter().enumerate() {
            if s.num_labeled() == 0 {
                return Err(Error::Config(format!("source `{}` has no labeled examples", s.name)));
            }
            if let Some(e) = s.examples.iter().find(|e| e.domain != DomainLabel(j)) {
                return Err(Error::Contract(format!(
                    "example in source `{}` carries domain {} instead of {j}",
                    s.name,
                    e.domain.index()
                )));
            }
        }
        if target.is_empty() {
            return Err(Error::Config(format!("target `{}` is empty", target.name)));
        }
        if target.examples.iter().any(|e| e.domain != DomainLabel(k)) {
            return Err(Error::Contract(format!("target examples must carry domain {k}")));
        }
        if target.examples.iter().any(|e| e.label.is_some()) {
            return Err(Error::Contract(
                "target examples must be unlabeled; keep evaluation labels separate".into(),
            ));
        }
        Ok(Self { sources, target })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[Corpus] {
        &self.sources
    }

    pub fn target(&self) -> &Corpus {
        &self.target
    }

    /// N_s: all source examples.
    pub fn n_source(&self) -> usize {
        self.sources.iter().map(Corpus::len).sum()
    }

    /// N_T: target examples.
    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    /// N = N_s + N_T.
    pub fn n_total(&self) -> usize {
        self.n_source() + self.n_target()
    }

    /// Corpus of domain `d` (sources first, target last).
    pub fn domain(&self, d: DomainLabel) -> Option<&Corpus> {
        match d.index() {
            i if i < self.sources.len() => Some(&self.sources[i]),
            i if i == self.sources.len() => Some(&self.target),
            _ => None,
        }
    }

    /// The domain-labeled union U.
    pub fn union(&self) -> impl Iterator<Item = &Example> {
        self.sources
            .iter()
            .chain(std::iter::once(&self.target))
            .flat_map(|c| c.examples.iter())
    }
}

/// Strips labels off target documents, returning them separately.
pub fn seal_labels(docs: &mut [RawDoc]) -> Vec<Option<Polarity>> {
    docs.iter_mut().map(|d| d.label.take()).collect()
}
