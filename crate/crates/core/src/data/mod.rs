//! Corpus ingestion, vocabulary, splitting and the synthetic generator.

pub mod amazon;
pub mod blitzer;
pub mod bundle;
pub mod feature;
pub mod split;
pub mod synth;
pub mod vocab;

pub use blitzer::RawDoc;
pub use bundle::{Corpus, DatasetBundle};
pub use feature::{densify_batch, Example, FeatureVector, Polarity};
pub use split::{split, Split};
pub use synth::{SynthCorpora, SynthSpec};
pub use vocab::Vocabulary;
