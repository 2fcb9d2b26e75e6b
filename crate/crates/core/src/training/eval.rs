//! Accuracy of the various prediction paths over sparse inputs.

use crate::data::{densify_batch, FeatureVector};
use crate::error::{Error, Result};
use crate::model::{PrivatePath, SharedPrivateModel};
use crate::numeric::Matrix;
use crate::scalar::Scalar;
use crate::weighting::{predict_target, predict_uniform, WeightMode};

const CHUNK: usize = 256;

/// Class-labeled sparse examples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Vec<FeatureVector>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} examples",
                labels.len(),
                features.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Held-out labeled data used for model selection.
#[derive(Clone, Debug, PartialEq)]
pub enum Validation {
    /// Labeled target examples scored through the weighted source ensemble.
    Target(LabeledSet),
    /// Held-out examples of each source scored through that source's own path.
    SourceHeldOut(Vec<LabeledSet>),
}

/// Which prediction a model makes for a target instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    Ensemble(WeightMode),
    Uniform,
    TargetPath,
    Source(usize),
}

/// Applies `f` to dense chunks of the input and concatenates the results.
pub fn map_chunks<T: Scalar, R>(
    features: &[FeatureVector],
    dim: usize,
    mut f: impl FnMut(&Matrix<T>) -> Result<Vec<R>>,
) -> Result<Vec<R>> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(CHUNK) {
        let x = densify_batch::<T>(chunk, dim)?;
        out.extend(f(&x)?);
    }
    Ok(out)
}

pub fn predict_labels<T: Scalar>(
    model: &SharedPrivateModel<T>,
    features: &[FeatureVector],
    predictor: Predictor,
) -> Result<Vec<usize>> {
    let dim = model.config().input_dim;
    map_chunks(features, dim, |x| match predictor {
        Predictor::Ensemble(mode) => Ok(predict_target(model, x, mode)?.into_iter().map(|p| p.label).collect()),
        Predictor::Uniform => Ok(predict_uniform(model, x)?.into_iter().map(|p| p.label).collect()),
        Predictor::TargetPath => Ok(model.target_path_predictions(x)?.argmax_rows()),
        Predictor::Source(j) => {
            let zs = model.extract_shared(x)?;
            let zp = model.extract_private(PrivatePath::Source(j), x)?;
            Ok(model.classify(&zs, &zp)?.argmax_rows())
        }
    })
}

/// Fraction of matching entries; zero for empty input.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate<T: Scalar>(
    model: &SharedPrivateModel<T>,
    set: &LabeledSet,
    predictor: Predictor,
) -> Result<f64> {
    Ok(accuracy(&predict_labels(model, &set.features, predictor)?, &set.labels))
}

/// Validation score: ensemble accuracy on target data, or the mean own-path
/// accuracy over the held-out source sets.
pub fn validation_accuracy<T: Scalar>(
    model: &SharedPrivateModel<T>,
    validation: &Validation,
    mode: WeightMode,
) -> Result<f64> {
    match validation {
        Validation::Target(set) => evaluate(model, set, Predictor::Ensemble(mode)),
        Validation::SourceHeldOut(sets) => {
            if sets.is_empty() {
                return Err(Error::Config("source held-out validation has no sets".into()));
            }
            let mut total = 0.0;
            for (j, set) in sets.iter().enumerate() {
                total += evaluate(model, set, Predictor::Source(j))?;
            }
            Ok(total / sets.len() as f64)
        }
    }
}
