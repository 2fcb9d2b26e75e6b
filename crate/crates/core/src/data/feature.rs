use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DomainLabel;
use crate::numeric::Matrix;
use crate::scalar::Scalar;

/// Sparse non-negative feature vector over a fixed vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl FeatureVector {
    /// Builds a vector from `(index, value)` pairs; indices must be strictly
    /// increasing and values positive.
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Data("indices and values differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("feature indices must be strictly increasing".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Data("feature values must be positive and finite".into()));
        }
        Ok(Self { indices, values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }

    pub fn densify_into<T: Scalar>(&self, row: &mut [T]) {
        row.fill(T::zero());
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            row[i as usize] = T::c(v);
        }
    }

    pub fn densify<T: Scalar>(&self, dim: usize) -> Vec<T> {
        let mut row = vec![T::zero(); dim];
        self.densify_into(&mut row);
        row
    }
}

/// Stacks sparse vectors into a dense `batch x dim` matrix.
pub fn densify_batch<'a, T: Scalar>(
    vectors: impl IntoIterator<Item = &'a FeatureVector>,
    dim: usize,
) -> Result<Matrix<T>> {
    let mut data = Vec::new();
    let mut rows = 0;
    for v in vectors {
        if let Some(max) = v.max_index() {
            if max as usize >= dim {
                return Err(Error::dim("densify_batch", format!("indices < {dim}"), max));
            }
        }
        let start = data.len();
        data.resize(start + dim, T::zero());
        v.densify_into(&mut data[start..]);
        rows += 1;
    }
    Matrix::from_vec(rows, dim, data)
}

/// Sentiment polarity; class index 0 is negative, 1 is positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Positive => "positive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "negative" => Some(Polarity::Negative),
            "positive" => Some(Polarity::Positive),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub label: Option<Polarity>,
    pub domain: DomainLabel,
}
