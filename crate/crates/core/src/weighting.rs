//! The discriminator as an instance-to-domain probability estimator:
//! per-instance source weights, weighted combination of the source
//! classifiers, and confidence-thresholded pseudo-label selection.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PrivatePath, SharedPrivateModel};
use crate::numeric::matrix::argmax;
use crate::numeric::Matrix;
use crate::scalar::Scalar;

/// Which features feed D when estimating source weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `D(E_s(x))` with the target entry dropped and the K source entries renormalized.
    #[default]
    Shared,
    /// `D(E_p_j(x))[j]` for each source `j`, normalized across `j`.
    Private,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(WeightMode::Shared),
            "private" => Ok(WeightMode::Private),
            other => Err(Error::Config(format!("unknown weight mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Shared => "shared",
            WeightMode::Private => "private",
        })
    }
}

/// Non-negative weights over the K sources summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Normalizes raw non-negative scores. Returns the vector and whether it
    /// fell back to uniform because every score was zero (or invalid).
    pub fn normalize(raw: &[T]) -> Result<(Self, bool)> {
        if raw.is_empty() {
            return Err(Error::Contract("weight vector needs at least one source".into()));
        }
        let clean: Vec<T> = raw
            .iter()
            .map(|&v| if v.is_finite() && v > T::zero() { v } else { T::zero() })
            .collect();
        let sum: T = clean.iter().copied().sum();
        if !(sum > T::zero()) || !sum.is_finite() {
            let u = T::one() / T::from_count(raw.len());
            return Ok((Self(vec![u; raw.len()]), true));
        }
        Ok((Self(clean.into_iter().map(|v| v / sum).collect()), false))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![T::one() / T::from_count(k.max(1)); k.max(1)])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Raw (unnormalized) instance-to-domain scores for a batch, `batch x K`.
pub fn raw_instance_scores<T: Scalar>(
    model: &SharedPrivateModel<T>,
    x: &Matrix<T>,
    mode: WeightMode,
) -> Result<Matrix<T>> {
    let k = model.config().num_sources;
    let mut out = Matrix::zeros(x.rows(), k);
    match mode {
        WeightMode::Shared => {
            let d = model.discriminate(&model.extract_shared(x)?)?;
            for r in 0..x.rows() {
                out.row_mut(r).copy_from_slice(&d.row(r)[..k]);
            }
        }
        WeightMode::Private => {
            for j in 0..k {
                let d = model.discriminate(&model.extract_private(PrivatePath::Source(j), x)?)?;
                for r in 0..x.rows() {
                    out.set(r, j, d.get(r, j));
                }
            }
        }
    }
    Ok(out)
}

/// Normalized source weights for every row of `x`.
pub fn instance_weights<T: Scalar>(
    model: &SharedPrivateModel<T>,
    x: &Matrix<T>,
    mode: WeightMode,
) -> Result<Vec<WeightVector<T>>> {
    let raw = raw_instance_scores(model, x, mode)?;
    raw.row_iter()
        .enumerate()
        .map(|(r, row)| {
            let (w, fell_back) = WeightVector::normalize(row)?;
            if fell_back {
                log::warn!("instance {r}: all source weights vanished, using uniform weights");
            }
            Ok(w)
        })
        .collect()
}

/// Convex combination `Σ_j w_j ĉ_j` of per-source class distributions.
pub fn combine_predictions<T: Scalar>(per_source: &[&[T]], weights: &WeightVector<T>) -> Result<Vec<T>> {
    if per_source.len() != weights.len() {
        return Err(Error::dim("combine_predictions", weights.len(), per_source.len()));
    }
    let classes = per_source[0].len();
    if per_source.iter().any(|p| p.len() != classes) {
        return Err(Error::dim("combine_predictions classes", classes, "ragged input"));
    }
    let mut out = vec![T::zero(); classes];
    for (p, &w) in per_source.iter().zip(weights.as_slice()) {
        for (o, &v) in out.iter_mut().zip(p.iter()) {
            *o += w * v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetPrediction<T> {
    pub combined: Vec<T>,
    pub per_source: Vec<Vec<T>>,
    pub weights: WeightVector<T>,
    pub confidence: T,
    pub label: usize,
}

impl<T: Scalar> TargetPrediction<T> {
    pub fn from_parts(per_source: Vec<Vec<T>>, weights: WeightVector<T>) -> Result<Self> {
        let refs: Vec<&[T]> = per_source.iter().map(Vec::as_slice).collect();
        let combined = combine_predictions(&refs, &weights)?;
        let label = argmax(&combined);
        Ok(Self {
            confidence: combined[label],
            label,
            combined,
            per_source,
            weights,
        })
    }
}

/// Weighted-ensemble prediction for every row of a target batch.
pub fn predict_target<T: Scalar>(
    model: &SharedPrivateModel<T>,
    x: &Matrix<T>,
    mode: WeightMode,
) -> Result<Vec<TargetPrediction<T>>> {
    let per_source = model.source_predictions(x)?;
    let weights = instance_weights(model, x, mode)?;
    weights
        .into_iter()
        .enumerate()
        .map(|(r, w)| {
            let rows = per_source.iter().map(|p| p.row(r).to_vec()).collect();
            TargetPrediction::from_parts(rows, w)
        })
        .collect()
}

/// Same as [`predict_target`] but with uniform weights, as a reference.
pub fn predict_uniform<T: Scalar>(
    model: &SharedPrivateModel<T>,
    x: &Matrix<T>,
) -> Result<Vec<TargetPrediction<T>>> {
    let per_source = model.source_predictions(x)?;
    let k = per_source.len();
    (0..x.rows())
        .map(|r| {
            let rows = per_source.iter().map(|p| p.row(r).to_vec()).collect();
            TargetPrediction::from_parts(rows, WeightVector::uniform(k))
        })
        .collect()
}

/// Acceptance rule for one instance. The ensemble must be more confident
/// than `delta`; unless bootstrapping, the target path must also be more
/// confident than `delta` and agree on the label. Returns the label.
pub fn accept_pseudo_label<T: Scalar>(ensemble: &[T], target_path: Option<&[T]>, delta: T) -> Option<usize> {
    let label = argmax(ensemble);
    if !(ensemble[label] > delta) {
        return None;
    }
    match target_path {
        None => Some(label),
        Some(tp) => {
            let tl = argmax(tp);
            (tp[tl] > delta && tl == label).then_some(label)
        }
    }
}

/// Selects pseudo-labels from `pool` at threshold `delta`.
///
/// Returns `(row, label)` pairs in row order. In bootstrap mode only the
/// ensemble condition applies; otherwise the model needs a target extractor.
pub fn pseudo_label_select<T: Scalar>(
    model: &SharedPrivateModel<T>,
    pool: &Matrix<T>,
    delta: T,
    bootstrap: bool,
    mode: WeightMode,
) -> Result<Vec<(usize, usize)>> {
    if !(delta > T::c(0.5) && delta <= T::one()) {
        return Err(Error::Config(format!("threshold {delta} outside (0.5, 1]")));
    }
    if pool.rows() == 0 {
        return Ok(Vec::new());
    }
    let ensemble = predict_target(model, pool, mode)?;
    let target = if bootstrap {
        None
    } else {
        Some(model.target_path_predictions(pool)?)
    };
    Ok(ensemble
        .iter()
        .enumerate()
        .filter_map(|(r, p)| {
            accept_pseudo_label(&p.combined, target.as_ref().map(|t| t.row(r)), delta).map(|l| (r, l))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numeric::layers::Affine;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn normalize_cases() {
        let (w, fb) = WeightVector::normalize(&[0.7f64]).unwrap();
        assert!(!fb);
        assert_eq!(w.as_slice(), &[1.0]);
        let (w, _) = WeightVector::normalize(&[0.2f64, 0.2, 0.1]).unwrap();
        assert!(close(w.as_slice(), &[0.4, 0.4, 0.2]));
        let (w, _) = WeightVector::normalize(&[0.25f64, 0.25, 0.25]).unwrap();
        assert!(close(w.as_slice(), &[1.0 / 3.0; 3]));
        let (w, fb) = WeightVector::normalize(&[0.0f64, 0.0]).unwrap();
        assert!(fb);
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        assert!(WeightVector::<f64>::normalize(&[]).is_err());
    }

    #[test]
    fn combine_cases() {
        let w = WeightVector::uniform(1);
        assert_eq!(combine_predictions(&[&[0.3f64, 0.7][..]], &w).unwrap(), vec![0.3, 0.7]);

        let (w, _) = WeightVector::normalize(&[0.5f64, 0.5]).unwrap();
        let c = combine_predictions(&[&[0.1f64, 0.9][..], &[0.7, 0.3][..]], &w).unwrap();
        assert!((c[1] - 0.6).abs() < 1e-12);

        let (w, _) = WeightVector::normalize(&[0.1f64, 0.6, 0.3]).unwrap();
        let p = [0.35f64, 0.65];
        let c = combine_predictions(&[&p[..], &p[..], &p[..]], &w).unwrap();
        assert!(close(&c, &p));

        assert!(combine_predictions(&[&p[..]], &WeightVector::uniform(2)).is_err());
    }

    #[test]
    fn symmetric_predictions_cancel() {
        let p = TargetPrediction::from_parts(
            vec![vec![0.6f64, 0.4], vec![0.4, 0.6]],
            WeightVector::uniform(2),
        )
        .unwrap();
        assert!(close(&p.combined, &[0.5, 0.5]));
        assert!((p.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn acceptance_rule() {
        let pos = [0.01f64, 0.99];
        let neg = [0.99f64, 0.01];
        assert_eq!(accept_pseudo_label(&pos, Some(&pos), 0.98), Some(1));
        assert_eq!(accept_pseudo_label(&pos, Some(&neg), 0.98), None);
        assert_eq!(accept_pseudo_label(&[0.03f64, 0.97], Some(&pos), 0.98), None);
        assert_eq!(accept_pseudo_label(&[0.03f64, 0.97], None, 0.98), None);
        assert_eq!(accept_pseudo_label(&pos, None, 0.98), Some(1));
        // Ties at the threshold are rejected.
        assert_eq!(accept_pseudo_label(&[0.25f64, 0.75], None, 0.75), None);
        assert_eq!(accept_pseudo_label(&pos, Some(&[0.02, 0.98]), 0.98), None);
    }

    fn model(k: usize) -> SharedPrivateModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let cfg = ModelConfig {
            input_dim: 6,
            hidden_dim: 5,
            feature_dim: 3,
            num_sources: k,
            num_classes: 2,
        };
        SharedPrivateModel::new(cfg, &mut rng).unwrap()
    }

    #[test]
    fn single_source_weight_is_one() {
        let m = model(1);
        let x = Matrix::filled(3, 6, 0.4);
        for mode in [WeightMode::Shared, WeightMode::Private] {
            for w in instance_weights(&m, &x, mode).unwrap() {
                assert_eq!(w.as_slice(), &[1.0]);
            }
        }
    }

    #[test]
    fn uniform_discriminator_gives_uniform_shared_weights() {
        let mut m = model(3);
        m.discriminator = Affine::zeros(3, 4);
        let x = Matrix::filled(2, 6, 0.4);
        for w in instance_weights(&m, &x, WeightMode::Shared).unwrap() {
            assert!(close(w.as_slice(), &[1.0 / 3.0; 3]));
        }
    }

    #[test]
    fn selection_requires_target_extractor_unless_bootstrapping() {
        let m = model(2);
        let x = Matrix::filled(2, 6, 0.4);
        assert!(pseudo_label_select(&m, &x, 0.98, false, WeightMode::Shared).is_err());
        assert!(pseudo_label_select(&m, &x, 0.98, true, WeightMode::Shared).is_ok());
        assert!(pseudo_label_select(&m, &x, 0.5, true, WeightMode::Shared).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("private".parse::<WeightMode>().unwrap(), WeightMode::Private);
        assert!("both".parse::<WeightMode>().is_err());
        assert_eq!(WeightMode::Shared.to_string(), "shared");
    }
}
