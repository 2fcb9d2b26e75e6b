//! Training objectives with hand-derived gradients.
//!
//! Every objective is evaluated into an [`Objective`]: the scalar loss plus a
//! tape of forward traces and logit gradients. Calling
//! [`Objective::backward`] replays the tape into the model's gradient
//! buffers, restricted to a [`BackwardScope`].

use crate::error::{Error, Result};
use crate::model::{DomainLabel, ExtractorId, ExtractorTrace, PrivatePath, SharedPrivateModel};
use crate::numeric::layers::{softmax, softmax_nll_grad, LOG_FLOOR};
use crate::numeric::Matrix;
use crate::scalar::Scalar;

/// Rows drawn from a single domain of the union corpus.
#[derive(Clone, Debug)]
pub struct DomainBatch<T> {
    pub x: Matrix<T>,
    pub domain: DomainLabel,
}

/// Class-labeled rows routed through one private path.
#[derive(Clone, Debug)]
pub struct LabeledBatch<T> {
    pub x: Matrix<T>,
    pub path: PrivatePath,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledBatch<T> {
    pub fn new(x: Matrix<T>, path: PrivatePath, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::Contract(format!(
                "{} labels for a batch of {} rows",
                labels.len(),
                x.rows()
            )));
        }
        Ok(Self { x, path, labels })
    }
}

/// Which gradient buffers a backward pass writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardScope {
    pub classifier: bool,
    pub discriminator: bool,
    pub extractors: ExtractorScope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractorScope {
    None,
    All,
    Only(ExtractorId),
}

impl ExtractorScope {
    fn includes(self, id: ExtractorId) -> bool {
        match self {
            ExtractorScope::None => false,
            ExtractorScope::All => true,
            ExtractorScope::Only(only) => only == id,
        }
    }
}

impl BackwardScope {
    /// Every parameter the objective touches.
    pub const FULL: BackwardScope = BackwardScope {
        classifier: true,
        discriminator: true,
        extractors: ExtractorScope::All,
    };
    /// Discriminator iterations: only D's buffers.
    pub const DISCRIMINATOR: BackwardScope = BackwardScope {
        classifier: false,
        discriminator: true,
        extractors: ExtractorScope::None,
    };
    /// Main iterations: extractors and C, with D frozen.
    pub const MAIN: BackwardScope = BackwardScope {
        classifier: true,
        discriminator: false,
        extractors: ExtractorScope::All,
    };
    /// Target-extractor training with everything else frozen.
    pub const TARGET_ONLY: BackwardScope = BackwardScope {
        classifier: false,
        discriminator: false,
        extractors: ExtractorScope::Only(ExtractorId::Private(PrivatePath::Target)),
    };
}

enum Step<T> {
    Discriminator {
        extractor: ExtractorId,
        trace: ExtractorTrace<T>,
        grad_logits: Matrix<T>,
    },
    Classifier {
        shared: ExtractorTrace<T>,
        path: PrivatePath,
        private: ExtractorTrace<T>,
        input: Matrix<T>,
        grad_logits: Matrix<T>,
    },
}

/// A loss value with the information needed to backpropagate it.
pub struct Objective<T> {
    pub value: T,
    steps: Vec<Step<T>>,
}

impl<T: Scalar> Objective<T> {
    fn new() -> Self {
        Self {
            value: T::zero(),
            steps: Vec::new(),
        }
    }

    /// Adds `scale * Σ -ln D(E(x))[domain]` over the batch rows.
    fn push_domain_term(
        &mut self,
        model: &SharedPrivateModel<T>,
        extractor: ExtractorId,
        batch: &DomainBatch<T>,
        scale: T,
    ) -> Result<()> {
        let trace = model.extractor(extractor)?.forward_trace(&batch.x)?;
        let d = model.discriminate(&trace.output)?;
        let labels = vec![batch.domain.index(); batch.x.rows()];
        self.value += scale * nll_sum(&d, &labels);
        let grad_logits = softmax_nll_grad(&d, &labels, scale);
        self.steps.push(Step::Discriminator {
            extractor,
            trace,
            grad_logits,
        });
        Ok(())
    }

    fn push_class_term(
        &mut self,
        model: &SharedPrivateModel<T>,
        batch: &LabeledBatch<T>,
        scale: T,
    ) -> Result<()> {
        let classes = model.config().num_classes;
        if let Some(bad) = batch.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Contract(format!("class label {bad} out of range")));
        }
        let shared = model.shared.forward_trace(&batch.x)?;
        let private = model
            .extractor(ExtractorId::Private(batch.path))?
            .forward_trace(&batch.x)?;
        let input = Matrix::hconcat(&shared.output, &private.output)?;
        let p = softmax(&model.classifier.forward(&input)?);
        self.value += scale * nll_sum(&p, &batch.labels);
        let grad_logits = softmax_nll_grad(&p, &batch.labels, scale);
        self.steps.push(Step::Classifier {
            shared,
            path: batch.path,
            private,
            input,
            grad_logits,
        });
        Ok(())
    }

    /// Accumulates gradients into `model` for the parameters in `scope`.
    pub fn backward(self, model: &mut SharedPrivateModel<T>, scope: BackwardScope) -> Result<()> {
        let fd = model.config().feature_dim;
        for step in self.steps {
            match step {
                Step::Discriminator {
                    extractor,
                    trace,
                    grad_logits,
                } => {
                    let into_extractor = scope.extractors.includes(extractor);
                    let gz = model.discriminator.backward(
                        &trace.output,
                        &grad_logits,
                        scope.discriminator,
                        into_extractor,
                    )?;
                    if let Some(gz) = gz {
                        model.extractor_mut(extractor)?.backward(&trace, &gz)?;
                    }
                }
                Step::Classifier {
                    shared,
                    path,
                    private,
                    input,
                    grad_logits,
                } => {
                    let into_shared = scope.extractors.includes(ExtractorId::Shared);
                    let into_private = scope.extractors.includes(ExtractorId::Private(path));
                    let g = model.classifier.backward(
                        &input,
                        &grad_logits,
                        scope.classifier,
                        into_shared || into_private,
                    )?;
                    if let Some(g) = g {
                        let (gs, gp) = g.split_cols(fd);
                        if into_shared {
                            model.shared.backward(&shared, &gs)?;
                        }
                        if into_private {
                            model
                                .extractor_mut(ExtractorId::Private(path))?
                                .backward(&private, &gp)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn nll_sum<T: Scalar>(probs: &Matrix<T>, labels: &[usize]) -> T {
    let floor = T::c(LOG_FLOOR);
    labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(floor).ln())
        .sum()
}

fn total_rows<T: Scalar, B>(batches: &[B], rows: impl Fn(&B) -> &Matrix<T>) -> usize {
    batches.iter().map(|b| rows(b).rows()).sum()
}

fn inv_count<T: Scalar>(n: usize) -> T {
    if n == 0 {
        T::zero()
    } else {
        T::one() / T::from_count(n)
    }
}

fn check_source_domain<T: Scalar>(model: &SharedPrivateModel<T>, domain: DomainLabel) -> Result<usize> {
    let k = model.config().num_sources;
    if domain.index() >= k {
        return Err(Error::Contract(format!(
            "domain {} routed to a private extractor, but only sources 0..{k} have one",
            domain.index()
        )));
    }
    Ok(domain.index())
}

/// Discriminator objective: mean domain cross-entropy of D on shared features
/// of the all-domain batches plus mean domain cross-entropy of D on private
/// features of the source batches, each routed through its own extractor.
pub fn discriminator_objective<T: Scalar>(
    model: &SharedPrivateModel<T>,
    all_domains: &[DomainBatch<T>],
    source_private: &[DomainBatch<T>],
) -> Result<Objective<T>> {
    let mut obj = Objective::new();
    let scale_s = inv_count::<T>(total_rows(all_domains, |b| &b.x));
    for b in all_domains {
        if b.domain.index() > model.config().num_sources {
            return Err(Error::Contract(format!("unknown domain {}", b.domain.index())));
        }
        obj.push_domain_term(model, ExtractorId::Shared, b, scale_s)?;
    }
    let scale_p = inv_count::<T>(total_rows(source_private, |b| &b.x));
    for b in source_private {
        let j = check_source_domain(model, b.domain)?;
        obj.push_domain_term(model, ExtractorId::Private(PrivatePath::Source(j)), b, scale_p)?;
    }
    Ok(obj)
}

pub fn discriminator_loss<T: Scalar>(
    model: &SharedPrivateModel<T>,
    all_domains: &[DomainBatch<T>],
    source_private: &[DomainBatch<T>],
) -> Result<T> {
    Ok(discriminator_objective(model, all_domains, source_private)?.value)
}

/// Mean cross-entropy of `C(E_s(x), E_path(x))` against the batch labels.
pub fn classifier_objective<T: Scalar>(
    model: &SharedPrivateModel<T>,
    batch: &LabeledBatch<T>,
) -> Result<Objective<T>> {
    let mut obj = Objective::new();
    obj.push_class_term(model, batch, inv_count(batch.x.rows()))?;
    Ok(obj)
}

pub fn classifier_loss<T: Scalar>(model: &SharedPrivateModel<T>, batch: &LabeledBatch<T>) -> Result<T> {
    Ok(classifier_objective(model, batch)?.value)
}

/// Main-phase objective of the adversarial loop:
///
/// `Σ_j L_C(j) − λ · L_D(D(E_s(x)); d)` over the all-domain batches, plus,
/// when `private_coop` is set, the mean domain cross-entropy of D on the
/// private features of the source batches.
pub fn main_phase_objective<T: Scalar>(
    model: &SharedPrivateModel<T>,
    source_batches: &[LabeledBatch<T>],
    all_domains: &[DomainBatch<T>],
    lambda: T,
    private_coop: bool,
) -> Result<Objective<T>> {
    if lambda < T::zero() {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let mut obj = Objective::new();
    for b in source_batches {
        if let PrivatePath::Source(j) = b.path {
            check_source_domain(model, DomainLabel(j))?;
        }
        obj.push_class_term(model, b, inv_count(b.x.rows()))?;
    }
    let scale = -lambda * inv_count::<T>(total_rows(all_domains, |b| &b.x));
    if lambda != T::zero() {
        for b in all_domains {
            obj.push_domain_term(model, ExtractorId::Shared, b, scale)?;
        }
    }
    if private_coop {
        let scale_p = inv_count::<T>(total_rows(source_batches, |b| &b.x));
        for b in source_batches {
            let PrivatePath::Source(j) = b.path else {
                return Err(Error::Contract("cooperative term needs source batches".into()));
            };
            let db = DomainBatch {
                x: b.x.clone(),
                domain: DomainLabel(j),
            };
            obj.push_domain_term(model, ExtractorId::Private(b.path), &db, scale_p)?;
        }
    }
    Ok(obj)
}

pub fn main_phase_loss<T: Scalar>(
    model: &SharedPrivateModel<T>,
    source_batches: &[LabeledBatch<T>],
    all_domains: &[DomainBatch<T>],
    lambda: T,
    private_coop: bool,
) -> Result<T> {
    Ok(main_phase_objective(model, source_batches, all_domains, lambda, private_coop)?.value)
}

/// Fraction of rows where D's argmax on shared features equals the domain.
pub fn shared_domain_accuracy<T: Scalar>(
    model: &SharedPrivateModel<T>,
    batches: &[DomainBatch<T>],
) -> Result<f64> {
    domain_accuracy(model, batches, |_| ExtractorId::Shared)
}

/// Fraction of source rows where D's argmax on their own private features
/// equals the domain.
pub fn private_domain_accuracy<T: Scalar>(
    model: &SharedPrivateModel<T>,
    batches: &[DomainBatch<T>],
) -> Result<f64> {
    for b in batches {
        check_source_domain(model, b.domain)?;
    }
    domain_accuracy(model, batches, |d| {
        ExtractorId::Private(PrivatePath::Source(d.index()))
    })
}

fn domain_accuracy<T: Scalar>(
    model: &SharedPrivateModel<T>,
    batches: &[DomainBatch<T>],
    route: impl Fn(DomainLabel) -> ExtractorId,
) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for b in batches {
        let z = model.extractor(route(b.domain))?.forward(&b.x)?;
        let d = model.discriminate(&z)?;
        hit += d.argmax_rows().iter().filter(|&&a| a == b.domain.index()).count();
        n += b.x.rows();
    }
    Ok(if n == 0 { 0.0 } else { hit as f64 / n as f64 })
}
