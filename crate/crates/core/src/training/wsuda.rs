//! The adversarial shared-private training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::early_stop::EarlyStopper;
use super::eval::{validation_accuracy, Validation};
use super::losses::{
    discriminator_objective, main_phase_objective, private_domain_accuracy, shared_domain_accuracy,
    BackwardScope, DomainBatch, LabeledBatch,
};
use super::metrics::EpochMetrics;
use super::sampler::Cycler;
use crate::data::{densify_batch, Corpus, DatasetBundle, Example};
use crate::error::{Error, Result};
use crate::model::{DomainLabel, ParamGroup, PrivatePath, SharedPrivateModel};
use crate::scalar::Scalar;

const DISCRIMINATOR_GROUPS: &[ParamGroup] = &[ParamGroup::Discriminator];
const MAIN_GROUPS: &[ParamGroup] = &[ParamGroup::Shared, ParamGroup::Private, ParamGroup::Classifier];

/// Result of a training run.
#[derive(Debug)]
pub struct WsudaOutcome<T> {
    /// Best-validation parameters, or the last good ones after an abort.
    pub model: SharedPrivateModel<T>,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<Error>,
}

struct DomainSampler<'a> {
    corpus: &'a Corpus,
    all: Cycler,
    labeled_idx: Vec<usize>,
    labeled: Cycler,
}

impl<'a> DomainSampler<'a> {
    fn new(corpus: &'a Corpus, rng: &mut ChaCha8Rng) -> Self {
        let labeled_idx: Vec<usize> = corpus
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label.is_some())
            .map(|(i, _)| i)
            .collect();
        Self {
            corpus,
            all: Cycler::new(corpus.examples.len(), rng),
            labeled: Cycler::new(labeled_idx.len(), rng),
            labeled_idx,
        }
    }

    fn domain_batch<T: Scalar>(&mut self, b: usize, dim: usize, rng: &mut ChaCha8Rng, domain: DomainLabel) -> Result<DomainBatch<T>> {
        let idx = self.all.next_batch(b, rng);
        let x = densify_batch(idx.iter().map(|&i| &self.corpus.examples[i].features), dim)?;
        Ok(DomainBatch { x, domain })
    }

    fn labeled_batch<T: Scalar>(&mut self, b: usize, dim: usize, rng: &mut ChaCha8Rng, j: usize) -> Result<LabeledBatch<T>> {
        let idx: Vec<&Example> = self
            .labeled
            .next_batch(b, rng)
            .into_iter()
            .map(|i| &self.corpus.examples[self.labeled_idx[i]])
            .collect();
        let x = densify_batch(idx.iter().map(|e| &e.features), dim)?;
        let labels = idx
            .iter()
            .map(|e| {
                e.label
                    .map(|l| l.class_index())
                    .ok_or_else(|| Error::Contract("unlabeled instance in a classifier batch".into()))
            })
            .collect::<Result<_>>()?;
        LabeledBatch::new(x, PrivatePath::Source(j), labels)
    }
}

/// Fixed per-domain subsets used to report discriminator accuracy.
fn monitor_batches<T: Scalar>(
    data: &DatasetBundle,
    per_domain: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DomainBatch<T>>> {
    let mut out = Vec::new();
    for d in 0..=data.num_sources() {
        let corpus = data.domain(DomainLabel(d)).expect("domain in range");
        let mut idx: Vec<usize> = (0..corpus.examples.len()).collect();
        idx.shuffle(rng);
        idx.truncate(per_domain.max(1));
        let x = densify_batch(idx.iter().map(|&i| &corpus.examples[i].features), dim)?;
        out.push(DomainBatch { x, domain: DomainLabel(d) });
    }
    Ok(out)
}

fn snapshot<T: Scalar>(model: &mut SharedPrivateModel<T>, groups: &[ParamGroup]) -> Vec<Vec<u64>> {
    model
        .blocks_in(groups)
        .into_iter()
        .map(|b| b.value.as_slice().iter().map(|v| v.f64().to_bits()).collect())
        .collect()
}

/// Runs `step` and, when `check` is set, verifies that blocks in `frozen` are bit-identical afterwards.
pub(crate) fn guarded<T: Scalar>(
    model: &mut SharedPrivateModel<T>,
    check: bool,
    frozen: &[ParamGroup],
    what: &str,
    step: impl FnOnce(&mut SharedPrivateModel<T>) -> Result<()>,
) -> Result<()> {
    let before = check.then(|| snapshot(model, frozen));
    step(model)?;
    if let Some(before) = before {
        if snapshot(model, frozen) != before {
            return Err(Error::Contract(format!("{what} modified frozen parameters")));
        }
    }
    Ok(())
}

fn finite<T: Scalar>(value: T, what: &str) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            block: what.into(),
            detail: format!("loss is {value}"),
        })
    }
}

/// Alternates `n_critic` discriminator updates with one update of the
/// extractors and classifier, epoch by epoch, with early stopping on
/// `validation`. `on_epoch` sees every metrics record as it is produced.
pub fn train_wsuda<T: Scalar>(
    mut model: SharedPrivateModel<T>,
    data: &DatasetBundle,
    validation: &Validation,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<WsudaOutcome<T>> {
    cfg.validate()?;
    let k = data.num_sources();
    if k != model.config().num_sources {
        return Err(Error::Config(format!(
            "model expects {} sources, data has {k}",
            model.config().num_sources
        )));
    }
    for d in 0..=k {
        if data.domain(DomainLabel(d)).is_none_or(|c| c.examples.is_empty()) {
            return Err(Error::Config(format!("domain {d} has no examples")));
        }
    }
    let mut outcome = WsudaOutcome {
        model: model.clone(),
        history: Vec::new(),
        best_epoch: None,
        aborted: None,
    };
    if cfg.max_epochs == 0 {
        return Ok(outcome);
    }

    let dim = model.config().input_dim;
    let b = cfg.batch_size;
    let lambda = T::c(cfg.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let monitor = monitor_batches::<T>(data, cfg.monitor_per_domain, dim, &mut rng)?;
    let mut samplers: Vec<DomainSampler> = (0..=k)
        .map(|d| DomainSampler::new(data.domain(DomainLabel(d)).expect("domain"), &mut rng))
        .collect();
    let largest = data.sources().iter().map(Corpus::num_labeled).max().unwrap_or(0);
    let steps_per_epoch = largest.div_ceil(b).max(1);

    let mut opt_d = cfg.optimizer();
    let mut opt_main = cfg.optimizer();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<SharedPrivateModel<T>> = None;
    let mut last_good = model.clone();

    'epochs: for epoch in 0..cfg.max_epochs {
        let mut sum_d = 0.0;
        let mut sum_main = 0.0;
        for _ in 0..steps_per_epoch {
            let step = (|| -> Result<(f64, f64)> {
                let mut loss_d = 0.0;
                for _ in 0..cfg.n_critic {
                    let all = (0..=k)
                        .map(|d| samplers[d].domain_batch::<T>(b, dim, &mut rng, DomainLabel(d)))
                        .collect::<Result<Vec<_>>>()?;
                    let obj = discriminator_objective(&model, &all, &all[..k])?;
                    loss_d += finite(obj.value, "discriminator loss")?.f64();
                    guarded(&mut model, cfg.check_frozen, MAIN_GROUPS, "discriminator step", |m| {
                        obj.backward(m, BackwardScope::DISCRIMINATOR)?;
                        opt_d.step(m.blocks_in(DISCRIMINATOR_GROUPS))
                    })?;
                }
                let sources = (0..k)
                    .map(|j| samplers[j].labeled_batch::<T>(b, dim, &mut rng, j))
                    .collect::<Result<Vec<_>>>()?;
                let all = (0..=k)
                    .map(|d| samplers[d].domain_batch::<T>(b, dim, &mut rng, DomainLabel(d)))
                    .collect::<Result<Vec<_>>>()?;
                let obj = main_phase_objective(&model, &sources, &all, lambda, cfg.include_private_coop_term)?;
                let loss_main = finite(obj.value, "main loss")?.f64();
                guarded(&mut model, cfg.check_frozen, DISCRIMINATOR_GROUPS, "main step", |m| {
                    obj.backward(m, BackwardScope::MAIN)?;
                    opt_main.step(m.blocks_in(MAIN_GROUPS))
                })?;
                Ok((loss_d / cfg.n_critic as f64, loss_main))
            })();
            match step {
                Ok((d, m)) => {
                    sum_d += d;
                    sum_main += m;
                }
                Err(e @ Error::NonFinite { .. }) => {
                    log::error!("epoch {epoch}: {e}; keeping last good parameters");
                    outcome.aborted = Some(e);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let metrics = EpochMetrics {
            epoch,
            loss_d: sum_d / steps_per_epoch as f64,
            loss_main: sum_main / steps_per_epoch as f64,
            shared_dom_acc: shared_domain_accuracy(&model, &monitor)?,
            private_dom_acc: private_domain_accuracy(&model, &monitor[..k])?,
            val_acc: validation_accuracy(&model, validation, cfg.weight_mode)?,
        };
        log::info!(
            "epoch {epoch}: loss_d {:.4} loss_main {:.4} shared_dom {:.3} private_dom {:.3} val {:.4}",
            metrics.loss_d,
            metrics.loss_main,
            metrics.shared_dom_acc,
            metrics.private_dom_acc,
            metrics.val_acc
        );
        on_epoch(&metrics);
        if stopper.observe(metrics.val_acc) {
            best = Some(model.clone());
            outcome.best_epoch = Some(epoch);
        }
        outcome.history.push(metrics);
        last_good = model.clone();
        if stopper.should_stop() {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    outcome.model = best.unwrap_or(last_good);
    Ok(outcome)
}
