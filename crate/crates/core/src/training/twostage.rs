//! Pseudo-label curriculum for the target extractor, followed by finetuning.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{PseudoLabelConfig, TrainConfig};
use super::early_stop::EarlyStopper;
use super::eval::{accuracy, evaluate, map_chunks, predict_labels, LabeledSet, Predictor};
use super::losses::{classifier_objective, BackwardScope, LabeledBatch};
use super::sampler::Cycler;
use super::wsuda::guarded;
use crate::data::{densify_batch, FeatureVector};
use crate::error::{Error, Result};
use crate::model::{ParamGroup, PrivatePath, SharedPrivateModel};
use crate::numeric::Adam;
use crate::scalar::Scalar;
use crate::weighting::pseudo_label_select;

const THRESHOLD_TOL: f64 = 1e-9;

/// Bookkeeping of the curriculum: threshold schedule, accepted labels and the
/// still-unlabeled part of the pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelState {
    delta0: f64,
    eta: f64,
    min_new: usize,
    round: usize,
    accumulated: Vec<(usize, usize)>,
    remaining: Vec<usize>,
    tau_prev: Option<usize>,
    tau_prev2: Option<usize>,
}

impl PseudoLabelState {
    pub fn new(cfg: &PseudoLabelConfig, pool_size: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            delta0: cfg.delta,
            eta: cfg.eta,
            min_new: cfg.min_new,
            round: 0,
            accumulated: Vec::new(),
            remaining: (0..pool_size).collect(),
            tau_prev: None,
            tau_prev2: None,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Current threshold, computed from the round counter.
    pub fn delta(&self) -> f64 {
        self.delta0 - self.round as f64 * self.eta
    }

    /// Accepted `(pool index, label)` pairs in acceptance order.
    pub fn accumulated(&self) -> &[(usize, usize)] {
        &self.accumulated
    }

    /// Pool indices not yet labeled, in pool order.
    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    /// New-label counts of the last two rounds, most recent first.
    pub fn recent_counts(&self) -> (Option<usize>, Option<usize>) {
        (self.tau_prev, self.tau_prev2)
    }

    /// Moves `selected` (pool indices with labels) from the pool into the
    /// accepted set and advances the threshold by one step.
    pub fn absorb(&mut self, selected: &[(usize, usize)]) -> Result<()> {
        let mut take = vec![false; self.remaining.iter().max().map_or(0, |m| m + 1)];
        for &(i, _) in selected {
            if !self.remaining.contains(&i) || take[i] {
                return Err(Error::Contract(format!("pool index {i} is not unlabeled")));
            }
            take[i] = true;
        }
        self.remaining.retain(|&i| !take[i]);
        self.accumulated.extend_from_slice(selected);
        self.tau_prev2 = self.tau_prev;
        self.tau_prev = Some(selected.len());
        self.round += 1;
        Ok(())
    }

    /// Whether the loop ends: the last two rounds together added at most
    /// `min_new` labels, or the threshold reached one half.
    pub fn is_done(&self) -> bool {
        if self.delta() <= 0.5 + THRESHOLD_TOL {
            return true;
        }
        matches!((self.tau_prev, self.tau_prev2), (Some(a), Some(b)) if a + b <= self.min_new)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub delta: f64,
    pub selected: usize,
    pub accumulated: usize,
    pub remaining: usize,
    pub steps: usize,
}

#[derive(Debug)]
pub struct TwoStageOutcome<T> {
    pub model: SharedPrivateModel<T>,
    pub rounds: Vec<RoundRecord>,
    pub state: PseudoLabelState,
    /// Validation score per finetuning epoch.
    pub finetune_history: Vec<f64>,
    pub aborted: Option<Error>,
}

fn target_groups(pl: &PseudoLabelConfig) -> Vec<ParamGroup> {
    if pl.finetune_classifier {
        vec![ParamGroup::Target, ParamGroup::Classifier]
    } else {
        vec![ParamGroup::Target]
    }
}

fn frozen_groups(pl: &PseudoLabelConfig) -> Vec<ParamGroup> {
    let mut g = vec![ParamGroup::Shared, ParamGroup::Private, ParamGroup::Discriminator];
    if !pl.finetune_classifier {
        g.push(ParamGroup::Classifier);
    }
    g
}

struct TargetTrainer<'a, T> {
    pool: &'a [FeatureVector],
    opt: Adam<T>,
    rng: ChaCha8Rng,
    batch: usize,
    min_iter: usize,
    scope: BackwardScope,
    train: Vec<ParamGroup>,
    frozen: Vec<ParamGroup>,
    check: bool,
}

impl<T: Scalar> TargetTrainer<'_, T> {
    fn iterations(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            n.div_ceil(self.batch).max(self.min_iter)
        }
    }

    /// Trains on `labeled` for one pass (at least `min_iter` steps); returns the step count.
    fn run(&mut self, model: &mut SharedPrivateModel<T>, labeled: &[(usize, usize)]) -> Result<usize> {
        let steps = self.iterations(labeled.len());
        let mut cycler = Cycler::new(labeled.len(), &mut self.rng);
        let dim = model.config().input_dim;
        for _ in 0..steps {
            let idx = cycler.next_batch(self.batch, &mut self.rng);
            let x = densify_batch(idx.iter().map(|&i| &self.pool[labeled[i].0]), dim)?;
            let labels = idx.iter().map(|&i| labeled[i].1).collect();
            let batch = LabeledBatch::new(x, PrivatePath::Target, labels)?;
            let obj = classifier_objective(model, &batch)?;
            if !obj.value.is_finite() {
                return Err(Error::NonFinite {
                    block: "target loss".into(),
                    detail: format!("loss is {}", obj.value),
                });
            }
            let (opt, scope, train) = (&mut self.opt, self.scope, &self.train);
            guarded(model, self.check, &self.frozen, "target step", |m| {
                obj.backward(m, scope)?;
                opt.step(m.blocks_in(train))
            })?;
        }
        Ok(steps)
    }
}

/// Target-path fit to the pseudo-labels, used for model selection when no
/// labeled target data is available.
fn pseudo_label_fit<T: Scalar>(
    model: &SharedPrivateModel<T>,
    pool: &[FeatureVector],
    labeled: &[(usize, usize)],
) -> Result<f64> {
    let feats: Vec<FeatureVector> = labeled.iter().map(|&(i, _)| pool[i].clone()).collect();
    let labels: Vec<usize> = labeled.iter().map(|&(_, l)| l).collect();
    Ok(accuracy(&predict_labels(model, &feats, Predictor::TargetPath)?, &labels))
}

/// Adds a fresh target extractor to a trained model and fits it on
/// pseudo-labels accepted under a decaying confidence threshold, then
/// finetunes it on every accepted label with early stopping on
/// `validation` (target-path accuracy) or, without it, on the fit to the
/// pseudo-labels. Everything but the target extractor stays frozen unless
/// `pl.finetune_classifier` is set.
pub fn train_2studa<T: Scalar>(
    mut model: SharedPrivateModel<T>,
    pool: &[FeatureVector],
    validation: Option<&LabeledSet>,
    cfg: &TrainConfig,
    pl: &PseudoLabelConfig,
) -> Result<TwoStageOutcome<T>> {
    cfg.validate()?;
    let mut state = PseudoLabelState::new(pl, pool.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x2577_da7a);
    model.init_target_extractor(&mut rng);
    let frozen = frozen_groups(pl);
    let frozen_before = frozen_snapshot(&mut model, &frozen);

    let mut trainer = TargetTrainer {
        pool,
        opt: cfg.optimizer(),
        rng,
        batch: cfg.batch_size,
        min_iter: pl.min_iter,
        scope: if pl.finetune_classifier {
            BackwardScope { classifier: true, ..BackwardScope::TARGET_ONLY }
        } else {
            BackwardScope::TARGET_ONLY
        },
        train: target_groups(pl),
        frozen: frozen.clone(),
        check: cfg.check_frozen,
    };
    let dim = model.config().input_dim;
    let mut rounds = Vec::new();
    let mut aborted = None;
    let mut last_good = model.clone();

    while !state.is_done() {
        let delta = state.delta();
        let bootstrap = pl.bootstrap && state.round() == 0;
        let remaining: Vec<FeatureVector> = state.remaining().iter().map(|&i| pool[i].clone()).collect();
        let mut offset = 0;
        let selected: Vec<(usize, usize)> = map_chunks::<T, _>(&remaining, dim, |x| {
            let picks = pseudo_label_select(&model, x, T::c(delta), bootstrap, cfg.weight_mode)?;
            let base = offset;
            offset += x.rows();
            Ok(picks.into_iter().map(|(r, l)| (base + r, l)).collect())
        })?
        .into_iter()
        .map(|(r, l)| (state.remaining()[r], l))
        .collect();
        if selected.is_empty() {
            log::warn!("round {}: no pseudo-labels at threshold {delta:.2}", state.round());
        }
        let steps = match trainer.run(&mut model, &selected) {
            Ok(s) => s,
            Err(e @ Error::NonFinite { .. }) => {
                log::error!("round {}: {e}; keeping last good parameters", state.round());
                aborted = Some(e);
                model = last_good.clone();
                break;
            }
            Err(e) => return Err(e),
        };
        last_good = model.clone();
        state.absorb(&selected)?;
        let rec = RoundRecord {
            round: state.round() - 1,
            delta,
            selected: selected.len(),
            accumulated: state.accumulated().len(),
            remaining: state.remaining().len(),
            steps,
        };
        log::info!(
            "round {}: threshold {:.2}, {} new, {} total, {} left",
            rec.round,
            rec.delta,
            rec.selected,
            rec.accumulated,
            rec.remaining
        );
        rounds.push(rec);
    }

    let mut finetune_history = Vec::new();
    if aborted.is_none() && !state.accumulated().is_empty() {
        let labeled = state.accumulated().to_vec();
        let score = |m: &SharedPrivateModel<T>| -> Result<f64> {
            match validation {
                Some(v) => evaluate(m, v, Predictor::TargetPath),
                None => pseudo_label_fit(m, pool, &labeled),
            }
        };
        let mut stopper = EarlyStopper::new(pl.finetune_patience);
        let mut best = model.clone();
        let initial = score(&model)?;
        stopper.observe(initial);
        finetune_history.push(initial);
        for epoch in 0..pl.finetune_max_epochs {
            match trainer.run(&mut model, &labeled) {
                Ok(_) => {}
                Err(e @ Error::NonFinite { .. }) => {
                    log::error!("finetune epoch {epoch}: {e}; keeping best parameters");
                    aborted = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
            let s = score(&model)?;
            log::info!("finetune epoch {epoch}: score {s:.4}");
            finetune_history.push(s);
            if stopper.observe(s) {
                best = model.clone();
            }
            if stopper.should_stop() {
                break;
            }
        }
        model = best;
    }

    if frozen_snapshot(&mut model, &frozen) != frozen_before {
        return Err(Error::Contract("frozen parameters changed during target training".into()));
    }
    Ok(TwoStageOutcome {
        model,
        rounds,
        state,
        finetune_history,
        aborted,
    })
}

fn frozen_snapshot<T: Scalar>(model: &mut SharedPrivateModel<T>, groups: &[ParamGroup]) -> Vec<Vec<u64>> {
    model
        .blocks_in(groups)
        .into_iter()
        .map(|b| b.value.as_slice().iter().map(|v| v.f64().to_bits()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n: usize) -> PseudoLabelState {
        PseudoLabelState::new(&PseudoLabelConfig::default(), n).unwrap()
    }

    #[test]
    fn schedule_arithmetic() {
        let mut s = state(100);
        for _ in 0..3 {
            s.absorb(&[]).unwrap();
        }
        assert!((s.delta() - 0.92).abs() < 1e-12);
    }

    #[test]
    fn bookkeeping_moves_labels() {
        let mut s = state(30);
        s.absorb(&[(3, 1), (7, 0)]).unwrap();
        assert_eq!(s.accumulated().len(), 2);
        assert_eq!(s.remaining().len(), 28);
        assert!(!s.remaining().contains(&3));
        assert!(s.absorb(&[(3, 1)]).is_err());
        s.absorb(&(10..25).map(|i| (i, 1)).collect::<Vec<_>>()).unwrap();
        assert_eq!(s.accumulated().len() + s.remaining().len(), 30);
        assert!(!s.is_done());
        s.absorb(&[]).unwrap();
        // 15 + 0 > 10
        assert!(!s.is_done());
        s.absorb(&[(0, 0)]).unwrap();
        assert!(s.is_done());
    }

    #[test]
    fn terminates_within_twenty_four_rounds() {
        let mut s = PseudoLabelState::new(
            &PseudoLabelConfig { min_new: 0, ..Default::default() },
            10_000,
        )
        .unwrap();
        let mut next = 0;
        while !s.is_done() {
            s.absorb(&[(next, 0)]).unwrap();
            next += 1;
        }
        assert_eq!(s.round(), 24);
        assert!(s.delta() > 0.5 - 1e-9);
    }
}
