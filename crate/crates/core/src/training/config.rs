use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighting::WeightMode;

/// Hyperparameters of the adversarial loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Adam moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the adversarial term in the main phase; must be positive.
    pub lambda: f64,
    /// Discriminator updates per main update.
    pub n_critic: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Adds the private extractors' cooperative domain term to the main phase.
    pub include_private_coop_term: bool,
    /// Weighting used when the validation set is scored through the ensemble.
    pub weight_mode: WeightMode,
    /// Examples per domain used to report discriminator accuracies.
    pub monitor_per_domain: usize,
    /// Bit-compares frozen parameter blocks around every optimizer step.
    pub check_frozen: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            lambda: 1.0,
            n_critic: 5,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            include_private_coop_term: false,
            weight_mode: WeightMode::Shared,
            monitor_per_domain: 200,
            check_frozen: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }

    pub(crate) fn optimizer<T: crate::Scalar>(&self) -> crate::numeric::Adam<T> {
        let mut opt = crate::numeric::Adam::new(T::c(self.lr));
        opt.beta1 = T::c(self.beta1);
        opt.beta2 = T::c(self.beta2);
        opt
    }
}

/// Initial values and knobs of the pseudo-label curriculum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoLabelConfig {
    /// Starting confidence threshold.
    pub delta: f64,
    /// Threshold decrement per round.
    pub eta: f64,
    /// Stop once the last two rounds together add at most this many labels.
    pub min_new: usize,
    /// Round 0 accepts on ensemble confidence alone.
    pub bootstrap: bool,
    /// Lower bound on optimizer steps per round.
    pub min_iter: usize,
    /// Also update the classifier head while training the target extractor.
    pub finetune_classifier: bool,
    pub finetune_max_epochs: usize,
    pub finetune_patience: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            delta: 0.98,
            eta: 0.02,
            min_new: 10,
            bootstrap: true,
            min_iter: 50,
            finetune_classifier: false,
            finetune_max_epochs: 30,
            finetune_patience: 5,
        }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.5 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0.5, 1], got {}", self.delta)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    /// Upper bound on curriculum rounds: the threshold reaches 0.5 by then.
    pub fn max_rounds(&self) -> usize {
        ((self.delta - 0.5) / self.eta - 1e-9).ceil().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.lr, 1e-4);
        c.validate().unwrap();
        let p = PseudoLabelConfig::default();
        assert_eq!((p.delta, p.eta, p.min_new), (0.98, 0.02, 10));
        assert_eq!(p.max_rounds(), 24);
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            TrainConfig { lambda: 0.0, ..Default::default() },
            TrainConfig { lambda: -1.0, ..Default::default() },
            TrainConfig { n_critic: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
        assert!(PseudoLabelConfig { delta: 0.5, ..Default::default() }.validate().is_err());
    }
}
