use msuda_core::data::SynthSpec;
use msuda_core::experiment::{benchmark_model_config, benchmark_train_config, Experiment, SplitConfig};
use msuda_core::model::SharedPrivateModel;
use msuda_core::training::{train_2studa, train_wsuda, PseudoLabelConfig, TrainConfig, Validation};
use msuda_core::{Error, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny() -> (Experiment, usize) {
    let spec = SynthSpec {
        docs_per_domain: 80,
        ..Default::default()
    };
    let (exp, vocab) = Experiment::synthetic(&spec, &SplitConfig::default()).unwrap();
    (exp, vocab.len())
}

fn fresh(dim: usize, seed: u64) -> Model {
    SharedPrivateModel::new(benchmark_model_config(dim, 3), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn short(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 2,
        n_critic: 2,
        monitor_per_domain: 20,
        ..benchmark_train_config(seed)
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (exp, dim) = tiny();
    let model = fresh(dim, 1);
    let cfg = TrainConfig {
        max_epochs: 0,
        ..short(1)
    };
    let out = train_wsuda(model.clone(), &exp.bundle, &exp.validation(true).unwrap(), &cfg, |_| {}).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.model, model);
}

#[test]
fn seeded_runs_are_bit_identical() {
    let (exp, dim) = tiny();
    let val = exp.validation(true).unwrap();
    let run = || {
        let mut seen = Vec::new();
        let out = train_wsuda(fresh(dim, 3), &exp.bundle, &val, &short(3), |m| seen.push(m.clone())).unwrap();
        assert_eq!(seen, out.history);
        out
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    let bits = |m: &Model| {
        m.named_parameters()
            .into_iter()
            .flat_map(|(_, v)| v.into_vec())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.model), bits(&b.model));
}

#[test]
fn frozen_blocks_hold_during_each_phase() {
    let (exp, dim) = tiny();
    let cfg = TrainConfig {
        check_frozen: true,
        ..short(4)
    };
    let out = train_wsuda(fresh(dim, 4), &exp.bundle, &exp.validation(true).unwrap(), &cfg, |_| {}).unwrap();
    assert!(out.aborted.is_none());
    for m in &out.history {
        for v in [m.shared_dom_acc, m.private_dom_acc, m.val_acc] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(m.loss_d.is_finite() && m.loss_main.is_finite());
    }
}

#[test]
fn divergence_aborts_with_finite_parameters() {
    let (exp, dim) = tiny();
    let cfg = TrainConfig {
        lr: 1e300,
        ..short(5)
    };
    let out = train_wsuda(fresh(dim, 5), &exp.bundle, &exp.validation(true).unwrap(), &cfg, |_| {}).unwrap();
    assert!(matches!(out.aborted, Some(Error::NonFinite { .. })));
    assert!(out.model.named_parameters().iter().all(|(_, m)| m.is_finite()));
}

#[test]
fn source_holdout_validation_trains() {
    let spec = SynthSpec {
        docs_per_domain: 80,
        ..Default::default()
    };
    let split = SplitConfig {
        source_holdout: 0.25,
        ..Default::default()
    };
    let (exp, vocab) = Experiment::synthetic(&spec, &split).unwrap();
    let val = exp.validation(false).unwrap();
    assert!(matches!(val, Validation::SourceHeldOut(_)));
    let out = train_wsuda(fresh(vocab.len(), 6), &exp.bundle, &val, &short(6), |_| {}).unwrap();
    assert_eq!(out.history.len(), 2);
}

#[test]
fn invalid_config_rejected() {
    let (exp, dim) = tiny();
    let cfg = TrainConfig {
        lambda: 0.0,
        ..short(1)
    };
    let r = train_wsuda(fresh(dim, 1), &exp.bundle, &exp.validation(true).unwrap(), &cfg, |_| {});
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn curriculum_freezes_everything_but_the_target_extractor() {
    let (exp, dim) = tiny();
    let ws = train_wsuda(fresh(dim, 7), &exp.bundle, &exp.validation(true).unwrap(), &short(7), |_| {}).unwrap();
    let before = ws.model.clone();
    let cfg = TrainConfig {
        check_frozen: true,
        ..short(7)
    };
    let pl = PseudoLabelConfig {
        min_iter: 5,
        finetune_max_epochs: 2,
        ..Default::default()
    };
    let out = train_2studa(ws.model, &exp.pool_features(), Some(&exp.target_val), &cfg, &pl).unwrap();
    assert!(out.model.has_target_extractor());
    let after: Vec<_> = out
        .model
        .named_parameters()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("target."))
        .collect();
    assert_eq!(after, before.named_parameters());

    assert!(out.rounds.len() <= 24);
    let mut total = 0;
    for (r, rec) in out.rounds.iter().enumerate() {
        assert_eq!(rec.round, r);
        assert!((rec.delta - (0.98 - r as f64 * 0.02)).abs() < 1e-9);
        total += rec.selected;
        assert_eq!(rec.accumulated, total);
        assert_eq!(rec.remaining + total, exp.pool_features().len());
    }
    assert_eq!(out.state.accumulated().len(), total);
}

#[test]
fn curriculum_without_bootstrap_still_progresses() {
    let (exp, dim) = tiny();
    let model = fresh(dim, 8);
    let pl = PseudoLabelConfig {
        bootstrap: false,
        min_iter: 5,
        finetune_max_epochs: 1,
        ..Default::default()
    };
    let out = train_2studa(model, &exp.pool_features(), None, &short(8), &pl).unwrap();
    // A fresh target path is never that confident, so nothing is accepted
    // and the loop stops after two empty rounds.
    assert_eq!(out.rounds.len(), 2);
    assert!(out.state.accumulated().is_empty());
}

#[test]
fn discriminator_alone_fits_separable_frozen_features() {
    use msuda_core::model::{DomainLabel, ModelConfig, ParamGroup};
    use msuda_core::training::losses::{discriminator_objective, BackwardScope, DomainBatch};
    use msuda_core::{Adam, Matrix};
    use rand::Rng;

    let cfg = ModelConfig {
        input_dim: 8,
        hidden_dim: 16,
        feature_dim: 8,
        num_sources: 3,
        num_classes: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut m = SharedPrivateModel::<f64>::new(cfg, &mut rng).unwrap();
    // Each domain lives on its own pair of input coordinates.
    let batches: Vec<DomainBatch<f64>> = (0..4)
        .map(|d| {
            let mut x = Matrix::zeros(16, 8);
            for r in 0..16 {
                x.set(r, 2 * d, 2.0 + rng.random_range(0.0..0.2));
                x.set(r, 2 * d + 1, 2.0 + rng.random_range(0.0..0.2));
            }
            DomainBatch { x, domain: DomainLabel(d) }
        })
        .collect();
    let frozen: Vec<_> = m
        .named_parameters()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("discriminator"))
        .collect();
    let mut opt = Adam::new(1e-2);
    let mut loss = f64::INFINITY;
    for _ in 0..3000 {
        let obj = discriminator_objective(&m, &batches, &batches[..3]).unwrap();
        loss = obj.value;
        if loss < 0.01 {
            break;
        }
        obj.backward(&mut m, BackwardScope::DISCRIMINATOR).unwrap();
        opt.step(m.blocks_in(&[ParamGroup::Discriminator])).unwrap();
    }
    assert!(loss < 0.05, "discriminator loss {loss}");
    let after: Vec<_> = m
        .named_parameters()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("discriminator"))
        .collect();
    assert_eq!(frozen, after);
}
