//! Trains both frameworks on the generated benchmark and prints test accuracies.
//!
//! `cargo run --release -p msuda-core --example synth_run -- [seed]`

use msuda_core::data::SynthSpec;
use msuda_core::experiment::{benchmark_model_config, benchmark_train_config, Experiment, SplitConfig};
use msuda_core::model::SharedPrivateModel;
use msuda_core::training::{evaluate, train_2studa, train_wsuda, Predictor, PseudoLabelConfig};
use msuda_core::weighting::WeightMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msuda_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SynthSpec { seed, ..Default::default() };
    let (exp, vocab) = Experiment::synthetic(&spec, &SplitConfig { seed, ..Default::default() })?;
    let model = SharedPrivateModel::<f64>::new(
        benchmark_model_config(vocab.len(), spec.num_sources),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )?;
    let cfg = benchmark_train_config(seed);
    let ws = train_wsuda(model, &exp.bundle, &exp.validation(true)?, &cfg, |m| {
        println!(
            "epoch {:2} loss_d {:.4} loss_main {:.4} shared_dom {:.3} private_dom {:.3} val {:.3}",
            m.epoch, m.loss_d, m.loss_main, m.shared_dom_acc, m.private_dom_acc, m.val_acc
        )
    })?;
    println!("best epoch {:?}", ws.best_epoch);
    let test = &exp.target_test;
    for (name, p) in [
        ("weighted (shared)", Predictor::Ensemble(WeightMode::Shared)),
        ("weighted (private)", Predictor::Ensemble(WeightMode::Private)),
        ("uniform", Predictor::Uniform),
    ] {
        println!("{name:20} {:.3}", evaluate(&ws.model, test, p)?);
    }
    for j in 0..spec.num_sources {
        println!("source {j:<13} {:.3}", evaluate(&ws.model, test, Predictor::Source(j))?);
    }
    let st = train_2studa(ws.model, &exp.pool_features(), Some(&exp.target_val), &cfg, &PseudoLabelConfig::default())?;
    for r in &st.rounds {
        println!("round {:2} delta {:.2} selected {:4} accumulated {:4}", r.round, r.delta, r.selected, r.accumulated);
    }
    println!("two-stage target path {:.3}", evaluate(&st.model, test, Predictor::TargetPath)?);
    Ok(())
}
