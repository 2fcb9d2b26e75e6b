use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use msuda_core::data::blitzer::{parse_file, parse_labels};
use msuda_core::data::synth::generate;
use msuda_core::data::{Corpus, FeatureVector, Polarity, RawDoc, Vocabulary};
use msuda_core::experiment::Experiment;
use msuda_core::model::{DomainLabel, ModelConfig, SharedPrivateModel};
use msuda_core::training::eval::map_chunks;
use msuda_core::training::metrics::append_jsonl;
use msuda_core::training::{
    accuracy, predict_labels, train_2studa, train_wsuda, LabeledSet, Predictor, RoundRecord,
};
use msuda_core::weighting::{predict_target, WeightMode};
use msuda_core::{Error as CoreError, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Framework, Layout, RunConfig};

pub const MANIFEST: &str = "manifest.json";
pub const VOCAB: &str = "vocab.txt";
pub const CHECKPOINT: &str = "model.ckpt";
pub const WS_CHECKPOINT: &str = "ws.ckpt";
pub const METRICS: &str = "metrics.jsonl";
pub const ROUNDS: &str = "rounds.jsonl";
pub const CONFIG_ECHO: &str = "config.toml";
pub const REPORT: &str = "report.json";

/// What a trained run directory holds, enough to reuse its checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub framework: Framework,
    pub model: ModelConfig,
    /// Domain names in domain-label order: sources first, target last.
    pub domains: Vec<String>,
    pub target: String,
    pub vocab_hash: String,
    pub vocab_file: String,
    pub checkpoint: String,
    pub weight_mode: WeightMode,
    pub best_epoch: Option<usize>,
    pub aborted: bool,
}

impl Manifest {
    pub fn read(run: &Path) -> Result<Self> {
        let path = run.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| CoreError::Data(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text).map_err(CoreError::from)?)
    }

    fn write(&self, run: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(CoreError::from)?;
        fs::write(run.join(MANIFEST), text + "\n").map_err(CoreError::from)?;
        Ok(())
    }

    /// Loads the run's vocabulary (or `other`) and refuses one whose hash
    /// differs from the manifest.
    pub fn vocabulary(&self, run: &Path, other: Option<&Path>) -> Result<Vocabulary> {
        let path = other.map_or_else(|| run.join(&self.vocab_file), Path::to_path_buf);
        let vocab = Vocabulary::load(&path)
            .map_err(|e| CoreError::Data(format!("cannot load vocabulary {}: {e}", path.display())))?;
        if vocab.hash() != self.vocab_hash {
            return Err(CoreError::Data(format!(
                "vocabulary {} (hash {}) does not match the model's vocabulary (hash {}); \
                 features would map to the wrong input units",
                path.display(),
                &vocab.hash()[..12],
                &self.vocab_hash[..12.min(self.vocab_hash.len())]
            ))
            .into());
        }
        Ok(vocab)
    }

    pub fn load_model(&self, run: &Path) -> Result<Model> {
        Ok(Model::load(self.model.clone(), run.join(&self.checkpoint))?)
    }
}

fn data_err(msg: String) -> anyhow::Error {
    CoreError::Data(msg).into()
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| data_err(format!("cannot create output directory {}: {e}", dir.display())))
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let text = cfg.to_toml();
    log::info!("resolved configuration:\n{text}");
    fs::write(dir.join(CONFIG_ECHO), text).map_err(CoreError::from)?;
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    cfg.synth.validate()?;
    create_out(&cfg.out)?;
    let corpora = generate(&cfg.synth)?;
    let written = corpora.write(&cfg.out)?;
    echo_config(cfg, &cfg.out)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<RawDoc>> {
    if !path.is_file() {
        return Err(data_err(format!("corpus {} not found", path.display())));
    }
    Ok(parse_file(path)?)
}

/// Source names for the `corpora` layout: configured, or every `*.review`
/// file in the directory except the target, sorted.
fn source_names(cfg: &RunConfig) -> Result<Vec<String>> {
    if !cfg.data.sources.is_empty() {
        return Ok(cfg.data.sources.clone());
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(&cfg.data.dir).map_err(CoreError::from)? {
        let path = entry.map_err(CoreError::from)?.path();
        if path.extension().is_some_and(|e| e == "review") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if stem != cfg.target {
                    names.push(stem.to_string());
                }
            }
        }
    }
    names.sort();
    Ok(names)
}

fn read_target_labels(path: &Path, n: usize) -> Result<Vec<Option<Polarity>>> {
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    let labels = parse_labels(&text)?;
    if labels.len() != n {
        return Err(data_err(format!(
            "{} has {} labels for {n} target documents",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels.into_iter().map(Some).collect())
}

/// Loads the configured corpora into an experiment.
pub fn load_experiment(cfg: &RunConfig) -> Result<(Experiment, Vocabulary, Vec<String>)> {
    if cfg.data.dir.as_os_str().is_empty() {
        bail!(ConfigError("data.dir is not set".into()));
    }
    if !cfg.data.dir.is_dir() {
        bail!(ConfigError(format!("data directory {} does not exist", cfg.data.dir.display())));
    }
    match cfg.data.layout {
        Layout::Reviews => {
            let (exp, vocab) = Experiment::amazon(&cfg.data.dir, &cfg.target, cfg.vocab_size, &cfg.split)?;
            let mut names: Vec<String> = exp.bundle.sources().iter().map(|c| c.name.clone()).collect();
            names.push(cfg.target.clone());
            Ok((exp, vocab, names))
        }
        Layout::Corpora => {
            let sources = source_names(cfg)?;
            if sources.is_empty() {
                bail!(ConfigError(format!(
                    "no source corpora configured or found in {}",
                    cfg.data.dir.display()
                )));
            }
            let source_docs = sources
                .iter()
                .map(|s| read_corpus(&cfg.data.dir.join(format!("{s}.review"))))
                .collect::<Result<Vec<_>>>()?;
            let mut target_docs = read_corpus(&cfg.data.dir.join(format!("{}.review", cfg.target)))?;
            let sidecar = if cfg.data.target_labels.as_os_str().is_empty() {
                let p = cfg.data.dir.join(format!("{}.labels", cfg.target));
                p.exists().then_some(p)
            } else {
                Some(cfg.data.target_labels.clone())
            };
            let labels = match sidecar {
                Some(p) => read_target_labels(&p, target_docs.len())?,
                None => target_docs.iter().map(|d| d.label).collect(),
            };
            for d in &mut target_docs {
                d.label = None;
            }
            let mut all: Vec<&[RawDoc]> = source_docs.iter().map(Vec::as_slice).collect();
            all.push(&target_docs);
            let vocab = Vocabulary::build(all, cfg.vocab_size);
            let corpora = sources
                .iter()
                .zip(&source_docs)
                .enumerate()
                .map(|(j, (name, docs))| Corpus::from_raw(name, docs, DomainLabel(j), &vocab))
                .collect();
            let target: Vec<FeatureVector> = target_docs.iter().map(|d| vocab.vectorize(d)).collect();
            let exp = Experiment::new(corpora, &cfg.target, target, labels, &cfg.split)?;
            let mut names = sources;
            names.push(cfg.target.clone());
            Ok((exp, vocab, names))
        }
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(CoreError::from)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(CoreError::from)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainReport {
    framework: Framework,
    target: String,
    test_examples: usize,
    /// Accuracies on the labeled target test split, by predictor.
    accuracy: Vec<(String, f64)>,
    rounds: Option<Vec<RoundRecord>>,
    pseudo_labels: Option<usize>,
}

fn predictors(k: usize, mode: WeightMode, with_target: bool) -> Vec<(String, Predictor)> {
    let mut out = vec![
        (format!("ensemble_{mode}"), Predictor::Ensemble(mode)),
        ("uniform".to_string(), Predictor::Uniform),
    ];
    if with_target {
        out.insert(0, ("target_path".to_string(), Predictor::TargetPath));
    }
    out.extend((0..k).map(|j| (format!("source_{}", j + 1), Predictor::Source(j))));
    out
}

fn score(model: &Model, set: &LabeledSet, mode: WeightMode) -> Result<Vec<(String, f64)>> {
    let k = model.config().num_sources;
    predictors(k, mode, model.has_target_extractor())
        .into_iter()
        .map(|(name, p)| Ok((name, accuracy(&predict_labels(model, &set.features, p)?, &set.labels))))
        .collect()
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (exp, vocab, names) = load_experiment(cfg)?;
    let out = &cfg.out;
    create_out(out)?;
    echo_config(cfg, out)?;
    vocab.save(out.join(VOCAB))?;
    let k = exp.bundle.num_sources();
    let model_cfg = ModelConfig {
        input_dim: vocab.len(),
        hidden_dim: cfg.model.hidden_dim,
        feature_dim: cfg.model.feature_dim,
        num_sources: k,
        num_classes: 2,
    };
    let mut manifest = Manifest {
        framework: cfg.framework,
        model: model_cfg.clone(),
        domains: names.clone(),
        target: cfg.target.clone(),
        vocab_hash: vocab.hash(),
        vocab_file: VOCAB.into(),
        checkpoint: CHECKPOINT.into(),
        weight_mode: cfg.train.weight_mode,
        best_epoch: None,
        aborted: false,
    };

    let start_from_run = cfg.framework == Framework::TwoStage && !cfg.ws_run.as_os_str().is_empty();
    let (ws_model, abort) = if start_from_run {
        let prior = Manifest::read(&cfg.ws_run)?;
        if prior.vocab_hash != manifest.vocab_hash || prior.domains != names || prior.model != model_cfg {
            return Err(data_err(format!(
                "run {} was trained on different data or sizes than this configuration",
                cfg.ws_run.display()
            )));
        }
        log::info!("starting from {}", cfg.ws_run.display());
        (prior.load_model(&cfg.ws_run)?, None)
    } else {
        let validation = exp.validation(true).map_err(|e| match e {
            CoreError::Config(m) => anyhow::Error::new(ConfigError(m)),
            other => other.into(),
        })?;
        let model = SharedPrivateModel::new(model_cfg.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        let metrics = out.join(METRICS);
        if metrics.exists() {
            fs::remove_file(&metrics).map_err(CoreError::from)?;
        }
        let mut write_err = None;
        let ws = train_wsuda(model, &exp.bundle, &validation, &cfg.train, |m| {
            if let Err(e) = append_jsonl(&metrics, m) {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        manifest.best_epoch = ws.best_epoch;
        ws.model.save(out.join(WS_CHECKPOINT))?;
        (ws.model, ws.aborted)
    };

    let mut report = TrainReport {
        framework: cfg.framework,
        target: cfg.target.clone(),
        test_examples: exp.target_test.len(),
        accuracy: Vec::new(),
        rounds: None,
        pseudo_labels: None,
    };
    let (final_model, abort) = match (cfg.framework, abort) {
        (Framework::Ws, abort) | (Framework::TwoStage, abort @ Some(_)) => (ws_model, abort),
        (Framework::TwoStage, None) => {
            let val = (!exp.target_val.is_empty()).then_some(&exp.target_val);
            let st = train_2studa(ws_model, &exp.pool_features(), val, &cfg.train, &cfg.pseudo)?;
            for r in &st.rounds {
                log::info!(
                    "round {} delta {:.2} selected {} accumulated {} steps {}",
                    r.round,
                    r.delta,
                    r.selected,
                    r.accumulated,
                    r.steps
                );
            }
            write_jsonl(&out.join(ROUNDS), &st.rounds)?;
            report.pseudo_labels = Some(st.state.accumulated().len());
            report.rounds = Some(st.rounds);
            (st.model, st.aborted)
        }
    };
    final_model.save(out.join(CHECKPOINT))?;
    manifest.aborted = abort.is_some();
    manifest.write(out)?;
    if let Some(e) = abort {
        return Err(anyhow::Error::new(e).context(format!(
            "training stopped early; last good parameters saved to {}",
            out.join(CHECKPOINT).display()
        )));
    }

    if !exp.target_test.is_empty() {
        report.accuracy = score(&final_model, &exp.target_test, cfg.train.weight_mode)?;
        for (name, acc) in &report.accuracy {
            println!("{name}\t{acc:.4}");
        }
    } else {
        println!("no labeled target test data; accuracy not reported");
    }
    let text = serde_json::to_string_pretty(&report).map_err(CoreError::from)?;
    fs::write(out.join(REPORT), text + "\n").map_err(CoreError::from)?;
    Ok(())
}

/// Documents plus labels taken from a sidecar or, failing that, the corpus itself.
fn labeled_corpus(corpus: &Path, labels: Option<&Path>) -> Result<(Vec<RawDoc>, Vec<Option<Polarity>>)> {
    let docs = read_corpus(corpus)?;
    let labels = match labels {
        Some(p) => read_target_labels(p, docs.len())?,
        None => docs.iter().map(|d| d.label).collect(),
    };
    Ok((docs, labels))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    corpus: PathBuf,
    predictor: String,
    examples: usize,
    accuracy: f64,
    breakdown: Vec<(String, f64)>,
}

pub struct EvalArgs<'a> {
    pub run: &'a Path,
    pub corpus: &'a Path,
    pub labels: Option<&'a Path>,
    pub vocab: Option<&'a Path>,
    pub weight_mode: Option<WeightMode>,
    pub out: Option<&'a Path>,
}

pub fn eval(args: &EvalArgs<'_>) -> Result<()> {
    let manifest = Manifest::read(args.run)?;
    let vocab = manifest.vocabulary(args.run, args.vocab)?;
    let model = manifest.load_model(args.run)?;
    let (docs, labels) = labeled_corpus(args.corpus, args.labels)?;
    let (features, labels): (Vec<FeatureVector>, Vec<usize>) = docs
        .iter()
        .zip(&labels)
        .filter_map(|(d, l)| l.map(|l| (vocab.vectorize(d), l.class_index())))
        .unzip();
    if labels.is_empty() {
        return Err(data_err(format!("{} carries no labels to evaluate against", args.corpus.display())));
    }
    if labels.len() < docs.len() {
        log::warn!("{} of {} documents are unlabeled and skipped", docs.len() - labels.len(), docs.len());
    }
    let set = LabeledSet::new(features, labels)?;
    let mode = args.weight_mode.unwrap_or(manifest.weight_mode);
    let breakdown = score(&model, &set, mode)?;
    let main = if model.has_target_extractor() {
        "target_path".to_string()
    } else {
        format!("ensemble_{mode}")
    };
    let accuracy = breakdown.iter().find(|(n, _)| *n == main).map(|p| p.1).unwrap_or(0.0);
    println!("accuracy\t{accuracy:.4}\t({main}, {} examples)", set.len());
    for (name, acc) in &breakdown {
        println!("{name}\t{acc:.4}");
    }
    let report = EvalReport {
        corpus: args.corpus.to_path_buf(),
        predictor: main,
        examples: set.len(),
        accuracy,
        breakdown,
    };
    let path = args.out.map_or_else(|| args.run.join("eval.json"), Path::to_path_buf);
    let text = serde_json::to_string_pretty(&report).map_err(CoreError::from)?;
    fs::write(&path, text + "\n").map_err(CoreError::from)?;
    Ok(())
}

pub struct WeightsArgs<'a> {
    pub run: &'a Path,
    pub corpus: &'a Path,
    pub vocab: Option<&'a Path>,
    pub weight_mode: Option<WeightMode>,
    pub out: Option<&'a Path>,
}

/// Writes one tab-separated row per document: id, K weights, label, confidence.
pub fn weights(args: &WeightsArgs<'_>) -> Result<()> {
    let manifest = Manifest::read(args.run)?;
    let vocab = manifest.vocabulary(args.run, args.vocab)?;
    let model = manifest.load_model(args.run)?;
    let docs = read_corpus(args.corpus)?;
    let features: Vec<FeatureVector> = docs.iter().map(|d| vocab.vectorize(d)).collect();
    let mode = args.weight_mode.unwrap_or(manifest.weight_mode);
    let preds = map_chunks(&features, model.config().input_dim, |x| predict_target(&model, x, mode))?;
    let k = model.config().num_sources;
    let path = args.out.map_or_else(|| args.run.join("weights.tsv"), Path::to_path_buf);
    let file = fs::File::create(&path).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let header: Vec<String> = std::iter::once("instance_id".to_string())
        .chain((1..=k).map(|j| format!("w_{j}")))
        .chain(["predicted_label".to_string(), "confidence".to_string()])
        .collect();
    writeln!(w, "{}", header.join("\t")).map_err(CoreError::from)?;
    for (i, p) in preds.iter().enumerate() {
        let label = Polarity::from_class_index(p.label).map_or("?", Polarity::as_str);
        let ws: Vec<String> = p.weights.as_slice().iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{i}\t{}\t{label}\t{:.17e}", ws.join("\t"), p.confidence).map_err(CoreError::from)?;
    }
    w.flush().map_err(CoreError::from)?;
    println!("{}", path.display());
    Ok(())
}
