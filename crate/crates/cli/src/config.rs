//! Run configuration: built-in defaults, then a TOML file, then `MSUDA_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use msuda_core::data::SynthSpec;
use msuda_core::experiment::SplitConfig;
use msuda_core::training::{PseudoLabelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "MSUDA_";

/// Invalid or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    #[default]
    Ws,
    #[serde(rename = "2st")]
    #[value(name = "2st")]
    TwoStage,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `<dir>/<domain>.review` files plus an optional `<dir>/<target>.labels`.
    #[default]
    Corpora,
    /// `<dir>/<domain>/{positive,negative,unlabeled}.review`.
    Reviews,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub layout: Layout,
    pub dir: PathBuf,
    /// Source domain names; empty means every corpus except the target.
    pub sources: Vec<String>,
    /// Label sidecar for the target corpus; empty means `<dir>/<target>.labels` if present.
    pub target_labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSizes {
    pub hidden_dim: usize,
    pub feature_dim: usize,
}

impl Default for ModelSizes {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            feature_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives data splits, initialization and training order everywhere.
    pub seed: u64,
    pub framework: Framework,
    pub target: String,
    pub out: PathBuf,
    pub vocab_size: usize,
    /// Earlier `ws` run directory to start the two-stage framework from.
    pub ws_run: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelSizes,
    pub train: TrainConfig,
    pub pseudo: PseudoLabelConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            framework: Framework::Ws,
            target: "target".into(),
            out: "msuda-out".into(),
            vocab_size: 5000,
            ws_run: PathBuf::new(),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            model: ModelSizes::default(),
            train: TrainConfig::default(),
            pseudo: PseudoLabelConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the layered value alone.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub framework: Option<Framework>,
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub weight_mode: Option<String>,
    pub out: Option<PathBuf>,
    pub ws_run: Option<PathBuf>,
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses an environment value with the type of the default it replaces.
fn env_value(default: &Value, raw: &str) -> Result<Value, ConfigError> {
    if let Value::String(_) = default {
        return Ok(Value::String(raw.to_string()));
    }
    let parsed: Table = toml::from_str(&format!("v = {raw}"))
        .map_err(|_| ConfigError(format!("cannot parse `{raw}` as a TOML value")))?;
    let v = parsed["v"].clone();
    Ok(match (default, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    })
}

fn table_at<'a>(table: &'a mut Table, path: &[String]) -> Option<&'a mut Table> {
    match path.split_first() {
        None => Some(table),
        Some((head, rest)) => match table.get_mut(head) {
            Some(Value::Table(t)) => table_at(t, rest),
            _ => None,
        },
    }
}

fn apply_env(tree: &mut Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].to_lowercase().split("__").map(str::to_string).collect();
        let (last, parents) = path.split_last().expect("split yields at least one item");
        let Some(node) = table_at(tree, parents) else {
            log::debug!("ignoring {key}: not a configuration key");
            continue;
        };
        let default = node.get(last).cloned();
        match default {
            Some(Value::Table(_)) | None => {
                log::debug!("ignoring {key}: not a configuration key");
            }
            Some(d) => {
                let v = env_value(&d, &raw).map_err(|e| ConfigError(format!("{key}: {}", e.0)))?;
                node.insert(last.clone(), v);
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Layers defaults, `file`, environment variables and flags.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &FlagOverrides,
    ) -> Result<Self, ConfigError> {
        let mut tree = Table::try_from(RunConfig::default()).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            let over: Table = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            merge(&mut tree, over);
        }
        apply_env(&mut tree, env)?;
        let mut cfg: RunConfig = Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        if let Some(f) = flags.framework {
            cfg.framework = f;
        }
        if let Some(t) = &flags.target {
            cfg.target = t.clone();
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(m) = &flags.weight_mode {
            cfg.train.weight_mode = m.parse().map_err(|e: msuda_core::Error| ConfigError(e.to_string()))?;
        }
        if let Some(o) = &flags.out {
            cfg.out = o.clone();
        }
        if let Some(r) = &flags.ws_run {
            cfg.ws_run = r.clone();
        }
        cfg.train.seed = cfg.seed;
        cfg.split.seed = cfg.seed;
        cfg.synth.seed = cfg.seed;
        Ok(cfg)
    }

    /// Checks the parts every command relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |r: msuda_core::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        core(self.train.validate())?;
        core(self.pseudo.validate())?;
        if self.target.is_empty() {
            return Err(ConfigError("target domain name is empty".into()));
        }
        if self.data.sources.iter().any(|s| s == &self.target) {
            return Err(ConfigError(format!("`{}` is both a source and the target", self.target)));
        }
        if self.vocab_size == 0 {
            return Err(ConfigError("vocab_size must be positive".into()));
        }
        if self.model.hidden_dim == 0 || self.model.feature_dim == 0 {
            return Err(ConfigError("model sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::resolve(None, vec![], &FlagOverrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn precedence_is_file_then_env_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\ntarget = \"kitchen\"\n[train]\nlr = 0.01\nn_critic = 2\n").unwrap();
        let env = vars(&[("MSUDA_TRAIN__LR", "1"), ("MSUDA_SEED", "4"), ("MSUDA_UNRELATED_DIR", "/x")]);
        let flags = FlagOverrides {
            seed: Some(9),
            framework: Some(Framework::TwoStage),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&path), env, &flags).unwrap();
        assert_eq!(cfg.target, "kitchen");
        assert_eq!(cfg.train.n_critic, 2);
        assert_eq!(cfg.train.lr, 1.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.framework, Framework::TwoStage);
    }

    #[test]
    fn string_env_values_stay_strings() {
        let cfg = RunConfig::resolve(None, vars(&[("MSUDA_TARGET", "1999")]), &FlagOverrides::default()).unwrap();
        assert_eq!(cfg.target, "1999");
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(RunConfig::resolve(None, vars(&[("MSUDA_TRAIN__N_CRITIC", "many")]), &FlagOverrides::default()).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nunknown_knob = 1\n").unwrap();
        assert!(RunConfig::resolve(Some(&path), vec![], &FlagOverrides::default()).is_err());
        let flags = FlagOverrides {
            weight_mode: Some("both".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, vec![], &flags).is_err());
    }
}
