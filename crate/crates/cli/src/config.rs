//! Flat `key = value` experiment configuration.
//!
//! Values come from built-in defaults, then the config file, then `--set`
//! overrides and dedicated flags, later sources winning. Everything is
//! parsed and checked before a command touches the filesystem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hibert_core::encoder::ModelConfig;
use hibert_core::train::TrainConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("missing required setting `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "model",
    "layers",
    "hidden",
    "heads",
    "ff",
    "dropout",
    "lr",
    "warmup",
    "weight_decay",
    "batch_size",
    "epochs",
    "max_steps",
    "early_stopping",
    "patience",
    "min_rel_improvement",
    "seed",
    "out_dir",
    "checkpoint",
    "checkpoint_every",
    "corpus",
    "valid_corpus",
    "vocab",
    "merges",
    "num_merges",
    "stages",
    "k",
    "k_range",
    "oracle",
    "max_selected",
];

/// Raw settings in precedence order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.to_string() })?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    /// Sets one key after checking it is known.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: pair.to_string() })?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }
}

fn is_known(key: &str) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    // stage.<tag>.corpus / stage.<tag>.valid
    matches!(key.split('.').collect::<Vec<_>>().as_slice(), ["stage", tag, "corpus" | "valid"] if !tag.is_empty())
}

/// A pre-training stage as configured.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub tag: String,
    pub corpus: PathBuf,
    pub valid: Option<PathBuf>,
}

/// How many sentences a summary keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    Tune,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    Greedy,
    Exhaustive,
}

/// Which command the optimizer settings are resolved for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    settings: Settings,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub merges: Option<PathBuf>,
    pub num_merges: usize,
    pub k: KChoice,
    pub k_range: Vec<usize>,
    pub oracle: OracleKind,
    pub max_selected: usize,
}

impl ExperimentConfig {
    pub fn from_settings(settings: Settings) -> Result<Self> {
        let s = &settings;
        let k = match s.get("k") {
            None => KChoice::Fixed(3),
            Some("tune") => KChoice::Tune,
            Some(_) => KChoice::Fixed(s.parsed("k")?.unwrap()),
        };
        if k == KChoice::Fixed(0) {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        let k_range = match s.get("k_range") {
            None => (1..=5).collect(),
            Some(v) => parse_range(v).ok_or_else(|| ConfigError::InvalidValue {
                key: "k_range".into(),
                value: v.into(),
                reason: "expected `a..b` (inclusive) or a comma list of positive integers".into(),
            })?,
        };
        let oracle = match s.get("oracle").unwrap_or("greedy") {
            "greedy" => OracleKind::Greedy,
            "exhaustive" => OracleKind::Exhaustive,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "oracle".into(),
                    value: other.into(),
                    reason: "expected `greedy` or `exhaustive`".into(),
                })
            }
        };
        let cfg = Self {
            seed: s.parsed("seed")?.unwrap_or(0),
            out_dir: s.path("out_dir").unwrap_or_else(|| PathBuf::from("out")),
            checkpoint: s.path("checkpoint"),
            checkpoint_every: s.parsed("checkpoint_every")?,
            corpus: s.path("corpus"),
            valid_corpus: s.path("valid_corpus"),
            vocab: s.path("vocab"),
            merges: s.path("merges"),
            num_merges: s.parsed("num_merges")?.unwrap_or(1000),
            k,
            k_range,
            oracle,
            max_selected: s.parsed("max_selected")?.unwrap_or(hibert_core::rouge::DEFAULT_MAX_SELECTED),
            settings,
        };
        if cfg.checkpoint_every == Some(0) {
            return Err(ConfigError::Invalid("checkpoint_every must be positive".into()));
        }
        if cfg.max_selected == 0 {
            return Err(ConfigError::Invalid("max_selected must be positive".into()));
        }
        // Surface bad optimizer and model values up front.
        cfg.train_config(Phase::Pretrain)?;
        cfg.train_config(Phase::Finetune)?;
        cfg.model_config(1 + hibert_core::text::RESERVED_TOKENS.len())?;
        cfg.stages_unchecked()?;
        Ok(cfg)
    }

    /// Reads a config file (if any), then applies overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut settings = match file {
            Some(p) => Settings::parse(
                &std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?,
            )?,
            None => Settings::default(),
        };
        for o in overrides {
            settings.set_pair(o)?;
        }
        Ok(Self::from_settings(settings)?)
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Model shape for a vocabulary of `vocab_size` entries.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let s = &self.settings;
        let mut m = match s.get("model").unwrap_or("tiny") {
            "tiny" => ModelConfig::tiny(vocab_size),
            "small" => ModelConfig::small(vocab_size),
            "medium" => ModelConfig::medium(vocab_size),
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "model".into(),
                    value: other.into(),
                    reason: "expected tiny, small or medium".into(),
                })
            }
        };
        if let Some(v) = s.parsed("layers")? {
            m.layers = v;
        }
        if let Some(v) = s.parsed("hidden")? {
            m.hidden = v;
            m.ff = 4 * v;
        }
        if let Some(v) = s.parsed("heads")? {
            m.heads = v;
        }
        if let Some(v) = s.parsed("ff")? {
            m.ff = v;
        }
        if let Some(v) = s.parsed("dropout")? {
            m.dropout = v;
        }
        m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(m)
    }

    /// Optimizer and loop settings with the phase's defaults underneath.
    pub fn train_config(&self, phase: Phase) -> Result<TrainConfig> {
        let s = &self.settings;
        let mut t = match phase {
            Phase::Pretrain => TrainConfig::pretrain_defaults(self_seed(s)?),
            Phase::Finetune => TrainConfig::finetune_defaults(self_seed(s)?),
        };
        if let Some(v) = s.parsed("lr")? {
            t.base_lr = v;
        }
        if let Some(v) = s.parsed("warmup")? {
            t.warmup_steps = v;
        }
        if let Some(v) = s.parsed("weight_decay")? {
            t.weight_decay = v;
        }
        if let Some(v) = s.parsed("batch_size")? {
            t.batch_size = v;
        }
        if let Some(v) = s.parsed("epochs")? {
            t.max_epochs = v;
        }
        if let Some(v) = s.parsed("max_steps")? {
            t.max_steps = Some(v);
        }
        let mut es = t.early_stopping.unwrap_or_default();
        if let Some(v) = s.parsed("patience")? {
            es.patience = v;
        }
        if let Some(v) = s.parsed("min_rel_improvement")? {
            es.min_rel_improvement = v;
        }
        let enabled = s.parsed::<bool>("early_stopping")?.unwrap_or(t.early_stopping.is_some());
        t.early_stopping = enabled.then_some(es);
        if let Some(es) = t.early_stopping {
            if es.patience == 0 || !(es.min_rel_improvement >= 0.0 && es.min_rel_improvement < 1.0) {
                return Err(ConfigError::Invalid(
                    "early stopping needs patience >= 1 and 0 <= min_rel_improvement < 1".into(),
                ));
            }
        }
        t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(t)
    }

    fn stages_unchecked(&self) -> Result<Vec<StageSpec>> {
        let s = &self.settings;
        let Some(list) = s.get("stages") else {
            return Ok(self
                .corpus
                .iter()
                .map(|c| StageSpec { tag: "main".into(), corpus: c.clone(), valid: self.valid_corpus.clone() })
                .collect());
        };
        let mut out: Vec<StageSpec> = Vec::new();
        for tag in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if out.iter().any(|st| st.tag == tag) {
                return Err(ConfigError::Invalid(format!("stage `{tag}` listed twice")));
            }
            let corpus = s
                .path(&format!("stage.{tag}.corpus"))
                .ok_or_else(|| ConfigError::Missing(format!("stage.{tag}.corpus")))?;
            out.push(StageSpec { tag: tag.to_string(), corpus, valid: s.path(&format!("stage.{tag}.valid")) });
        }
        Ok(out)
    }

    /// Pre-training stages in order; without a `stages` key the `corpus`
    /// forms a single stage. An empty list is an error.
    pub fn stages(&self) -> Result<Vec<StageSpec>> {
        let stages = self.stages_unchecked()?;
        if stages.is_empty() {
            return Err(ConfigError::Invalid("the pre-training stage list is empty".into()));
        }
        Ok(stages)
    }

    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a PathBuf> {
        value.as_ref().ok_or_else(|| ConfigError::Missing(key.to_string()))
    }
}

fn self_seed(s: &Settings) -> Result<u64> {
    Ok(s.parsed("seed")?.unwrap_or(0))
}

fn parse_range(v: &str) -> Option<Vec<usize>> {
    let ks: Vec<usize> = if let Some((a, b)) = v.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        (a..=b).collect()
    } else {
        v.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?
    };
    (!ks.is_empty() && !ks.contains(&0)).then_some(ks)
}
