//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every key can also be
//! given as a `--key value` flag. `CURRICLE_SEED` replaces the file's seed;
//! an explicit `--seed` flag still wins over both.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use curricle::schedules::{ScheduleKind, ScheduleSpec};
use curricle::trainer::{DataPaths, ReplacementSource, TrainConfig};

pub const SEED_ENV: &str = "CURRICLE_SEED";

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Every recognized key, in the order `grid` writes them.
pub const KEYS: &[Key] = &[
    key("train", "", "training corpus, one sentence per line"),
    key("valid", "", "validation corpus"),
    key("test", "", "test corpus"),
    key("embeddings", "", "word vectors for source = nnrs"),
    key("out_dir", "out", "directory for reports.csv, checkpoints and vocab.txt"),
    key("source", "none", "replacement candidates: none, nnrs or tprs"),
    key("k", "", "candidates per word [default: round(log2 |V|)]"),
    key(
        "ss.kind",
        "static",
        "prediction-sampling curve: linear, scurve, exp_increase or static",
    ),
    key("ss.start", "0", "prediction-sampling start rate"),
    key("ss.end", "0", "prediction-sampling end rate"),
    key(
        "nnrs.kind",
        "static",
        "neighbor-sampling curve: linear, scurve, exp_increase or static",
    ),
    key("nnrs.start", "0", "neighbor-sampling start rate"),
    key("nnrs.end", "0", "neighbor-sampling end rate"),
    key("epochs", "40", "training epochs"),
    key("lr0", "20", "initial learning rate"),
    key("lr_min", "0", "final learning rate of the cosine schedule"),
    key("batch_size", "30", "training stripes"),
    key("eval_batch_size", "10", "validation and test stripes"),
    key("bptt_len", "35", "truncated backpropagation window"),
    key("clip", "0.5", "global gradient-norm threshold"),
    key("hidden", "200", "LSTM width"),
    key("emb_dim", "200", "embedding width (must equal hidden when tied)"),
    key("layers", "2", "LSTM layers"),
    key("tied", "true", "share input embedding and output projection"),
    key("min_count", "1", "rarer training tokens map to <unk>"),
    key("seed", "1", "random seed (CURRICLE_SEED overrides the file value)"),
    key("resume", "false", "continue from out_dir/last.ckpt when present"),
    key(
        "feedback",
        "greedy",
        "how a fed-back prediction is chosen: greedy or sample",
    ),
];

/// A configuration problem attributable to one key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn is_key(name: &str) -> bool {
    KEYS.iter().any(|k| k.name == name)
}

/// Raw key/value pairs before typing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(line, format!("{origin}:{}: expected `key = value`", i + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if !is_key(k) {
                return Err(err(k, format!("{origin}:{}: unknown key", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(k, format!("{origin}:{}: given twice", i + 1)));
            }
        }
        Ok(RawConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !is_key(key) {
            return Err(err(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The value in effect, falling back to the key's default.
    fn value(&self, key: &str) -> &str {
        self.get(key).unwrap_or_else(|| {
            KEYS.iter()
                .find(|k| k.name == key)
                .map(|k| k.default)
                .expect("known key")
        })
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.value(key);
        raw.parse().map_err(|e| err(key, format!("cannot parse {raw:?}: {e}")))
    }

    fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        match self.value(key) {
            "" => Err(err(key, "required")),
            p => Ok(PathBuf::from(p)),
        }
    }

    fn schedule(&self, prefix: &str, total_epochs: usize) -> Result<ScheduleSpec, ConfigError> {
        Ok(ScheduleSpec {
            kind: self.parsed::<ScheduleKind>(&format!("{prefix}.kind"))?,
            start: self.parsed(&format!("{prefix}.start"))?,
            end: self.parsed(&format!("{prefix}.end"))?,
            total_epochs,
        })
    }

    /// Types every key and checks the result. Reads no files.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let total_epochs = self.parsed("epochs")?;
        let k = match self.value("k") {
            "" => None,
            _ => Some(self.parsed("k")?),
        };
        let source: ReplacementSource = self.parsed("source")?;
        let train = TrainConfig {
            lr0: self.parsed("lr0")?,
            lr_min: self.parsed("lr_min")?,
            total_epochs,
            batch_size: self.parsed("batch_size")?,
            eval_batch_size: self.parsed("eval_batch_size")?,
            bptt_len: self.parsed("bptt_len")?,
            clip: self.parsed("clip")?,
            ss: self.schedule("ss", total_epochs)?,
            nnrs: self.schedule("nnrs", total_epochs)?,
            source,
            seed: self.parsed("seed")?,
            hidden: self.parsed("hidden")?,
            emb_dim: self.parsed("emb_dim")?,
            layers: self.parsed("layers")?,
            tied: self.parsed("tied")?,
            min_count: self.parsed("min_count")?,
            k,
            resume: self.parsed("resume")?,
            feedback: self.parsed("feedback")?,
        };
        if let Err(curricle::Error::Config { key, message }) = train.validate() {
            return Err(err(&key, message));
        }
        let embeddings = match self.value("embeddings") {
            "" if source == ReplacementSource::Nnrs => return Err(err("embeddings", "required when source = nnrs")),
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        Ok(RunConfig {
            paths: DataPaths {
                train: self.path("train")?,
                valid: self.path("valid")?,
                test: self.path("test")?,
                embeddings,
            },
            out_dir: self.path("out_dir")?,
            train,
        })
    }

    /// `key = value` lines for every key, explicit values first falling back
    /// to defaults.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.value(k.name);
            if v.is_empty() {
                writeln!(out, "# {} =", k.name).expect("write to String");
            } else {
                writeln!(out, "{} = {v}", k.name).expect("write to String");
            }
        }
        out
    }
}

/// A fully typed experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: DataPaths,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}
