//! Run configuration: every knob of a pipeline run in one flat key/value
//! record. Precedence is command-line flag, then config file, then default.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::encode::WordHashTokenizer;
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::labelspace::NeutralPolicy;
use crate::metrics::AveragingMode;
use crate::trainer::{ReferenceClassifier, TrainConfig};

/// Environment variable overriding the feature cache directory.
pub const CACHE_DIR_ENV: &str = "EMOCLASS_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    Reference,
    PretrainedAdapter,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Reference => "reference",
            BackendKind::PretrainedAdapter => "pretrained-adapter",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "reference" => Ok(BackendKind::Reference),
            "pretrained-adapter" | "pretrained" => Ok(BackendKind::PretrainedAdapter),
            other => Err(Error::Config(format!(
                "unknown backend `{other}` (expected reference or pretrained-adapter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub train_csv: Option<PathBuf>,
    pub validation_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    /// Defaults to a directory under `output_dir` keyed by the training
    /// identity hash.
    pub checkpoint_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub backend: BackendKind,
    pub neutral_policy: NeutralPolicy,
    pub averaging: AveragingMode,
    /// Reference backend: hashed vocabulary size (tokenizer and embeddings).
    pub vocab_size: u32,
    /// Reference backend: embedding width.
    pub embedding_dim: usize,
    /// Pretrained adapter: worker command line.
    pub pretrained_worker: Option<String>,
    /// Pretrained adapter: model directory or hub id handed to the worker.
    pub pretrained_model: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            train_csv: None,
            validation_csv: None,
            test_csv: None,
            checkpoint_dir: None,
            output_dir: PathBuf::from("runs"),
            backend: BackendKind::default(),
            neutral_policy: NeutralPolicy::default(),
            averaging: AveragingMode::default(),
            vocab_size: WordHashTokenizer::DEFAULT_VOCAB,
            embedding_dim: ReferenceClassifier::DEFAULT_DIM,
            pretrained_worker: None,
            pretrained_model: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn opt_string(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty()).then(|| v.to_string())
}

impl RunConfig {
    pub const KEYS: [&'static str; 24] = [
        "learning_rate",
        "batch_size",
        "epochs",
        "warmup_steps",
        "sequence_budget",
        "mixed_precision",
        "seed",
        "weight_decay",
        "max_grad_norm",
        "adam_beta1",
        "adam_beta2",
        "adam_epsilon",
        "train_csv",
        "validation_csv",
        "test_csv",
        "checkpoint_dir",
        "output_dir",
        "backend",
        "neutral_policy",
        "averaging",
        "vocab_size",
        "embedding_dim",
        "pretrained_worker",
        "pretrained_model",
    ];

    /// Sets one key. Unknown keys are an error.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "learning_rate" => t.learning_rate = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "warmup_steps" => t.warmup_steps = parse_value(key, value)?,
            "sequence_budget" => t.sequence_budget = parse_value(key, value)?,
            "mixed_precision" => t.mixed_precision = parse_bool(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "weight_decay" => t.optimizer.weight_decay = parse_value(key, value)?,
            "max_grad_norm" => t.optimizer.max_grad_norm = parse_value(key, value)?,
            "adam_beta1" => t.optimizer.beta1 = parse_value(key, value)?,
            "adam_beta2" => t.optimizer.beta2 = parse_value(key, value)?,
            "adam_epsilon" => t.optimizer.epsilon = parse_value(key, value)?,
            "num_labels" => {
                if value.trim() != "6" {
                    return Err(Error::Config("num_labels is fixed at 6".into()));
                }
            }
            "train_csv" => self.train_csv = opt_path(value),
            "validation_csv" => self.validation_csv = opt_path(value),
            "test_csv" => self.test_csv = opt_path(value),
            "checkpoint_dir" => self.checkpoint_dir = opt_path(value),
            "output_dir" => {
                self.output_dir = opt_path(value)
                    .ok_or_else(|| Error::Config("output_dir cannot be empty".into()))?
            }
            "backend" => self.backend = parse_value(key, value)?,
            "neutral_policy" => self.neutral_policy = parse_value(key, value)?,
            "averaging" => self.averaging = parse_value(key, value)?,
            "vocab_size" => self.vocab_size = parse_value(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "pretrained_worker" => self.pretrained_worker = opt_string(value),
            "pretrained_model" => self.pretrained_model = opt_string(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_record(&mut self, record: &KvRecord) -> Result<()> {
        for (k, v) in record.entries() {
            self.apply(k, v)?;
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_record(&KvRecord::parse(text, source)?)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.backend == BackendKind::Reference {
            WordHashTokenizer::new(self.vocab_size, true)?;
            if self.embedding_dim == 0 {
                return Err(Error::Config("embedding_dim must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Complete serialized form; its hash identifies the run.
    pub fn to_record(&self) -> KvRecord {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut r = self.train.to_record();
        r.set("train_csv", path(&self.train_csv))
            .set("validation_csv", path(&self.validation_csv))
            .set("test_csv", path(&self.test_csv))
            .set("checkpoint_dir", path(&self.checkpoint_dir))
            .set("output_dir", self.output_dir.display())
            .set("backend", self.backend)
            .set("neutral_policy", self.neutral_policy)
            .set("averaging", self.averaging)
            .set("vocab_size", self.vocab_size)
            .set("embedding_dim", self.embedding_dim)
            .set("pretrained_worker", self.pretrained_worker.clone().unwrap_or_default())
            .set("pretrained_model", self.pretrained_model.clone().unwrap_or_default());
        r
    }

    pub fn hash(&self) -> String {
        self.to_record().content_hash()
    }

    /// Hash of the settings that determine trained weights: the training
    /// schedule, data paths, backend and label policy. Evaluation-only
    /// settings (averaging, output paths) are excluded so they do not move
    /// the checkpoint.
    pub fn training_hash(&self) -> String {
        let full = self.to_record();
        let excluded = ["averaging", "output_dir", "checkpoint_dir", "test_csv"];
        full.entries()
            .iter()
            .filter(|(k, _)| !excluded.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<KvRecord>()
            .content_hash()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint_dir.clone().unwrap_or_else(|| {
            self.output_dir
                .join("checkpoints")
                .join(short_hash(&self.training_hash()))
        })
    }

    /// Feature cache root: the environment override or `<output_dir>/cache`.
    pub fn cache_root(&self) -> PathBuf {
        std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }
}

/// First 12 hex digits, used in artifact names.
pub fn short_hash(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_schedule() {
        let c = RunConfig::default();
        assert_eq!(c.train.learning_rate, 2e-5);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.warmup_steps, 500);
        assert_eq!(c.train.sequence_budget, 128);
        assert!(c.train.mixed_precision);
        assert_eq!(c.neutral_policy, NeutralPolicy::Drop);
    }

    #[test]
    fn record_round_trips_through_parse() {
        let mut c = RunConfig::default();
        c.apply("seed", "7").unwrap();
        c.apply("train_csv", "data/train.csv").unwrap();
        c.apply("backend", "pretrained-adapter").unwrap();
        let back = RunConfig::parse(&c.to_record().render(), "rt").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn every_key_is_accepted_and_serialized() {
        let rec = RunConfig::default().to_record();
        for key in RunConfig::KEYS {
            assert!(rec.get(key).is_some(), "{key} missing from record");
            let mut c = RunConfig::default();
            c.apply(key, rec.get(key).unwrap()).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn unknown_and_invalid_values_fail() {
        assert!(RunConfig::parse("lr=1\n", "t").is_err());
        assert!(RunConfig::parse("epochs=many\n", "t").is_err());
        assert!(RunConfig::parse("num_labels=7\n", "t").is_err());
        let zero = RunConfig::parse("epochs=0\n", "t").unwrap();
        assert!(zero.validate().is_err());
    }

    #[test]
    fn averaging_does_not_move_the_checkpoint() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.averaging = AveragingMode::MacroAll;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.checkpoint_path(), b.checkpoint_path());
        b.train.seed = 99;
        assert_ne!(a.checkpoint_path(), b.checkpoint_path());
    }
}
