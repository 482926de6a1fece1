//! Mini-batch fine-tuning with linear warmup, per-epoch validation and
//! best-checkpoint selection by validation accuracy.

pub(crate) mod backend;
pub mod checkpoint;
mod optim;
pub mod reference;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use backend::{log_sum_exp, mean_cross_entropy, softmax, ClassifierBackend, Logits, Snapshot};
pub use optim::{clip_grad_norm, AdamW, AdamWSettings};
pub use reference::ReferenceClassifier;

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::encode::{FeatureRecord, FeatureSet, DEFAULT_SEQUENCE_BUDGET};
use crate::error::{Error, Result};
use crate::kv::KvRecord;
use crate::labelspace::argmax;
use crate::metrics::{report, AveragingMode, MetricsReport};

/// Linearly ramps from 0 to `base_lr` over `warmup_steps`, then holds.
pub fn warmup_lr(step: u64, base_lr: f64, warmup_steps: u64) -> Result<f64> {
    if warmup_steps == 0 {
        return Err(Error::Config("warmup_steps must be at least 1".into()));
    }
    if step >= warmup_steps {
        return Ok(base_lr);
    }
    Ok(base_lr * step as f64 / warmup_steps as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: u64,
    pub sequence_budget: usize,
    pub mixed_precision: bool,
    pub seed: u64,
    pub optimizer: AdamWSettings,
}

impl TrainConfig {
    pub const NUM_LABELS: usize = NUM_EMOTIONS;

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config(
                "epochs must be at least 1 (best-epoch selection needs a history)".into(),
            ));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be at least 1".into()));
        }
        if self.sequence_budget < 2 {
            return Err(Error::Config("sequence_budget must be at least 2".into()));
        }
        self.optimizer.validate()
    }

    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("learning_rate", self.learning_rate)
            .set("batch_size", self.batch_size)
            .set("epochs", self.epochs)
            .set("warmup_steps", self.warmup_steps)
            .set("sequence_budget", self.sequence_budget)
            .set("mixed_precision", self.mixed_precision)
            .set("seed", self.seed)
            .set("num_labels", Self::NUM_LABELS);
        self.optimizer.write_to(&mut r);
        r
    }

    pub fn hash(&self) -> String {
        self.to_record().content_hash()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 8,
            epochs: 5,
            warmup_steps: 500,
            sequence_budget: DEFAULT_SEQUENCE_BUDGET,
            mixed_precision: true,
            seed: 42,
            optimizer: AdamWSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub history: Vec<EpochLog>,
    /// 1-based epoch with the highest validation accuracy.
    pub best_epoch: usize,
    pub best_checkpoint: Snapshot,
    pub total_steps: u64,
}

impl TrainingResult {
    pub fn best(&self) -> &EpochLog {
        &self.history[self.best_epoch - 1]
    }
}

/// 1-based position of the highest validation accuracy, earliest on ties.
pub fn select_best(history: &[EpochLog]) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::Contract("cannot select a best epoch from an empty history".into()));
    }
    let mut best = 0;
    for (i, log) in history.iter().enumerate().skip(1) {
        if log.val_accuracy > history[best].val_accuracy {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Loss, metrics and predictions of a backend over a labeled set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub report: MetricsReport,
    pub predictions: Vec<Emotion>,
}

pub fn evaluate(
    backend: &dyn ClassifierBackend,
    set: &FeatureSet,
    batch_size: usize,
    averaging: AveragingMode,
) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty set".into()));
    }
    let labels: Vec<Emotion> = set
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| Error::Contract(format!("evaluation record {i} is unlabeled")))
        })
        .collect::<Result<_>>()?;

    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(set.len());
    for chunk in set.records().chunks(batch_size.max(1)) {
        let batch: Vec<&FeatureRecord> = chunk.iter().collect();
        let scores = backend.forward(&batch)?;
        let chunk_labels: Vec<Emotion> = chunk.iter().filter_map(|r| r.label).collect();
        loss_sum += backend.loss(&scores, &chunk_labels) * chunk.len() as f64;
        predictions.extend(scores.iter().map(argmax));
    }
    let gold: Vec<usize> = labels.iter().map(|e| e.ordinal()).collect();
    let pred: Vec<usize> = predictions.iter().map(|e| e.ordinal()).collect();
    Ok(Evaluation {
        loss: loss_sum / set.len() as f64,
        report: report(&gold, &pred, averaging)?,
        predictions,
    })
}

/// Epoch visiting order: a counter-based stream keyed by (seed, epoch), so
/// an epoch's order does not depend on how many batches came before it.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn check_split(name: &str, set: &FeatureSet, budget: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Contract(format!("{name} set is empty")));
    }
    if !set.is_labeled() {
        return Err(Error::Contract(format!("{name} set has unlabeled records")));
    }
    if set.budget() != budget {
        return Err(Error::Contract(format!(
            "{name} set was encoded with budget {} but the config says {budget}",
            set.budget()
        )));
    }
    Ok(())
}

pub fn train(
    config: &TrainConfig,
    train_set: &FeatureSet,
    val_set: &FeatureSet,
    backend: &mut dyn ClassifierBackend,
    averaging: AveragingMode,
) -> Result<TrainingResult> {
    train_with_observer(config, train_set, val_set, backend, averaging, |_| {})
}

/// As [`train`], calling `observe` after every epoch.
pub fn train_with_observer(
    config: &TrainConfig,
    train_set: &FeatureSet,
    val_set: &FeatureSet,
    backend: &mut dyn ClassifierBackend,
    averaging: AveragingMode,
    mut observe: impl FnMut(&EpochLog),
) -> Result<TrainingResult> {
    config.validate()?;
    check_split("train", train_set, config.sequence_budget)?;
    check_split("validation", val_set, config.sequence_budget)?;
    if train_set.tokenizer_fingerprint() != val_set.tokenizer_fingerprint() {
        return Err(Error::Contract(format!(
            "train and validation sets use different tokenizers ({} vs {})",
            train_set.tokenizer_fingerprint(),
            val_set.tokenizer_fingerprint()
        )));
    }
    backend.set_reduced_precision(config.mixed_precision);

    let records = train_set.records();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Snapshot)> = None;
    let mut step: u64 = 0;

    for epoch in 1..=config.epochs {
        let order = epoch_order(records.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        for rows in order.chunks(config.batch_size) {
            let batch: Vec<&FeatureRecord> = rows.iter().map(|&i| &records[i]).collect();
            let lr = warmup_lr(step, config.learning_rate, config.warmup_steps)?;
            let loss = backend.backward(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: step as usize,
                    rows: rows.to_vec(),
                });
            }
            backend.apply_update(lr, &config.optimizer)?;
            loss_sum += loss * rows.len() as f64;
            step += 1;
        }

        let eval = evaluate(&*backend, val_set, config.batch_size, averaging)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / records.len() as f64,
            val_loss: eval.loss,
            val_accuracy: eval.report.accuracy,
            val_precision: eval.report.macro_precision,
            val_recall: eval.report.macro_recall,
            val_f1: eval.report.macro_f1,
        };
        log::info!(
            "epoch {epoch}: train_loss={:.4} val_loss={:.4} val_acc={:.4} val_f1={:.4}",
            log.train_loss,
            log.val_loss,
            log.val_accuracy,
            log.val_f1
        );
        if best.as_ref().is_none_or(|(acc, _)| log.val_accuracy > *acc) {
            best = Some((log.val_accuracy, backend.snapshot()?));
        }
        observe(&log);
        history.push(log);
    }

    let best_epoch = select_best(&history)?;
    let (_, snapshot) = best.expect("history is non-empty");
    backend.restore(&snapshot)?;
    Ok(TrainingResult {
        history,
        best_epoch,
        best_checkpoint: snapshot,
        total_steps: step,
    })
}

pub const HISTORY_HEADER: [&str; 7] = [
    "epoch",
    "train_loss",
    "val_loss",
    "val_accuracy",
    "val_precision",
    "val_recall",
    "val_f1",
];

/// History as CSV; floats use the shortest round-trip representation.
pub fn history_to_csv(history: &[EpochLog]) -> String {
    let mut out = HISTORY_HEADER.join(",");
    out.push('\n');
    for h in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            h.epoch, h.train_loss, h.val_loss, h.val_accuracy, h.val_precision, h.val_recall, h.val_f1
        );
    }
    out
}

pub fn history_from_csv(text: &str, source: &str) -> Result<Vec<EpochLog>> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        context: source.to_string(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().map(str::trim).ne(HISTORY_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", HISTORY_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            let cell = rec[k].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("`{cell}` in column {} is not a number", HISTORY_HEADER[k])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(line, format!("`{cell}` in column {} is out of range", HISTORY_HEADER[k])));
            }
            Ok(v)
        };
        let epoch: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("epoch `{}` is not an integer", &rec[0])))?;
        let log = EpochLog {
            epoch,
            train_loss: num(1)?,
            val_loss: num(2)?,
            val_accuracy: num(3)?,
            val_precision: num(4)?,
            val_recall: num(5)?,
            val_f1: num(6)?,
        };
        if [log.val_accuracy, log.val_precision, log.val_recall, log.val_f1]
            .iter()
            .any(|&m| m > 1.0)
        {
            return Err(parse_err(line, "metric above 1".into()));
        }
        out.push(log);
    }
    Ok(out)
}
