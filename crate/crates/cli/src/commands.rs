//! Pipeline stages behind each subcommand. Every function takes a fully
//! resolved [`RunConfig`] and writes human-readable progress to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use emoclass::config::{short_hash, RunConfig};
use emoclass::corpus::{class_distribution, load_split, validate, Split};
use emoclass::encode::{encode_dataset, encode_unlabeled, FeatureSet, TokenizerBackend};
use emoclass::infer::{prediction_counts, write_submission, Predictor};
use emoclass::kv::KvRecord;
use emoclass::labelspace::{reduce_dataset, TieBreak};
use emoclass::metrics::{render_report, AveragingMode};
use emoclass::textnorm::preprocess_dataset;
use emoclass::trainer::checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
use emoclass::trainer::{evaluate, train_with_observer, EpochLog};
use emoclass::Emotion;
use sha2::{Digest, Sha256};

use crate::aggregate;
use crate::backends;

pub const PREPARE_MANIFEST: &str = "prepare.txt";
pub const DISTRIBUTION_FILE: &str = "distribution.txt";
pub const RUN_CONFIG_FILE: &str = "run_config.txt";

fn features_file(split: Split) -> String {
    format!("{}.features", split.name())
}

fn split_csv(config: &RunConfig, split: Split) -> Result<&Path> {
    let (path, key) = match split {
        Split::Train => (&config.train_csv, "train_csv"),
        Split::Validation => (&config.validation_csv, "validation_csv"),
        Split::Test => (&config.test_csv, "test_csv"),
    };
    path.as_deref()
        .ok_or_else(|| anyhow!("no {} split configured (set `{key}` in the config file or pass --set {key}=PATH)", split))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Identity of a prepared feature cache: input bytes plus every setting
/// that changes the encoded features.
pub fn data_key(config: &RunConfig, tokenizer: &dyn TokenizerBackend) -> Result<KvRecord> {
    let mut key = KvRecord::new();
    for split in [Split::Train, Split::Validation] {
        key.set(format!("input.{split}_sha256"), file_sha256(split_csv(config, split)?)?);
    }
    if let Some(test) = &config.test_csv {
        key.set("input.test_sha256", file_sha256(test)?);
    }
    key.set("sequence_budget", config.train.sequence_budget)
        .set("tokenizer_fingerprint", tokenizer.fingerprint())
        .set("neutral_policy", config.neutral_policy)
        .set("tie_break", TieBreak::default().name());
    Ok(key)
}

pub fn prepared_dir(config: &RunConfig, key: &KvRecord) -> PathBuf {
    config.cache_root().join(short_hash(&key.content_hash()))
}

/// Loads, cleans, reduces and encodes every configured split, writing
/// feature caches and a manifest. Returns the cache directory.
pub fn prepare(config: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    config.validate()?;
    let backends = backends::build(config)?;
    let tokenizer = &*backends.tokenizer;
    let key = data_key(config, tokenizer)?;
    let dir = prepared_dir(config, &key);
    let budget = config.train.sequence_budget;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut manifest = KvRecord::new();
    manifest
        .set("config_hash", config.hash())
        .set("data_key", key.content_hash());
    for (k, v) in key.entries() {
        manifest.set(k.clone(), v);
    }
    let mut distribution = String::new();

    for split in [Split::Train, Split::Validation] {
        let raw = load_split(split_csv(config, split)?, split, true)?;
        distribution.push_str(&class_distribution(&raw)?.render(&format!("{split} label distribution (before reduction)")));
        distribution.push('\n');

        let clean = preprocess_dataset(&raw);
        let issues = validate(&clean);
        if !issues.empty_text.is_empty() {
            log::warn!("{split}: {} rows with empty text", issues.empty_text.len());
        }
        if !issues.duplicate_texts.is_empty() {
            log::warn!("{split}: {} groups of duplicate texts", issues.duplicate_texts.len());
        }
        let reduction = reduce_dataset(&clean, config.neutral_policy)?;
        if !reduction.dropped.is_empty() {
            log::warn!("{split}: dropped {} neutral rows", reduction.dropped.len());
        }
        let features = encode_dataset(&reduction.reduced, tokenizer, budget)?;
        features.save(dir.join(features_file(split)))?;

        for (k, v) in reduction.manifest_entries(TieBreak::default(), config.neutral_policy) {
            manifest.set(format!("{split}.{k}"), v);
        }
        manifest
            .set(format!("{split}.rows_read"), raw.len())
            .set(format!("{split}.rows_encoded"), features.len())
            .set(format!("{split}.empty_text_rows"), issues.empty_text.len())
            .set(format!("{split}.duplicate_text_groups"), issues.duplicate_texts.len())
            .set(format!("{split}.features_sha256"), features.content_hash());
        writeln!(out, "{split}: {} rows read, {} encoded, {} multi-hot reduced, {} neutral dropped",
            raw.len(), features.len(), reduction.multi_hot_rows, reduction.dropped.len())?;
    }

    if let Some(path) = &config.test_csv {
        let raw = load_split(path, Split::Test, false)?;
        let features = encode_unlabeled(&preprocess_dataset(&raw), tokenizer, budget)?;
        features.save(dir.join(features_file(Split::Test)))?;
        manifest
            .set("test.rows_read", raw.len())
            .set("test.features_sha256", features.content_hash());
        writeln!(out, "test: {} rows encoded", features.len())?;
    }

    write_file(&dir.join(DISTRIBUTION_FILE), distribution.as_bytes())?;
    write_file(&dir.join(PREPARE_MANIFEST), manifest.render().as_bytes())?;
    write!(out, "{distribution}")?;
    writeln!(out, "prepared features: {}", dir.display())?;
    Ok(dir)
}

fn load_prepared(dir: &Path, split: Split) -> Result<FeatureSet> {
    let path = dir.join(features_file(split));
    FeatureSet::load(&path).with_context(|| format!("loading {split} features"))
}

fn epoch_row(log: &EpochLog) -> String {
    format!(
        "{:>5} {:>10.4} {:>10.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        log.epoch, log.train_loss, log.val_loss, log.val_accuracy, log.val_precision, log.val_recall, log.val_f1
    )
}

/// Trains on prepared features and writes the best-epoch checkpoint.
/// Returns the checkpoint directory.
pub fn train(config: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    config.validate()?;
    let mut backends = backends::build(config)?;
    let key = data_key(config, &*backends.tokenizer)?;
    let dir = prepared_dir(config, &key);
    let manifest_path = dir.join(PREPARE_MANIFEST);
    if !manifest_path.exists() {
        bail!("no prepared features for this configuration at {} (run `emoclass prepare` first)", dir.display());
    }
    let prepared = KvRecord::parse(
        &fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?,
        &manifest_path.display().to_string(),
    )?;
    let train_set = load_prepared(&dir, Split::Train)?;
    let val_set = load_prepared(&dir, Split::Validation)?;

    writeln!(out, "training {} on {} rows, validating on {} rows", backends.classifier.fingerprint(), train_set.len(), val_set.len())?;
    writeln!(out, "{:>5} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}", "epoch", "train_loss", "val_loss", "val_acc", "val_p", "val_r", "val_f1")?;
    let mut write_err = None;
    let result = train_with_observer(
        &config.train,
        &train_set,
        &val_set,
        &mut *backends.classifier,
        config.averaging,
        |log| {
            if let Err(e) = writeln!(out, "{}", epoch_row(log)) {
                write_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }

    let mut extra = KvRecord::new();
    extra
        .set("run_config_hash", config.hash())
        .set("training_hash", config.training_hash())
        .set("tokenizer_fingerprint", backends.tokenizer.fingerprint())
        .set("data_key", prepared.require("data_key")?)
        .set("averaging", config.averaging);
    for k in ["tie_break", "neutral_policy", "discarded_secondary_labels", "dropped_neutral_rows"] {
        extra.set(format!("reduction.{k}"), prepared.require(&format!("train.{k}"))?);
    }
    let ckpt = config.checkpoint_path();
    save_checkpoint(&ckpt, &result, &config.train, &extra)?;
    write_file(&ckpt.join(RUN_CONFIG_FILE), config.to_record().render().as_bytes())?;

    let best = result.best();
    writeln!(out, "best epoch {} (val_accuracy {:.4}), {} optimizer steps", result.best_epoch, best.val_accuracy, result.total_steps)?;
    writeln!(out, "checkpoint: {}", ckpt.display())?;
    Ok(ckpt)
}

fn open_checkpoint(config: &RunConfig, checkpoint: Option<&Path>) -> Result<(LoadedCheckpoint, Predictor)> {
    let dir = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| config.checkpoint_path());
    if !dir.exists() {
        bail!("no checkpoint at {} (run `emoclass train` first or pass --checkpoint DIR)", dir.display());
    }
    let budget = config.train.sequence_budget;
    let loaded = load_checkpoint(&dir, Some(budget))?;
    let backends = backends::build(config)?;
    let predictor = Predictor::from_checkpoint(&loaded, backends.classifier, backends.tokenizer, budget)?;
    Ok((loaded, predictor))
}

/// Scores the checkpoint on a labeled split under both averaging modes.
/// Returns the written report files.
pub fn evaluate_split(
    config: &RunConfig,
    split: Split,
    checkpoint: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let (loaded, predictor) = open_checkpoint(config, checkpoint)?;
    let raw = load_split(split_csv(config, split)?, split, true)?;
    let reduction = reduce_dataset(&preprocess_dataset(&raw), config.neutral_policy)?;
    let set = encode_dataset(&reduction.reduced, predictor.tokenizer(), predictor.budget())?;

    let hash = config.hash();
    let reports_dir = config.output_dir.join("reports");
    let mut written = Vec::new();
    for mode in AveragingMode::ALL {
        let eval = evaluate(predictor.backend(), &set, config.train.batch_size, mode)?;
        let (table, _) = render_report(&eval.report);
        let header = format!(
            "# evaluation of {} on the {split} split\n# config_hash={hash}\n# checkpoint_training_hash={}\n",
            loaded.dir.display(),
            loaded.get("training_hash").unwrap_or("unknown"),
        );
        let text = format!("{header}{table}");
        let mut record = KvRecord::new();
        record
            .set("config_hash", &hash)
            .set("split", split)
            .set("checkpoint_training_hash", loaded.get("training_hash").unwrap_or("unknown"))
            .set("loss", eval.loss);
        for (k, v) in eval.report.to_record().entries() {
            record.set(k.clone(), v);
        }

        let stem = format!("{split}-{mode}-{}", short_hash(&hash));
        let text_path = reports_dir.join(format!("{stem}.txt"));
        let kv_path = reports_dir.join(format!("{stem}.kv"));
        write_file(&text_path, text.as_bytes())?;
        write_file(&kv_path, record.render().as_bytes())?;
        if mode == config.averaging {
            write!(out, "{text}")?;
            if split == Split::Validation {
                let best = &loaded.history[loaded.best_epoch - 1];
                writeln!(out, "recorded val_accuracy at best epoch {}: {}; re-evaluated: {}",
                    loaded.best_epoch, best.val_accuracy, eval.report.accuracy)?;
            }
        }
        written.push(text_path);
        written.push(kv_path);
    }
    for p in &written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(written)
}

pub fn default_submission_path(config: &RunConfig) -> PathBuf {
    config
        .output_dir
        .join("predictions")
        .join(format!("submission-{}.csv", short_hash(&config.hash())))
}

/// Sidecar manifest path for a submission file.
pub fn sidecar_path(submission: &Path) -> PathBuf {
    let mut name = submission.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    submission.with_file_name(name)
}

/// Predicts the configured test split and writes a one-hot submission.
pub fn predict(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    output: Option<&Path>,
    include_text: bool,
    out: &mut dyn Write,
) -> Result<PathBuf> {
    config.validate()?;
    let (loaded, predictor) = open_checkpoint(config, checkpoint)?;
    let dataset = load_split(split_csv(config, Split::Test)?, Split::Test, false)?;
    let predictions = predictor.predict_batch(&dataset, config.train.batch_size)?;

    let path = output.map(Path::to_path_buf).unwrap_or_else(|| default_submission_path(config));
    let mut buf = Vec::new();
    write_submission(&predictions, &dataset, &mut buf, include_text)?;
    write_file(&path, &buf)?;

    let counts = prediction_counts(&predictions);
    let mut sidecar = KvRecord::new();
    sidecar
        .set("config_hash", config.hash())
        .set("checkpoint_training_hash", loaded.get("training_hash").unwrap_or("unknown"))
        .set("backend_fingerprint", predictor.backend().fingerprint())
        .set("tokenizer_fingerprint", predictor.tokenizer().fingerprint())
        .set("sequence_budget", predictor.budget())
        .set("include_text", include_text)
        .set("rows", predictions.len())
        .set("submission_sha256", hex::encode(Sha256::digest(&buf)));
    for e in Emotion::ALL {
        sidecar.set(format!("count.{e}"), counts[e.ordinal()]);
    }
    write_file(&sidecar_path(&path), sidecar.render().as_bytes())?;

    writeln!(out, "{} rows predicted", predictions.len())?;
    for e in Emotion::ALL {
        writeln!(out, "{:<10} {:>7}", e.name(), counts[e.ordinal()])?;
    }
    writeln!(out, "submission: {}", path.display())?;
    Ok(path)
}

/// Predicts a single text and prints the class probabilities.
pub fn predict_text(config: &RunConfig, checkpoint: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<Emotion> {
    config.validate()?;
    let (_, predictor) = open_checkpoint(config, checkpoint)?;
    let prediction = predictor.predict_one("input", text)?;
    writeln!(out, "predicted: {}", prediction.emotion)?;
    for (e, p) in Emotion::ALL.iter().zip(prediction.probabilities()) {
        writeln!(out, "{:<10} {:.4}", e.name(), p)?;
    }
    Ok(prediction.emotion)
}

/// Aggregates histories or metric records from several runs.
pub fn report(paths: &[PathBuf], output: Option<&Path>, out: &mut dyn Write) -> Result<String> {
    let mut runs = Vec::with_capacity(paths.len());
    let mut kind = None;
    for path in paths {
        let source = path.display().to_string();
        let text = fs::read_to_string(path).with_context(|| format!("reading {source}"))?;
        let (k, pairs) = aggregate::parse_run(&text, &source)?;
        if kind.is_some_and(|prev| prev != k) {
            bail!("inconsistent schemas: cannot mix training histories and metric records ({source})");
        }
        kind = Some(k);
        runs.push((source, pairs));
    }
    let summaries = aggregate::summarize(&runs)?;
    let sources: Vec<String> = runs.iter().map(|(s, _)| s.clone()).collect();
    let text = aggregate::render(&summaries, kind.expect("at least one run"), &sources);
    if let Some(path) = output {
        write_file(path, text.as_bytes())?;
    }
    write!(out, "{text}")?;
    Ok(text)
}
