//! Checkpoint directories: `model.bin` (snapshot blob), `history.csv` and
//! `manifest.txt` tying them to the training configuration.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KvRecord;

use super::{history_from_csv, history_to_csv, EpochLog, Snapshot, TrainConfig, TrainingResult};

pub const FORMAT: &str = "emoclass-checkpoint-v1";
pub const MODEL_FILE: &str = "model.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub dir: PathBuf,
    pub manifest: KvRecord,
    pub snapshot: Snapshot,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub reduced_precision: bool,
    /// Non-fatal mismatches, e.g. a different sequence budget.
    pub warnings: Vec<String>,
}

impl LoadedCheckpoint {
    pub fn sequence_budget(&self) -> Option<usize> {
        self.manifest.get("config.sequence_budget")?.parse().ok()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest.get(key)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the best snapshot, its history and a manifest. `extra` entries
/// (run hash, tokenizer fingerprint, ...) are appended to the manifest.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    result: &TrainingResult,
    config: &TrainConfig,
    extra: &KvRecord,
) -> Result<KvRecord> {
    let dir = dir.as_ref();
    if result.best_epoch == 0 || result.best_epoch > result.history.len() {
        return Err(Error::Contract(format!(
            "best epoch {} is outside the recorded history of {} epochs",
            result.best_epoch,
            result.history.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let blob = &result.best_checkpoint.blob;
    let history = history_to_csv(&result.history);

    let mut manifest = KvRecord::new();
    manifest
        .set("format", FORMAT)
        .set("backend_kind", &result.best_checkpoint.kind)
        .set("backend_fingerprint", &result.best_checkpoint.fingerprint)
        .set("reduced_precision", config.mixed_precision)
        .set("best_epoch", result.best_epoch)
        .set("epochs_recorded", result.history.len())
        .set("total_steps", result.total_steps)
        .set("best_val_accuracy", result.best().val_accuracy)
        .set("train_config_hash", config.hash());
    for (k, v) in config.to_record().entries() {
        manifest.set(format!("config.{k}"), v);
    }
    manifest
        .set("model_file", MODEL_FILE)
        .set("model_bytes", blob.len())
        .set("model_sha256", sha256_hex(blob))
        .set("history_file", HISTORY_FILE)
        .set("history_sha256", sha256_hex(history.as_bytes()));
    for (k, v) in extra.entries() {
        manifest.set(k.clone(), v);
    }

    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(MODEL_FILE, blob)?;
    write(HISTORY_FILE, history.as_bytes())?;
    write(MANIFEST_FILE, manifest.render().as_bytes())?;
    Ok(manifest)
}

/// Reads and verifies a checkpoint directory. When `expected_budget` is
/// given and differs from the recorded one, a warning is attached.
pub fn load_checkpoint(dir: impl AsRef<Path>, expected_budget: Option<usize>) -> Result<LoadedCheckpoint> {
    let dir = dir.as_ref();
    let fail = |reason: String, diff: Vec<(String, String, String)>| Error::CheckpointLoad {
        path: dir.to_path_buf(),
        reason,
        diff,
    };
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| fail(format!("cannot read {name}: {e}"), vec![]));

    let manifest_text = String::from_utf8(read(MANIFEST_FILE)?)
        .map_err(|_| fail("manifest is not UTF-8".into(), vec![]))?;
    let manifest = KvRecord::parse(&manifest_text, &dir.join(MANIFEST_FILE).display().to_string())
        .map_err(|e| fail(e.to_string(), vec![]))?;
    let field = |key: &str| {
        manifest
            .get(key)
            .ok_or_else(|| fail(format!("manifest lacks `{key}`"), vec![]))
    };

    if field("format")? != FORMAT {
        return Err(fail(
            "unsupported checkpoint format".into(),
            vec![("format".into(), FORMAT.into(), field("format")?.into())],
        ));
    }

    let blob = read(field("model_file")?)?;
    let mut diff = Vec::new();
    let recorded_bytes = field("model_bytes")?;
    if recorded_bytes != blob.len().to_string() {
        diff.push(("model_bytes".into(), recorded_bytes.into(), blob.len().to_string()));
    }
    let recorded_sha = field("model_sha256")?;
    let actual_sha = sha256_hex(&blob);
    if recorded_sha != actual_sha {
        diff.push(("model_sha256".into(), recorded_sha.into(), actual_sha));
    }
    let history_bytes = read(field("history_file")?)?;
    let recorded_hist = field("history_sha256")?;
    let actual_hist = sha256_hex(&history_bytes);
    if recorded_hist != actual_hist {
        diff.push(("history_sha256".into(), recorded_hist.into(), actual_hist));
    }
    if !diff.is_empty() {
        return Err(fail("files do not match the manifest".into(), diff));
    }

    let history_text =
        String::from_utf8(history_bytes).map_err(|_| fail("history is not UTF-8".into(), vec![]))?;
    let history = history_from_csv(&history_text, HISTORY_FILE).map_err(|e| fail(e.to_string(), vec![]))?;
    let best_epoch: usize = field("best_epoch")?
        .parse()
        .map_err(|_| fail("best_epoch is not an integer".into(), vec![]))?;
    if best_epoch == 0 || best_epoch > history.len() {
        return Err(fail(
            format!("best_epoch {best_epoch} outside history of {} epochs", history.len()),
            vec![],
        ));
    }
    let reduced_precision = field("reduced_precision")? == "true";

    let mut warnings = Vec::new();
    if let Some(expected) = expected_budget {
        let recorded = manifest.get("config.sequence_budget").unwrap_or("?");
        if recorded != expected.to_string() {
            let w = format!(
                "checkpoint was trained with sequence_budget={recorded}, current run uses {expected}"
            );
            log::warn!("{}: {w}", dir.display());
            warnings.push(w);
        }
    }

    Ok(LoadedCheckpoint {
        dir: dir.to_path_buf(),
        snapshot: Snapshot {
            kind: field("backend_kind")?.to_string(),
            fingerprint: field("backend_fingerprint")?.to_string(),
            blob,
        },
        manifest,
        history,
        best_epoch,
        reduced_precision,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{ClassifierBackend, ReferenceClassifier};

    fn result() -> TrainingResult {
        let model = ReferenceClassifier::new(16, 3, 4).unwrap();
        TrainingResult {
            history: vec![EpochLog {
                epoch: 1,
                train_loss: 1.2,
                val_loss: 1.3,
                val_accuracy: 0.5,
                val_precision: 0.4,
                val_recall: 0.45,
                val_f1: 0.42,
            }],
            best_epoch: 1,
            best_checkpoint: model.snapshot().unwrap(),
            total_steps: 3,
        }
    }

    #[test]
    fn save_load_round_trip_and_budget_warning() {
        let dir = tempfile::tempdir().unwrap();
        let config = TrainConfig::default();
        let r = result();
        let manifest = save_checkpoint(dir.path(), &r, &config, &KvRecord::new()).unwrap();
        assert_eq!(manifest.get("config.learning_rate"), Some("0.00002"));

        let loaded = load_checkpoint(dir.path(), Some(128)).unwrap();
        assert_eq!(loaded.snapshot, r.best_checkpoint);
        assert_eq!(loaded.history, r.history);
        assert!(loaded.warnings.is_empty());

        let loaded = load_checkpoint(dir.path(), Some(64)).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn truncated_model_reports_manifest_diff() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &result(), &TrainConfig::default(), &KvRecord::new()).unwrap();
        let model = dir.path().join(MODEL_FILE);
        let bytes = fs::read(&model).unwrap();
        fs::write(&model, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_checkpoint(dir.path(), None).unwrap_err();
        match &err {
            Error::CheckpointLoad { diff, .. } => {
                assert!(diff.iter().any(|(k, _, _)| k == "model_bytes"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("manifest diff"));
    }

    #[test]
    fn missing_directory_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoint(dir.path().join("absent"), None),
            Err(Error::CheckpointLoad { .. })
        ));
    }
}
