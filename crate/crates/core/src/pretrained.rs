//! Adapter for a pretrained transformer encoder hosted in a worker process.
//!
//! The worker speaks one JSON object per line on stdin/stdout. Every reply
//! carries `"ok": true` or `"ok": false` with an `"error"` message.
//!
//! | op              | request fields                        | reply fields                              |
//! |-----------------|---------------------------------------|-------------------------------------------|
//! | `probe`         |                                       | `protocol`, `num_labels`, `pad_id`, `fingerprint`, `tokenizer_fingerprint` |
//! | `tokenize`      | `text`                                | `ids` (special tokens included)           |
//! | `forward`       | `ids`, `mask`                         | `logits` (one row of 6 per record)        |
//! | `backward`      | `ids`, `mask`, `labels`               | `loss`                                    |
//! | `apply_update`  | `lr`, `beta1`, `beta2`, `eps`, `weight_decay`, `max_grad_norm` | |
//! | `save`/`load`   | `path`                                |                                           |
//! | `set_precision` | `reduced`                             |                                           |
//! | `shutdown`      |                                       |                                           |
//!
//! `tools/pretrained_worker.py` implements it with PyTorch.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex, MutexGuard};

use serde_json::{json, Value};

use crate::emotion::NUM_EMOTIONS;
use crate::encode::{FeatureRecord, TokenizerBackend};
use crate::error::{Error, Result};
use crate::trainer::backend::{batch_labels, check_snapshot};
use crate::trainer::{AdamWSettings, ClassifierBackend, Logits, Snapshot};

pub const PROTOCOL_VERSION: u64 = 1;
pub const KIND: &str = "pretrained-adapter";

/// What the worker reported at startup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub protocol: u64,
    pub pad_id: u32,
    pub fingerprint: String,
    pub tokenizer_fingerprint: String,
}

struct Worker {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

fn backend_err(msg: impl Into<String>) -> Error {
    Error::Backend(msg.into())
}

impl Worker {
    fn request(&mut self, request: Value) -> Result<Value> {
        let op = request["op"].as_str().unwrap_or("?").to_string();
        let line = serde_json::to_string(&request).map_err(|e| backend_err(e.to_string()))?;
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| backend_err(format!("worker `{op}` request failed: {e}")))?;

        let mut reply = String::new();
        let read = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| backend_err(format!("worker `{op}` reply failed: {e}")))?;
        if read == 0 {
            let status = self.child.try_wait().ok().flatten();
            return Err(backend_err(format!(
                "worker exited during `{op}`{}",
                status.map(|s| format!(" ({s})")).unwrap_or_default()
            )));
        }
        let value: Value = serde_json::from_str(reply.trim())
            .map_err(|e| backend_err(format!("worker `{op}` sent invalid JSON: {e}")))?;
        if value["ok"].as_bool() != Some(true) {
            let msg = value["error"].as_str().unwrap_or("no error message");
            return Err(backend_err(format!("worker `{op}` failed: {msg}")));
        }
        Ok(value)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "{}", json!({"op": "shutdown"}));
        let _ = self.stdin.flush();
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.wait();
        }
    }
}

#[derive(Clone)]
struct Session {
    worker: Arc<Mutex<Worker>>,
    caps: Arc<Capabilities>,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, Worker> {
        // A panic while holding the lock leaves the protocol mid-message;
        // the next request will surface that as an error.
        self.worker.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Starts `command` (whitespace-separated program and arguments, followed
/// by `--model MODEL` when given) and runs the capability probe.
pub fn connect(command: &str, model: Option<&str>, seed: u64) -> Result<(PretrainedTokenizer, PretrainedClassifier)> {
    let mut parts = command.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::Config("pretrained_worker is empty".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(parts).arg("--seed").arg(seed.to_string());
    if let Some(model) = model {
        cmd.arg("--model").arg(model);
    }
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| backend_err(format!("cannot start worker `{command}`: {e}")))?;
    let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
    let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
    let mut worker = Worker { child, stdin, stdout };

    let reply = worker.request(json!({"op": "probe"}))?;
    let caps = parse_capabilities(&reply)?;
    let session = Session {
        worker: Arc::new(Mutex::new(worker)),
        caps: Arc::new(caps),
    };
    Ok((
        PretrainedTokenizer { session: session.clone() },
        PretrainedClassifier {
            session,
            reduced: false,
        },
    ))
}

fn parse_capabilities(reply: &Value) -> Result<Capabilities> {
    let protocol = reply["protocol"].as_u64().unwrap_or(0);
    if protocol != PROTOCOL_VERSION {
        return Err(backend_err(format!(
            "worker speaks protocol {protocol}, expected {PROTOCOL_VERSION}"
        )));
    }
    let labels = reply["num_labels"].as_u64().unwrap_or(0);
    if labels != NUM_EMOTIONS as u64 {
        return Err(backend_err(format!("worker model has {labels} labels, expected {NUM_EMOTIONS}")));
    }
    let text = |key: &str| {
        reply[key]
            .as_str()
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .ok_or_else(|| backend_err(format!("probe reply lacks `{key}`")))
    };
    let pad_id = reply["pad_id"]
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| backend_err("probe reply lacks `pad_id`"))?;
    Ok(Capabilities {
        protocol,
        pad_id,
        fingerprint: text("fingerprint")?,
        tokenizer_fingerprint: text("tokenizer_fingerprint")?,
    })
}

/// The worker's subword tokenizer.
#[derive(Clone)]
pub struct PretrainedTokenizer {
    session: Session,
}

impl PretrainedTokenizer {
    pub fn capabilities(&self) -> &Capabilities {
        &self.session.caps
    }
}

impl TokenizerBackend for PretrainedTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let reply = self.session.lock().request(json!({"op": "tokenize", "text": text}))?;
        reply["ids"]
            .as_array()
            .ok_or_else(|| backend_err("tokenize reply lacks `ids`"))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .and_then(|v| u32::try_from(v).ok())
                    .ok_or_else(|| backend_err(format!("invalid token id {v}")))
            })
            .collect()
    }

    fn pad_id(&self) -> u32 {
        self.session.caps.pad_id
    }

    fn fingerprint(&self) -> String {
        self.session.caps.tokenizer_fingerprint.clone()
    }
}

/// Sequence classifier running in the worker.
pub struct PretrainedClassifier {
    session: Session,
    reduced: bool,
}

impl PretrainedClassifier {
    pub fn capabilities(&self) -> &Capabilities {
        &self.session.caps
    }
}

fn batch_json<'a>(batch: &[&'a FeatureRecord]) -> (Vec<&'a [u32]>, Vec<&'a [u8]>) {
    (
        batch.iter().map(|r| r.token_ids.as_slice()).collect(),
        batch.iter().map(|r| r.attention_mask.as_slice()).collect(),
    )
}

fn parse_logits(reply: &Value, expected: usize) -> Result<Vec<Logits>> {
    let rows = reply["logits"]
        .as_array()
        .ok_or_else(|| backend_err("forward reply lacks `logits`"))?;
    if rows.len() != expected {
        return Err(backend_err(format!("worker returned {} rows for {expected} records", rows.len())));
    }
    rows.iter()
        .map(|row| {
            let vals = row.as_array().filter(|r| r.len() == NUM_EMOTIONS).ok_or_else(|| {
                backend_err(format!("logit row must have {NUM_EMOTIONS} entries"))
            })?;
            let mut out = [0.0; NUM_EMOTIONS];
            for (slot, v) in out.iter_mut().zip(vals) {
                *slot = v.as_f64().ok_or_else(|| backend_err(format!("non-numeric logit {v}")))?;
            }
            Ok(out)
        })
        .collect()
}

impl ClassifierBackend for PretrainedClassifier {
    fn kind(&self) -> &str {
        KIND
    }

    fn fingerprint(&self) -> String {
        self.session.caps.fingerprint.clone()
    }

    fn forward(&self, batch: &[&FeatureRecord]) -> Result<Vec<Logits>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let (ids, mask) = batch_json(batch);
        let reply = self.session.lock().request(json!({"op": "forward", "ids": ids, "mask": mask}))?;
        parse_logits(&reply, batch.len())
    }

    fn backward(&mut self, batch: &[&FeatureRecord]) -> Result<f64> {
        let labels: Vec<usize> = batch_labels(batch)?.iter().map(|e| e.ordinal()).collect();
        let (ids, mask) = batch_json(batch);
        let reply = self
            .session
            .lock()
            .request(json!({"op": "backward", "ids": ids, "mask": mask, "labels": labels}))?;
        // A NaN loss arrives as null; the trainer reports it with the batch rows.
        Ok(reply["loss"].as_f64().unwrap_or(f64::NAN))
    }

    fn apply_update(&mut self, lr: f64, optimizer: &AdamWSettings) -> Result<()> {
        self.session.lock().request(json!({
            "op": "apply_update",
            "lr": lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.epsilon,
            "weight_decay": optimizer.weight_decay,
            "max_grad_norm": optimizer.max_grad_norm,
        }))?;
        Ok(())
    }

    fn snapshot(&self) -> Result<Snapshot> {
        let dir = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
        let path = dir.path().join("weights.pt");
        self.session
            .lock()
            .request(json!({"op": "save", "path": path.display().to_string()}))?;
        let blob = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Snapshot {
            kind: KIND.to_string(),
            fingerprint: self.fingerprint(),
            blob,
        })
    }

    fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        check_snapshot(self, snapshot)?;
        let dir = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
        let path = dir.path().join("weights.pt");
        std::fs::write(&path, &snapshot.blob).map_err(|e| Error::io(&path, e))?;
        self.session
            .lock()
            .request(json!({"op": "load", "path": path.display().to_string()}))?;
        Ok(())
    }

    fn set_reduced_precision(&mut self, on: bool) {
        match self.session.lock().request(json!({"op": "set_precision", "reduced": on})) {
            Ok(_) => self.reduced = on,
            Err(e) => log::warn!("worker kept full precision: {e}"),
        }
    }

    fn reduced_precision(&self) -> bool {
        self.reduced
    }
}
