//! Small deterministic classifier for offline runs: mean-pooled token
//! embeddings followed by a linear six-way head.
//!
//! Parameters live in one flat vector laid out as
//! `embeddings[vocab * dim] | head_weights[6 * dim] | head_bias[6]`.
//! Reduced-precision mode runs pooling and the head in `f32` while keeping
//! `f64` master weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emotion::NUM_EMOTIONS;
use crate::encode::FeatureRecord;
use crate::error::{Error, Result};

use super::backend::{batch_labels, check_snapshot, softmax, ClassifierBackend, Logits, Snapshot};
use super::optim::{clip_grad_norm, AdamW, AdamWSettings};

pub const KIND: &str = "reference";
const BLOB_MAGIC: &[u8; 8] = b"EMOREF01";
const MAX_PARAMS: usize = 1 << 28;

#[derive(Debug, Clone)]
pub struct ReferenceClassifier {
    vocab: usize,
    dim: usize,
    params: Vec<f64>,
    grads: Vec<f64>,
    pending_grads: bool,
    optimizer: AdamW,
    reduced_precision: bool,
}

fn param_count(vocab: usize, dim: usize) -> Option<usize> {
    vocab
        .checked_mul(dim)?
        .checked_add(NUM_EMOTIONS.checked_mul(dim)?)?
        .checked_add(NUM_EMOTIONS)
        .filter(|&n| n <= MAX_PARAMS)
}

impl ReferenceClassifier {
    pub const DEFAULT_DIM: usize = 32;

    /// Seeded random initialization.
    pub fn new(vocab: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::Config("reference backend needs vocab > 0 and dim > 0".into()));
        }
        let n = param_count(vocab, dim)
            .ok_or_else(|| Error::Config(format!("reference backend too large: {vocab} x {dim}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(n);
        let emb_scale = 0.5;
        let head_scale = 1.0 / (dim as f64).sqrt();
        params.extend((0..vocab * dim).map(|_| rng.gen_range(-emb_scale..emb_scale)));
        params.extend((0..NUM_EMOTIONS * dim).map(|_| rng.gen_range(-head_scale..head_scale)));
        params.extend(std::iter::repeat_n(0.0, NUM_EMOTIONS));
        Ok(Self::with_params(vocab, dim, params))
    }

    fn with_params(vocab: usize, dim: usize, params: Vec<f64>) -> Self {
        let n = params.len();
        ReferenceClassifier {
            vocab,
            dim,
            params,
            grads: vec![0.0; n],
            pending_grads: false,
            optimizer: AdamW::new(n),
            reduced_precision: false,
        }
    }

    /// Rebuilds a classifier from a snapshot blob alone.
    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Self> {
        if snapshot.kind != KIND {
            return Err(Error::Backend(format!(
                "snapshot kind `{}` is not `{KIND}`",
                snapshot.kind
            )));
        }
        let (vocab, dim, params) = decode_blob(&snapshot.blob)?;
        let model = Self::with_params(vocab, dim, params);
        if model.fingerprint() != snapshot.fingerprint {
            return Err(Error::Backend(format!(
                "snapshot fingerprint `{}` does not match its blob ({})",
                snapshot.fingerprint,
                model.fingerprint()
            )));
        }
        Ok(model)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    fn head_offset(&self) -> usize {
        self.vocab * self.dim
    }

    fn bias_offset(&self) -> usize {
        self.head_offset() + NUM_EMOTIONS * self.dim
    }

    fn real_ids<'r>(&self, record: &'r FeatureRecord) -> Result<&'r [u32]> {
        let n = record.real_tokens();
        let ids = &record.token_ids[..n];
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab) {
            return Err(Error::Backend(format!(
                "token id {bad} outside reference vocabulary of {}",
                self.vocab
            )));
        }
        Ok(ids)
    }

    /// Mean of the embeddings of real tokens; zero vector when there are none.
    fn pool(&self, ids: &[u32]) -> Vec<f64> {
        let dim = self.dim;
        if ids.is_empty() {
            return vec![0.0; dim];
        }
        if self.reduced_precision {
            let mut acc = vec![0f32; dim];
            for &id in ids {
                let row = &self.params[id as usize * dim..(id as usize + 1) * dim];
                acc.iter_mut().zip(row).for_each(|(a, &w)| *a += w as f32);
            }
            let inv = 1.0 / ids.len() as f32;
            acc.into_iter().map(|a| f64::from(a * inv)).collect()
        } else {
            let mut acc = vec![0f64; dim];
            for &id in ids {
                let row = &self.params[id as usize * dim..(id as usize + 1) * dim];
                acc.iter_mut().zip(row).for_each(|(a, &w)| *a += w);
            }
            let inv = 1.0 / ids.len() as f64;
            acc.into_iter().map(|a| a * inv).collect()
        }
    }

    fn head(&self, pooled: &[f64]) -> Logits {
        let dim = self.dim;
        let w = &self.params[self.head_offset()..self.bias_offset()];
        let b = &self.params[self.bias_offset()..];
        let mut out = [0.0; NUM_EMOTIONS];
        for (c, slot) in out.iter_mut().enumerate() {
            let row = &w[c * dim..(c + 1) * dim];
            *slot = if self.reduced_precision {
                let dot: f32 = row.iter().zip(pooled).map(|(&w, &h)| w as f32 * h as f32).sum();
                f64::from(dot + b[c] as f32)
            } else {
                row.iter().zip(pooled).map(|(w, h)| w * h).sum::<f64>() + b[c]
            };
        }
        out
    }
}

impl ClassifierBackend for ReferenceClassifier {
    fn kind(&self) -> &str {
        KIND
    }

    fn fingerprint(&self) -> String {
        format!("reference-meanpool:vocab={}:dim={}", self.vocab, self.dim)
    }

    fn forward(&self, batch: &[&FeatureRecord]) -> Result<Vec<Logits>> {
        batch
            .iter()
            .map(|r| Ok(self.head(&self.pool(self.real_ids(r)?))))
            .collect()
    }

    fn backward(&mut self, batch: &[&FeatureRecord]) -> Result<f64> {
        let labels = batch_labels(batch)?;
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        if batch.is_empty() {
            self.pending_grads = true;
            return Ok(0.0);
        }
        let dim = self.dim;
        let head_off = self.head_offset();
        let bias_off = self.bias_offset();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;

        for (record, label) in batch.iter().zip(&labels) {
            let ids = self.real_ids(record)?;
            let pooled = self.pool(ids);
            let logits = self.head(&pooled);
            let probs = softmax(&logits);
            loss += -probs[label.ordinal()].ln();

            let mut dlogits = probs;
            dlogits[label.ordinal()] -= 1.0;
            dlogits.iter_mut().for_each(|d| *d *= scale);

            let mut dpooled = vec![0.0; dim];
            for (c, &dl) in dlogits.iter().enumerate() {
                self.grads[bias_off + c] += dl;
                let w_row = head_off + c * dim;
                for d in 0..dim {
                    self.grads[w_row + d] += dl * pooled[d];
                    dpooled[d] += self.params[w_row + d] * dl;
                }
            }
            if !ids.is_empty() {
                let inv = 1.0 / ids.len() as f64;
                for &id in ids {
                    let row = id as usize * dim;
                    for (g, dp) in self.grads[row..row + dim].iter_mut().zip(&dpooled) {
                        *g += dp * inv;
                    }
                }
            }
        }
        self.pending_grads = true;
        Ok(loss * scale)
    }

    fn apply_update(&mut self, lr: f64, optimizer: &AdamWSettings) -> Result<()> {
        if !self.pending_grads {
            return Err(Error::Contract("apply_update called without a preceding backward".into()));
        }
        clip_grad_norm(&mut self.grads, optimizer.max_grad_norm);
        self.optimizer.step(&mut self.params, &self.grads, lr, optimizer);
        self.pending_grads = false;
        Ok(())
    }

    fn snapshot(&self) -> Result<Snapshot> {
        Ok(Snapshot {
            kind: KIND.to_string(),
            fingerprint: self.fingerprint(),
            blob: encode_blob(self.vocab, self.dim, &self.params),
        })
    }

    fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        check_snapshot(self, snapshot)?;
        let (_, _, params) = decode_blob(&snapshot.blob)?;
        self.params = params;
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.pending_grads = false;
        self.optimizer.reset();
        Ok(())
    }

    fn set_reduced_precision(&mut self, on: bool) {
        self.reduced_precision = on;
    }

    fn reduced_precision(&self) -> bool {
        self.reduced_precision
    }
}

fn encode_blob(vocab: usize, dim: usize, params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + params.len() * 8);
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&(vocab as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(NUM_EMOTIONS as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Parses a reference snapshot blob into `(vocab, dim, params)`.
pub fn decode_blob(blob: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let err = |m: String| Error::Decode(format!("reference snapshot: {m}"));
    if blob.len() < 20 || &blob[..8] != BLOB_MAGIC {
        return Err(err("bad magic or short header".into()));
    }
    let word = |at: usize| u32::from_le_bytes([blob[at], blob[at + 1], blob[at + 2], blob[at + 3]]) as usize;
    let (vocab, dim, classes) = (word(8), word(12), word(16));
    if classes != NUM_EMOTIONS {
        return Err(err(format!("expected {NUM_EMOTIONS} classes, found {classes}")));
    }
    if vocab == 0 || dim == 0 {
        return Err(err("zero-sized dimensions".into()));
    }
    let n = param_count(vocab, dim).ok_or_else(|| err(format!("dimensions {vocab} x {dim} too large")))?;
    let body = &blob[20..];
    if body.len() != n * 8 {
        return Err(err(format!("expected {} parameter bytes, found {}", n * 8, body.len())));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(err(format!("parameter {i} is not finite")));
    }
    Ok((vocab, dim, params))
}
