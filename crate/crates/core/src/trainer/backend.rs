use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::encode::FeatureRecord;
use crate::error::{Error, Result};

use super::optim::AdamWSettings;

/// Raw class scores for one record, indexed by emotion ordinal.
pub type Logits = [f64; NUM_EMOTIONS];

/// Restorable parameter state of a classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub kind: String,
    pub fingerprint: String,
    pub blob: Vec<u8>,
}

/// A six-way sequence classifier the trainer can drive.
///
/// `backward` stores gradients internally; the following `apply_update`
/// clips them and takes one optimizer step. A run owns its backend
/// exclusively.
pub trait ClassifierBackend: Send {
    /// Short backend name, e.g. `reference`.
    fn kind(&self) -> &str;

    /// Architecture identifier; snapshots only restore into a backend with
    /// the same fingerprint.
    fn fingerprint(&self) -> String;

    fn forward(&self, batch: &[&FeatureRecord]) -> Result<Vec<Logits>>;

    fn loss(&self, scores: &[Logits], labels: &[Emotion]) -> f64 {
        mean_cross_entropy(scores, labels)
    }

    /// Mean loss over a labeled batch; gradients are kept for
    /// [`apply_update`](Self::apply_update).
    fn backward(&mut self, batch: &[&FeatureRecord]) -> Result<f64>;

    fn apply_update(&mut self, lr: f64, optimizer: &AdamWSettings) -> Result<()>;

    fn snapshot(&self) -> Result<Snapshot>;

    /// Loads weights and clears optimizer state.
    fn restore(&mut self, snapshot: &Snapshot) -> Result<()>;

    fn set_reduced_precision(&mut self, on: bool);

    fn reduced_precision(&self) -> bool;
}

pub(crate) fn check_snapshot(backend: &dyn ClassifierBackend, snapshot: &Snapshot) -> Result<()> {
    if snapshot.kind != backend.kind() || snapshot.fingerprint != backend.fingerprint() {
        return Err(Error::Backend(format!(
            "snapshot for `{}` ({}) cannot be restored into `{}` ({})",
            snapshot.kind,
            snapshot.fingerprint,
            backend.kind(),
            backend.fingerprint()
        )));
    }
    Ok(())
}

pub(crate) fn batch_labels(batch: &[&FeatureRecord]) -> Result<Vec<Emotion>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| Error::Contract(format!("batch record {i} has no label")))
        })
        .collect()
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(scores: &Logits) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn softmax(scores: &Logits) -> Logits {
    let lse = log_sum_exp(scores);
    scores.map(|s| (s - lse).exp())
}

/// Mean negative log-likelihood of the gold classes. Empty input gives 0.
pub fn mean_cross_entropy(scores: &[Logits], labels: &[Emotion]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, l)| log_sum_exp(s) - s[l.ordinal()])
        .sum();
    total / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores_give_log_six() {
        let loss = mean_cross_entropy(&[[0.0; 6]], &[Emotion::Joy]);
        assert!((loss - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_with_large_scores() {
        let p = softmax(&[1000.0, 999.0, 0.0, 0.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1]);
    }
}
