//! Prediction with a trained checkpoint and export of one-hot submission
//! files.

use std::io::Write;

use crate::corpus::Dataset;
use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::encode::{encode_text, FeatureRecord, TokenizerBackend};
use crate::error::{Error, Result};
use crate::labelspace::{argmax, to_one_hot};
use crate::textnorm::normalize_text;
use crate::trainer::checkpoint::LoadedCheckpoint;
use crate::trainer::{softmax, ClassifierBackend, Logits};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: String,
    pub emotion: Emotion,
    /// Raw class scores before argmax.
    pub scores: Logits,
}

impl Prediction {
    /// Softmax view of the scores, for display only.
    pub fn probabilities(&self) -> Logits {
        softmax(&self.scores)
    }
}

/// A restored classifier with the preprocessing it was trained with.
pub struct Predictor {
    backend: Box<dyn ClassifierBackend>,
    tokenizer: Box<dyn TokenizerBackend>,
    budget: usize,
}

impl Predictor {
    pub fn new(
        backend: Box<dyn ClassifierBackend>,
        tokenizer: Box<dyn TokenizerBackend>,
        budget: usize,
    ) -> Self {
        Predictor {
            backend,
            tokenizer,
            budget,
        }
    }

    /// Restores `checkpoint` into `backend`, refusing mismatched
    /// architectures or tokenizers.
    pub fn from_checkpoint(
        checkpoint: &LoadedCheckpoint,
        mut backend: Box<dyn ClassifierBackend>,
        tokenizer: Box<dyn TokenizerBackend>,
        budget: usize,
    ) -> Result<Self> {
        let load_err = |reason: String, key: &str, expected: String, actual: String| Error::CheckpointLoad {
            path: checkpoint.dir.clone(),
            reason,
            diff: vec![(key.to_string(), expected, actual)],
        };
        if let Some(recorded) = checkpoint.get("tokenizer_fingerprint") {
            if recorded != tokenizer.fingerprint() {
                return Err(load_err(
                    "tokenizer does not match the checkpoint".into(),
                    "tokenizer_fingerprint",
                    recorded.into(),
                    tokenizer.fingerprint(),
                ));
            }
        }
        backend.restore(&checkpoint.snapshot).map_err(|e| {
            load_err(
                e.to_string(),
                "backend_fingerprint",
                checkpoint.snapshot.fingerprint.clone(),
                backend.fingerprint(),
            )
        })?;
        backend.set_reduced_precision(checkpoint.reduced_precision);
        Ok(Predictor::new(backend, tokenizer, budget))
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn backend(&self) -> &dyn ClassifierBackend {
        &*self.backend
    }

    pub fn tokenizer(&self) -> &dyn TokenizerBackend {
        &*self.tokenizer
    }

    /// Same normalization and encoding path as training.
    pub fn featurize(&self, text: &str) -> Result<FeatureRecord> {
        encode_text(&normalize_text(text), &*self.tokenizer, self.budget)
    }

    pub fn predict_one(&self, sample_id: &str, text: &str) -> Result<Prediction> {
        let record = self.featurize(text)?;
        let scores = self.backend.forward(&[&record])?[0];
        Ok(Prediction {
            sample_id: sample_id.to_string(),
            emotion: argmax(&scores),
            scores,
        })
    }

    /// One prediction per sample in input order; labels are ignored.
    pub fn predict_batch(&self, dataset: &Dataset, batch_size: usize) -> Result<Vec<Prediction>> {
        let batch_size = batch_size.max(1);
        let mut out = Vec::with_capacity(dataset.len());
        for chunk in dataset.samples().chunks(batch_size) {
            let records = chunk
                .iter()
                .map(|s| self.featurize(&s.text))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FeatureRecord> = records.iter().collect();
            let scores = self.backend.forward(&refs)?;
            out.extend(chunk.iter().zip(scores).map(|(s, scores)| Prediction {
                sample_id: s.id.clone(),
                emotion: argmax(&scores),
                scores,
            }));
        }
        Ok(out)
    }
}

pub fn prediction_counts(predictions: &[Prediction]) -> [usize; NUM_EMOTIONS] {
    let mut counts = [0; NUM_EMOTIONS];
    for p in predictions {
        counts[p.emotion.ordinal()] += 1;
    }
    counts
}

/// Writes `id,text,anger,...,surprise` (or `id,anger,...` without text),
/// one one-hot row per sample in dataset order, LF line endings.
pub fn write_submission<W: Write>(
    predictions: &[Prediction],
    dataset: &Dataset,
    writer: W,
    include_text: bool,
) -> Result<()> {
    if predictions.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} samples",
            predictions.len(),
            dataset.len()
        )));
    }
    if let Some((row, (p, s))) = predictions
        .iter()
        .zip(dataset.samples())
        .enumerate()
        .find(|(_, (p, s))| p.sample_id != s.id)
    {
        return Err(Error::Contract(format!(
            "prediction/sample id mismatch at row {}: prediction `{}` vs sample `{}`",
            row + 1,
            p.sample_id,
            s.id
        )));
    }

    let to_err = |e: csv::Error| Error::Csv {
        path: "<submission>".into(),
        source: e,
    };
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["id"];
    if include_text {
        header.push("text");
    }
    header.extend(Emotion::ALL.iter().map(|e| e.name()));
    wtr.write_record(&header).map_err(to_err)?;

    for (p, s) in predictions.iter().zip(dataset.samples()) {
        let mut row = vec![s.id.clone()];
        if include_text {
            row.push(s.text.clone());
        }
        row.extend(to_one_hot(p.emotion).flags().iter().map(u8::to_string));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<submission>", e))?;
    Ok(())
}
