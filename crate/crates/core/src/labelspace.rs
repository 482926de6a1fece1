//! Multi-hot to single-class reduction and the inverse one-hot expansion.
//!
//! The source annotations are multi-label, but the classifier is trained
//! as a six-way multi-class model and submissions carry exactly one active
//! column per row. Secondary labels of multi-hot rows are therefore
//! discarded; [`Reduction::multi_hot_rows`] counts how many rows lost
//! information so the loss is visible in run manifests.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{Dataset, Sample};
use crate::emotion::{Emotion, LabelVector, NUM_EMOTIONS};
use crate::error::{Error, Result};

/// Rule picking one emotion out of a multi-hot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// The active emotion with the smallest canonical ordinal.
    #[default]
    LowestOrdinal,
}

impl TieBreak {
    pub fn name(self) -> &'static str {
        match self {
            TieBreak::LowestOrdinal => "lowest_ordinal",
        }
    }

    pub fn resolve(self, labels: &LabelVector) -> Option<Emotion> {
        match self {
            TieBreak::LowestOrdinal => labels.active().next(),
        }
    }
}

/// What happens to all-zero label vectors during reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeutralPolicy {
    #[default]
    Drop,
    Error,
}

impl NeutralPolicy {
    pub fn name(self) -> &'static str {
        match self {
            NeutralPolicy::Drop => "drop",
            NeutralPolicy::Error => "error",
        }
    }
}

impl fmt::Display for NeutralPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NeutralPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "drop" => Ok(NeutralPolicy::Drop),
            "error" => Ok(NeutralPolicy::Error),
            other => Err(Error::Config(format!(
                "unknown neutral policy `{other}` (expected drop or error)"
            ))),
        }
    }
}

/// Dominant emotion under the default lowest-ordinal rule.
pub fn to_dominant(labels: &LabelVector) -> Result<Emotion> {
    to_dominant_with(labels, TieBreak::default())
}

pub fn to_dominant_with(labels: &LabelVector, rule: TieBreak) -> Result<Emotion> {
    rule.resolve(labels).ok_or(Error::NeutralInput)
}

/// Index of the largest score; the lowest ordinal wins exact ties, matching
/// the reduction tie-break. NaN scores never win.
pub fn argmax(scores: &[f64; NUM_EMOTIONS]) -> Emotion {
    let mut best = 0;
    for k in 1..NUM_EMOTIONS {
        if scores[k] > scores[best] || (scores[best].is_nan() && !scores[k].is_nan()) {
            best = k;
        }
    }
    Emotion::ALL[best]
}

pub fn to_one_hot(label: Emotion) -> LabelVector {
    let mut v = LabelVector::default();
    v.set(label, true);
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Reduction {
    pub reduced: Vec<(Sample, Emotion)>,
    pub dropped: Vec<Sample>,
    /// Multi-hot rows whose secondary labels were discarded.
    pub multi_hot_rows: usize,
}

impl Reduction {
    /// Key/value lines for the run manifest.
    pub fn manifest_entries(&self, rule: TieBreak, policy: NeutralPolicy) -> Vec<(String, String)> {
        vec![
            ("tie_break".into(), rule.name().into()),
            ("neutral_policy".into(), policy.name().into()),
            ("discarded_secondary_labels".into(), self.multi_hot_rows.to_string()),
            ("dropped_neutral_rows".into(), self.dropped.len().to_string()),
        ]
    }
}

/// Reduces every labeled sample to its dominant emotion, preserving order.
pub fn reduce_dataset(dataset: &Dataset, policy: NeutralPolicy) -> Result<Reduction> {
    reduce_dataset_with(dataset, policy, TieBreak::default())
}

pub fn reduce_dataset_with(
    dataset: &Dataset,
    policy: NeutralPolicy,
    rule: TieBreak,
) -> Result<Reduction> {
    if !dataset.labeled() {
        return Err(Error::Contract(format!(
            "label reduction requires a labeled dataset, `{}` split is unlabeled",
            dataset.split()
        )));
    }

    if policy == NeutralPolicy::Error {
        let ids: Vec<String> = dataset
            .samples()
            .iter()
            .filter(|s| s.labels.is_some_and(|l| l.is_neutral()))
            .map(|s| s.id.clone())
            .collect();
        if !ids.is_empty() {
            return Err(Error::NeutralRows { ids });
        }
    }

    let mut out = Reduction::default();
    for sample in dataset.samples() {
        let labels = sample.labels.unwrap_or_default();
        match to_dominant_with(&labels, rule) {
            Ok(emotion) => {
                if labels.count() > 1 {
                    out.multi_hot_rows += 1;
                }
                out.reduced.push((sample.clone(), emotion));
            }
            Err(_) => out.dropped.push(sample.clone()),
        }
    }
    if out.multi_hot_rows > 0 {
        log::info!(
            "{}: {} multi-hot rows reduced by {}",
            dataset.split(),
            out.multi_hot_rows,
            rule.name()
        );
    }
    Ok(out)
}
