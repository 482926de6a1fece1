//! Accuracy, per-class and averaged precision/recall/F1, and confusion
//! matrices over the six emotion classes.
//!
//! Zero-division policy: any ratio with a zero denominator is 0, never NaN.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::kv::KvRecord;

/// Rows are gold classes, columns are predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[usize; NUM_EMOTIONS]; NUM_EMOTIONS],
}

impl ConfusionMatrix {
    pub fn count(&self, gold: usize, pred: usize) -> usize {
        self.counts[gold][pred]
    }

    pub fn counts(&self) -> &[[usize; NUM_EMOTIONS]; NUM_EMOTIONS] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..NUM_EMOTIONS).map(|k| self.counts[k][k]).sum()
    }

    pub fn true_positives(&self, class: usize) -> usize {
        self.counts[class][class]
    }

    /// Column sum: samples predicted as `class`.
    pub fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Row sum: gold samples of `class`.
    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:>10}", "gold\\pred");
        for e in Emotion::ALL {
            let _ = write!(out, " {:>8}", e.name());
        }
        out.push('\n');
        for g in Emotion::ALL {
            let _ = write!(out, "{:>10}", g.name());
            for p in 0..NUM_EMOTIONS {
                let _ = write!(out, " {:>8}", self.counts[g.ordinal()][p]);
            }
            out.push('\n');
        }
        out
    }
}

fn check_ordinals(gold: &[usize], pred: &[usize]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "gold has {} labels but pred has {}",
            gold.len(),
            pred.len()
        )));
    }
    for (side, labels) in [("gold", gold), ("pred", pred)] {
        if let Some((i, v)) = labels.iter().enumerate().find(|(_, &v)| v >= NUM_EMOTIONS) {
            return Err(Error::Contract(format!(
                "{side} label {v} at position {i} is outside 0..{NUM_EMOTIONS}"
            )));
        }
    }
    Ok(())
}

pub fn confusion_matrix(gold: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    check_ordinals(gold, pred)?;
    let mut m = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        m.counts[g][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// Mean over all six classes.
    MacroAll,
    /// Mean over classes occurring in gold or predictions.
    #[default]
    MacroPresent,
}

impl AveragingMode {
    pub const ALL: [AveragingMode; 2] = [AveragingMode::MacroAll, AveragingMode::MacroPresent];

    pub fn name(self) -> &'static str {
        match self {
            AveragingMode::MacroAll => "macro_all",
            AveragingMode::MacroPresent => "macro_present",
        }
    }
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "macro_all" => Ok(AveragingMode::MacroAll),
            "macro_present" => Ok(AveragingMode::MacroPresent),
            other => Err(Error::Config(format!(
                "unknown averaging mode `{other}` (expected macro_all or macro_present)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: [ClassScores; NUM_EMOTIONS],
    pub support: [usize; NUM_EMOTIONS],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted means, reported alongside the macro values.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub averaging: AveragingMode,
    /// Classes that entered the macro mean.
    pub averaged_classes: Vec<Emotion>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(gold: &[usize], pred: &[usize], averaging: AveragingMode) -> Result<MetricsReport> {
    if gold.is_empty() {
        return Err(Error::Contract("cannot report metrics on zero samples".into()));
    }
    let confusion = confusion_matrix(gold, pred)?;
    Ok(report_from_confusion(&confusion, averaging))
}

/// Builds a report from counts. `confusion` must be non-empty.
pub fn report_from_confusion(confusion: &ConfusionMatrix, averaging: AveragingMode) -> MetricsReport {
    let total = confusion.total();
    let mut per_class = [ClassScores::default(); NUM_EMOTIONS];
    let mut support = [0usize; NUM_EMOTIONS];
    for k in 0..NUM_EMOTIONS {
        let tp = confusion.true_positives(k);
        let precision = ratio(tp, confusion.predicted(k));
        let recall = ratio(tp, confusion.support(k));
        per_class[k] = ClassScores {
            precision,
            recall,
            f1: harmonic(precision, recall),
        };
        support[k] = confusion.support(k);
    }

    let averaged_classes: Vec<Emotion> = Emotion::ALL
        .into_iter()
        .filter(|e| match averaging {
            AveragingMode::MacroAll => true,
            AveragingMode::MacroPresent => {
                confusion.support(e.ordinal()) + confusion.predicted(e.ordinal()) > 0
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| {
        if averaged_classes.is_empty() {
            0.0
        } else {
            averaged_classes
                .iter()
                .map(|e| f(&per_class[e.ordinal()]))
                .sum::<f64>()
                / averaged_classes.len() as f64
        }
    };
    let weighted = |f: fn(&ClassScores) -> f64| {
        if total == 0 {
            0.0
        } else {
            (0..NUM_EMOTIONS)
                .map(|k| f(&per_class[k]) * support[k] as f64)
                .sum::<f64>()
                / total as f64
        }
    };

    MetricsReport {
        accuracy: ratio(confusion.trace(), total),
        per_class,
        support,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        averaging,
        averaged_classes,
        confusion: *confusion,
    }
}

impl MetricsReport {
    pub fn samples(&self) -> usize {
        self.support.iter().sum()
    }

    /// Fixed-width table in the style of a classification report.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>14} {:>10} {:>10} {:>10} {:>10}",
            "", "precision", "recall", "f1-score", "support"
        );
        out.push('\n');
        for e in Emotion::ALL {
            let c = &self.per_class[e.ordinal()];
            let _ = writeln!(
                out,
                "{:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                e.name(),
                c.precision,
                c.recall,
                c.f1,
                self.support[e.ordinal()]
            );
        }
        out.push('\n');
        let n = self.samples();
        let _ = writeln!(
            out,
            "{:>14} {:>10} {:>10} {:>10.4} {:>10}",
            "accuracy", "", "", self.accuracy, n
        );
        let _ = writeln!(
            out,
            "{:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            "macro avg", self.macro_precision, self.macro_recall, self.macro_f1, n
        );
        let _ = writeln!(
            out,
            "{:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            "weighted avg", self.weighted_precision, self.weighted_recall, self.weighted_f1, n
        );
        out.push('\n');
        let classes: Vec<&str> = self.averaged_classes.iter().map(|e| e.name()).collect();
        let _ = writeln!(
            out,
            "averaging={} over [{}]; zero_division=0",
            self.averaging,
            classes.join(",")
        );
        out
    }

    /// One metric per line; floats use the shortest round-trip form.
    pub fn to_record(&self) -> KvRecord {
        let mut r = KvRecord::new();
        r.set("averaging", self.averaging)
            .set("zero_division", 0)
            .set("samples", self.samples())
            .set("accuracy", self.accuracy)
            .set("macro_precision", self.macro_precision)
            .set("macro_recall", self.macro_recall)
            .set("macro_f1", self.macro_f1)
            .set("weighted_precision", self.weighted_precision)
            .set("weighted_recall", self.weighted_recall)
            .set("weighted_f1", self.weighted_f1);
        for e in Emotion::ALL {
            let c = &self.per_class[e.ordinal()];
            r.set(format!("precision.{e}"), c.precision)
                .set(format!("recall.{e}"), c.recall)
                .set(format!("f1.{e}"), c.f1)
                .set(format!("support.{e}"), self.support[e.ordinal()]);
        }
        for g in Emotion::ALL {
            let row: Vec<String> = (0..NUM_EMOTIONS)
                .map(|p| self.confusion.count(g.ordinal(), p).to_string())
                .collect();
            r.set(format!("confusion.{g}"), row.join(" "));
        }
        r
    }
}

/// Text table plus machine-readable record of a report.
pub fn render_report(report: &MetricsReport) -> (String, String) {
    (report.render_table(), report.to_record().render())
}
