//! CSV ingestion for the one-hot emotion schema, plus dataset diagnostics.
//!
//! Labeled files carry `id,text,anger,disgust,fear,joy,sadness,surprise`;
//! unlabeled (test) files carry `id,text`. Column names match
//! case-insensitively, the six emotion columns must keep their canonical
//! relative order, and unknown columns are skipped with a warning.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::emotion::{Emotion, LabelVector, NUM_EMOTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub text: String,
    /// `None` for unlabeled (test) samples.
    pub labels: Option<LabelVector>,
}

/// An ordered, immutable split. Sample order is load order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    split: Split,
    samples: Vec<Sample>,
    labeled: bool,
}

impl Dataset {
    /// Builds a dataset, enforcing the all-or-none labeling and unique-id
    /// invariants.
    pub fn new(split: Split, samples: Vec<Sample>, labeled: bool) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(samples.len());
        for (row, sample) in samples.iter().enumerate() {
            if sample.labels.is_some() != labeled {
                return Err(Error::Contract(format!(
                    "sample `{}` labeling does not match dataset (labeled={labeled})",
                    sample.id
                )));
            }
            if let Some(first) = seen.insert(&sample.id, row + 1) {
                return Err(Error::DuplicateId {
                    path: format!("<{split}>"),
                    id: sample.id.clone(),
                    first_row: first,
                    second_row: row + 1,
                });
            }
        }
        Ok(Dataset {
            split,
            samples,
            labeled,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Returns a copy with every text rewritten by `f`; ids, labels and
    /// order are untouched.
    pub fn map_texts(&self, mut f: impl FnMut(&str) -> String) -> Dataset {
        Dataset {
            split: self.split,
            labeled: self.labeled,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    id: s.id.clone(),
                    text: f(&s.text),
                    labels: s.labels,
                })
                .collect(),
        }
    }

    /// Drops labels, e.g. to feed a labeled file to prediction.
    pub fn unlabeled(&self) -> Dataset {
        Dataset {
            split: self.split,
            labeled: false,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    labels: None,
                    ..s.clone()
                })
                .collect(),
        }
    }
}

struct ColumnMap {
    id: usize,
    text: usize,
    emotions: Option<[usize; NUM_EMOTIONS]>,
    width: usize,
}

fn map_header(source: &str, header: &csv::StringRecord, labeled: bool) -> Result<ColumnMap> {
    let schema = |column: &str, reason: String| Error::Schema {
        path: source.to_string(),
        column: column.to_string(),
        reason,
    };

    let mut index: HashMap<String, usize> = HashMap::new();
    for (pos, raw) in header.iter().enumerate() {
        let name = raw.trim_start_matches('\u{feff}').trim().to_lowercase();
        if index.insert(name.clone(), pos).is_some() {
            return Err(schema(&name, "column appears more than once".into()));
        }
    }

    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| schema(name, "required column is missing".into()))
    };
    let id = find("id")?;
    let text = find("text")?;

    let emotions = if labeled {
        let mut positions = [0usize; NUM_EMOTIONS];
        for emotion in Emotion::ALL {
            positions[emotion.ordinal()] = find(emotion.name())?;
        }
        for pair in Emotion::ALL.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            if positions[next.ordinal()] < positions[prev.ordinal()] {
                return Err(schema(
                    next.name(),
                    format!(
                        "emotion columns out of canonical order: `{}` appears before `{}`",
                        next.name(),
                        prev.name()
                    ),
                ));
            }
        }
        Some(positions)
    } else {
        None
    };

    for (name, &pos) in &index {
        let known = pos == id
            || pos == text
            || Emotion::ALL.iter().any(|e| e.name() == name.as_str());
        if !known {
            log::warn!("{source}: ignoring extra column `{name}`");
        }
    }

    Ok(ColumnMap {
        id,
        text,
        emotions,
        width: header.len(),
    })
}

/// Reads a split from any reader. `source` names the input in diagnostics.
pub fn read_split<R: Read>(reader: R, source: &str, split: Split, labeled: bool) -> Result<Dataset> {
    let csv_err = |source_err: csv::Error| Error::Csv {
        path: source.to_string(),
        source: source_err,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let columns = map_header(source, &header, labeled)?;

    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        if record.len() != columns.width {
            return Err(Error::Schema {
                path: source.to_string(),
                column: "*".into(),
                reason: format!("row {row} has {} fields, header has {}", record.len(), columns.width),
            });
        }
        let id = record[columns.id].to_string();
        let text = record[columns.text].to_string();

        let labels = match &columns.emotions {
            Some(positions) => {
                let mut flags = [0u8; NUM_EMOTIONS];
                for emotion in Emotion::ALL {
                    let cell = record[positions[emotion.ordinal()]].trim();
                    flags[emotion.ordinal()] = match cell {
                        "0" => 0,
                        "1" => 1,
                        _ => {
                            return Err(Error::LabelValue {
                                path: source.to_string(),
                                row,
                                id,
                                column: emotion.name().to_string(),
                                value: cell.to_string(),
                            })
                        }
                    };
                }
                LabelVector::from_flags(flags)
            }
            None => None,
        };

        if let Some(first_row) = seen.insert(id.clone(), row) {
            return Err(Error::DuplicateId {
                path: source.to_string(),
                id,
                first_row,
                second_row: row,
            });
        }
        samples.push(Sample { id, text, labels });
    }

    Ok(Dataset {
        split,
        samples,
        labeled,
    })
}

/// Loads a split from a CSV file. Text is returned verbatim.
pub fn load_split(path: impl AsRef<Path>, split: Split, labeled: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_split(file, &path.display().to_string(), split, labeled)
}

/// Writes a dataset in the ingestion schema (LF line endings, minimal
/// quoting). Labeled datasets emit the six emotion columns.
pub fn write_split<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Csv {
        path: "<output>".into(),
        source: e,
    };
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);

    let mut header = vec!["id", "text"];
    if dataset.labeled {
        header.extend(Emotion::ALL.iter().map(|e| e.name()));
    }
    wtr.write_record(&header).map_err(to_err)?;

    for sample in &dataset.samples {
        let mut row: Vec<String> = vec![sample.id.clone(), sample.text.clone()];
        if let Some(labels) = sample.labels {
            row.extend(labels.flags().iter().map(|f| f.to_string()));
        }
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    /// Ids whose text is empty or whitespace-only.
    pub empty_text: Vec<String>,
    /// Ids with an all-zero label vector.
    pub neutral: Vec<String>,
    /// Groups of ids sharing an identical text, in first-seen order.
    pub duplicate_texts: Vec<Vec<String>>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.empty_text.is_empty() && self.neutral.is_empty() && self.duplicate_texts.is_empty()
    }
}

/// Reports empty-text rows, neutral rows and duplicate texts.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut by_text: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<String>> = Vec::new();

    for sample in &dataset.samples {
        if sample.text.trim().is_empty() {
            report.empty_text.push(sample.id.clone());
        }
        if sample.labels.is_some_and(|l| l.is_neutral()) {
            report.neutral.push(sample.id.clone());
        }
        match by_text.get(sample.text.as_str()) {
            Some(&g) => groups[g].push(sample.id.clone()),
            None => {
                by_text.insert(&sample.text, groups.len());
                groups.push(vec![sample.id.clone()]);
            }
        }
    }
    report.duplicate_texts = groups.into_iter().filter(|g| g.len() > 1).collect();
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistributionStats {
    pub per_emotion_count: [usize; NUM_EMOTIONS],
    /// Samples with two or more active emotions.
    pub multi_label_count: usize,
    /// Samples with no active emotion.
    pub neutral_count: usize,
    pub total: usize,
}

impl DistributionStats {
    pub fn count(&self, emotion: Emotion) -> usize {
        self.per_emotion_count[emotion.ordinal()]
    }

    /// Plain-text frequency table with one bar per emotion.
    pub fn render(&self, title: &str) -> String {
        let max = self.per_emotion_count.iter().copied().max().unwrap_or(0);
        let mut out = format!("# {title}\n");
        out.push_str(&format!("{:<10} {:>7} {:>8}\n", "emotion", "count", "share"));
        for emotion in Emotion::ALL {
            let n = self.count(emotion);
            let share = if self.total == 0 {
                0.0
            } else {
                n as f64 / self.total as f64
            };
            let bar_len = if max == 0 { 0 } else { (n * 40).div_ceil(max) };
            out.push_str(&format!(
                "{:<10} {:>7} {:>8.4} {}\n",
                emotion.name(),
                n,
                share,
                "#".repeat(bar_len)
            ));
        }
        out.push_str(&format!("{:<10} {:>7}\n", "multi", self.multi_label_count));
        out.push_str(&format!("{:<10} {:>7}\n", "neutral", self.neutral_count));
        out.push_str(&format!("{:<10} {:>7}\n", "total", self.total));
        out
    }
}

/// Per-emotion frequencies of a labeled dataset.
pub fn class_distribution(dataset: &Dataset) -> Result<DistributionStats> {
    if !dataset.labeled {
        return Err(Error::Contract(format!(
            "class distribution requires a labeled dataset, `{}` split is unlabeled",
            dataset.split
        )));
    }
    let mut stats = DistributionStats {
        total: dataset.len(),
        ..Default::default()
    };
    for labels in dataset.samples.iter().filter_map(|s| s.labels) {
        for emotion in labels.active() {
            stats.per_emotion_count[emotion.ordinal()] += 1;
        }
        match labels.count() {
            0 => stats.neutral_count += 1,
            1 => {}
            _ => stats.multi_label_count += 1,
        }
    }
    Ok(stats)
}
