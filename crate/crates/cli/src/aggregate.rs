//! Multi-run aggregation for `emoclass report`.
//!
//! Inputs are either training histories (the best-epoch row of each run is
//! used) or machine-readable metric records. All inputs must share one
//! schema.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use emoclass::kv::KvRecord;
use emoclass::trainer::{history_from_csv, select_best, HISTORY_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation (divides by the run count).
    pub spread: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    History,
    MetricsRecord,
}

/// Parses one input into ordered `(metric, value)` pairs.
pub fn parse_run(text: &str, source: &str) -> Result<(InputKind, Vec<(String, f64)>)> {
    let first = text.lines().next().unwrap_or("").trim();
    if first.starts_with("epoch,") {
        let history = history_from_csv(text, source)?;
        let best = select_best(&history).with_context(|| format!("{source}: empty history"))?;
        let row = &history[best - 1];
        let values = [
            row.train_loss,
            row.val_loss,
            row.val_accuracy,
            row.val_precision,
            row.val_recall,
            row.val_f1,
        ];
        let pairs = HISTORY_HEADER[1..]
            .iter()
            .zip(values)
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        return Ok((InputKind::History, pairs));
    }

    let record = KvRecord::parse(text, source)?;
    let pairs: Vec<(String, f64)> = record
        .entries()
        .iter()
        .filter_map(|(k, v)| v.parse::<f64>().ok().map(|x| (k.clone(), x)))
        .collect();
    if pairs.is_empty() {
        bail!("{source}: no numeric metrics found");
    }
    Ok((InputKind::MetricsRecord, pairs))
}

pub fn summarize(runs: &[(String, Vec<(String, f64)>)]) -> Result<Vec<MetricSummary>> {
    let Some((first_source, first)) = runs.first() else {
        bail!("report needs at least one input");
    };
    let names: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
    for (source, run) in &runs[1..] {
        let other: Vec<&str> = run.iter().map(|(k, _)| k.as_str()).collect();
        if other != names {
            bail!("inconsistent schemas: `{source}` has metrics [{}] but `{first_source}` has [{}]",
                other.join(","), names.join(","));
        }
    }
    let n = runs.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<f64> = runs.iter().map(|(_, r)| r[i].1).collect();
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            MetricSummary {
                name: name.to_string(),
                mean,
                spread: var.sqrt(),
                runs: runs.len(),
            }
        })
        .collect())
}

pub fn render(summaries: &[MetricSummary], kind: InputKind, sources: &[String]) -> String {
    let runs = summaries.first().map_or(0, |s| s.runs);
    let mut out = String::new();
    let _ = writeln!(out, "# aggregate over {runs} run(s): mean ± population standard deviation (divisor n={runs})");
    if kind == InputKind::History {
        let _ = writeln!(out, "# each run contributes its best epoch by val_accuracy (earliest on ties)");
    }
    for s in sources {
        let _ = writeln!(out, "# input: {s}");
    }
    let _ = writeln!(out, "{:<22} {:>18}", "metric", "value ± spread");
    for s in summaries {
        let _ = writeln!(out, "{:<22} {:>9.4} ± {:.4}", s.name, s.mean, s.spread);
    }
    out
}
