//! Per-iteration metrics records and their CSV encoding.
//!
//! Floats are printed with 17 significant digits so a parsed file
//! replays bit-exactly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: u64,
    /// Domains sampled this iteration, ascending.
    pub domain_ids: Vec<usize>,
    /// Sampling distribution used for the selection.
    pub probs: Vec<f64>,
    /// Query-loss buffer after this iteration's update.
    pub buffer: Vec<f64>,
    /// Per-task query losses, aligned with `domain_ids`.
    pub task_losses: Vec<f64>,
    /// Post-adaptation meta-test loss per target; None off the eval
    /// schedule.
    pub metatest: Vec<Option<f64>>,
    pub wall_ms: f64,
}

/// 17 significant digits: enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_header(domains: usize, target_names: &[String]) -> String {
    let mut cols = vec!["iter".to_string(), "domain_ids".to_string()];
    cols.extend((1..=domains).map(|k| format!("P_{k}")));
    cols.extend((1..=domains).map(|k| format!("Q_{k}")));
    cols.push("task_losses".to_string());
    cols.extend(target_names.iter().map(|t| format!("metatest_{t}")));
    cols.push("wall_ms".to_string());
    cols.join(",")
}

pub fn record_to_csv_line(rec: &MetricsRecord) -> String {
    let mut fields = Vec::with_capacity(4 + rec.probs.len() + rec.buffer.len() + rec.metatest.len());
    fields.push(rec.iter.to_string());
    fields.push(
        rec.domain_ids
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    fields.extend(rec.probs.iter().map(|v| format_float(*v)));
    fields.extend(rec.buffer.iter().map(|v| format_float(*v)));
    fields.push(
        rec.task_losses
            .iter()
            .map(|v| format_float(*v))
            .collect::<Vec<_>>()
            .join(";"),
    );
    fields.extend(rec.metatest.iter().map(|m| match m {
        Some(v) => format_float(*v),
        None => String::new(),
    }));
    fields.push(format_float(rec.wall_ms));
    fields.join(",")
}

pub fn metrics_to_csv(domains: usize, target_names: &[String], records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    out.push_str(&metrics_header(domains, target_names));
    out.push('\n');
    for rec in records {
        out.push_str(&record_to_csv_line(rec));
        out.push('\n');
    }
    out
}

/// Parses a metrics CSV produced by [`metrics_to_csv`].
pub fn parse_metrics_csv(text: &str, domains: usize, targets: usize) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Argument("empty metrics file".into()))?;
    let expected_cols = 3 + 2 * domains + targets + 1;
    if header.split(',').count() != expected_cols {
        return Err(Error::Argument(format!(
            "metrics header has {} columns, expected {}",
            header.split(',').count(),
            expected_cols
        )));
    }
    let parse_f = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Argument(format!("bad float '{s}': {e}")))
    };
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Argument(format!(
                "metrics row has {} columns, expected {}",
                fields.len(),
                expected_cols
            )));
        }
        let iter = fields[0]
            .parse::<u64>()
            .map_err(|e| Error::Argument(format!("bad iter '{}': {e}", fields[0])))?;
        let domain_ids = if fields[1].is_empty() {
            Vec::new()
        } else {
            fields[1]
                .split(';')
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|e| Error::Argument(format!("bad domain id '{s}': {e}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let probs = fields[2..2 + domains]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<Vec<_>>>()?;
        let buffer = fields[2 + domains..2 + 2 * domains]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<Vec<_>>>()?;
        let tl_field = fields[2 + 2 * domains];
        let task_losses = if tl_field.is_empty() {
            Vec::new()
        } else {
            tl_field.split(';').map(parse_f).collect::<Result<Vec<_>>>()?
        };
        let metatest = fields[3 + 2 * domains..3 + 2 * domains + targets]
            .iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let wall_ms = parse_f(fields[expected_cols - 1])?;
        records.push(MetricsRecord {
            iter,
            domain_ids,
            probs,
            buffer,
            task_losses,
            metatest,
            wall_ms,
        });
    }
    Ok(records)
}
