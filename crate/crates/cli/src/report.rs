//! Per-class mean +- std tables from JSONL run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use oe_lab::bench::{mean_std, GroupField, RunRecord};

/// Parses a records file; the header line is skipped, anything else that is
/// not a run record is an error naming the line.
pub fn parse_records(text: &str, origin: &str) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| anyhow!("{origin}:{}: malformed JSON: {e}", n + 1))?;
        if value.get("header").is_some() {
            continue;
        }
        let record: RunRecord =
            serde_json::from_value(value).map_err(|e| anyhow!("{origin}:{}: not a run record: {e}", n + 1))?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_records(&text, &path.display().to_string())
}

const ROW_FIELDS: [GroupField; 5] =
    [GroupField::Method, GroupField::Protocol, GroupField::OeSize, GroupField::OeClasses, GroupField::Filter];

fn cell(values: &[f64]) -> String {
    if values.is_empty() {
        return "-".into();
    }
    let (m, s) = mean_std(values);
    format!("{:.1} ± {:.2}", 100.0 * m, 100.0 * s)
}

/// Markdown table in percent: one row per configuration (fields that vary
/// across records), one column per class, and an overall mean column.
pub fn render_table(records: &[RunRecord]) -> String {
    let varying: Vec<GroupField> = ROW_FIELDS
        .iter()
        .copied()
        .filter(|f| *f == GroupField::Method || records.iter().any(|r| f.value(r) != f.value(&records[0])))
        .collect();
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = records.iter().map(|r| r.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut rows: Vec<(String, BTreeMap<usize, Vec<f64>>, Vec<f64>)> = Vec::new();
    for r in records {
        let key = varying.iter().map(|f| f.value(r)).collect::<Vec<_>>().join(" / ");
        let idx = match rows.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                rows.push((key, BTreeMap::new(), Vec::new()));
                rows.len() - 1
            }
        };
        if let Some(a) = r.auc {
            rows[idx].1.entry(r.class).or_default().push(a);
            rows[idx].2.push(a);
        }
    }
    let label = varying.iter().map(|f| f.name()).collect::<Vec<_>>().join(" / ");
    let mut out = format!("| {label} |");
    classes.iter().for_each(|c| {
        let _ = write!(out, " {c} |");
    });
    out.push_str(" mean |\n|---|");
    classes.iter().for_each(|_| out.push_str("---|"));
    out.push_str("---|\n");
    for (key, per_class, all) in &rows {
        let _ = write!(out, "| {key} |");
        for c in &classes {
            let _ = write!(out, " {} |", cell(per_class.get(c).map_or(&[][..], |v| v.as_slice())));
        }
        let _ = writeln!(out, " {} |", cell(all));
    }
    out
}
