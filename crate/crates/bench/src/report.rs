//! Report rows as CSV or an aligned text table.

use std::fs;
use std::path::Path;

use hybridrec::metrics::format_mean_std;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str =
    "config,precision_at_10,recall_at_10,ndcg_at_10,latency_mean_ms,latency_std_ms,train_seconds,trainable_params,seed";

/// Columns whose values depend on the machine and load.
pub const TIMING_COLUMNS: [&str; 3] = ["latency_mean_ms", "latency_std_ms", "train_seconds"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub precision_at_10: f64,
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub train_seconds: f64,
    pub trainable_params: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "table" => Some(Format::Table),
            _ => None,
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Metrics are written with 6 decimals, timings with 3.
pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3},{},{}\n",
            csv_field(&r.config),
            r.precision_at_10,
            r.recall_at_10,
            r.ndcg_at_10,
            r.latency_mean_ms,
            r.latency_std_ms,
            r.train_seconds,
            r.trainable_params,
            r.seed
        ));
    }
    out
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, msg: String| BenchError::Data { path: "report".into(), line, msg };
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(1, "missing or unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let f = split_csv_line(line);
        if f.len() != 9 {
            return Err(bad(n + 1, format!("expected 9 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n + 1, format!("bad number {:?}", f[i])));
        rows.push(ReportRow {
            config: f[0].clone(),
            precision_at_10: num(1)?,
            recall_at_10: num(2)?,
            ndcg_at_10: num(3)?,
            latency_mean_ms: num(4)?,
            latency_std_ms: num(5)?,
            train_seconds: num(6)?,
            trainable_params: f[7].parse().map_err(|_| bad(n + 1, format!("bad count {:?}", f[7])))?,
            seed: f[8].parse().map_err(|_| bad(n + 1, format!("bad seed {:?}", f[8])))?,
        });
    }
    Ok(rows)
}

fn align(cells: &[Vec<String>], right: &[bool]) -> String {
    let widths: Vec<usize> =
        (0..cells[0].len()).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .zip(right)
            .map(|((s, &w), &r)| if r { format!("{s:>w$}") } else { format!("{s:<w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

/// Aligned plain-text table; latency is shown as `"45 ± 3"`.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut cells = vec![
        ["Configuration", "P@10", "R@10", "NDCG@10", "Latency (ms)", "Train (s)", "Trainable", "Seed"]
            .map(String::from)
            .to_vec(),
    ];
    for r in rows {
        cells.push(vec![
            r.config.clone(),
            format!("{:.4}", r.precision_at_10),
            format!("{:.4}", r.recall_at_10),
            format!("{:.4}", r.ndcg_at_10),
            format_mean_std(r.latency_mean_ms, r.latency_std_ms),
            format!("{:.1}", r.train_seconds),
            r.trainable_params.to_string(),
            r.seed.to_string(),
        ]);
    }
    align(&cells, &[false, true, true, true, true, true, true, true])
}

pub fn render(rows: &[ReportRow], format: Format) -> Result<String> {
    if rows.is_empty() {
        return Err(BenchError::Usage("report needs at least one row".into()));
    }
    Ok(match format {
        Format::Csv => render_csv(rows),
        Format::Table => render_table(rows),
    })
}

/// Writes the report; `"-"` writes to stdout.
pub fn emit_report(rows: &[ReportRow], format: Format, out_path: &Path) -> Result<()> {
    let text = render(rows, format)?;
    if out_path.as_os_str() == "-" {
        print!("{text}");
        return Ok(());
    }
    fs::write(out_path, text).map_err(|e| BenchError::io(out_path, e))
}

/// `latency,ndcg` pairs for plotting the accuracy/latency trade-off.
pub fn render_tradeoff_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("config,latency_mean_ms,ndcg_at_10\n");
    for r in rows {
        out.push_str(&format!("{},{:.3},{:.6}\n", csv_field(&r.config), r.latency_mean_ms, r.ndcg_at_10));
    }
    out
}

/// The CSV with timing columns removed, for byte comparison across runs.
pub fn strip_timing_columns(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return String::new() };
    let names = split_csv_line(header);
    let keep: Vec<bool> = names.iter().map(|n| !TIMING_COLUMNS.contains(&n.as_str())).collect();
    let mut out = String::new();
    for line in std::iter::once(header).chain(lines) {
        let fields = split_csv_line(line);
        let kept: Vec<String> =
            fields.iter().zip(&keep).filter(|(_, k)| **k).map(|(f, _)| csv_field(f)).collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}
