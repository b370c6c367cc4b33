//! CSV and JSON artifacts written by the commands.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use trustsup::decision::EvalRecord;
use trustsup::trust_loss::TtTracePoint;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| trustsup::Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| trustsup::Error::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn flag(b: bool) -> u8 {
    b as u8
}

pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("sample_id,true_class,voted_class,y,b,oracle_used\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.sample_id,
            r.true_class,
            r.voted_class,
            r.y,
            flag(r.trusted),
            flag(r.oracle_used)
        );
    }
    out
}

/// Inverse of [`records_csv`].
pub fn parse_records_csv(text: &str) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("sample_id,true_class,voted_class,y,b,oracle_used") => {}
        other => bail!("unexpected records header {other:?}"),
    }
    let bit = |s: &str| -> Result<bool> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => bail!("expected 0 or 1, got {s:?}"),
        }
    };
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                bail!("line {}: expected 6 fields", i + 2);
            }
            Ok(EvalRecord {
                sample_id: f[0].to_string(),
                true_class: f[1].parse().with_context(|| format!("line {}", i + 2))?,
                voted_class: f[2].parse().with_context(|| format!("line {}", i + 2))?,
                y: f[3].parse().with_context(|| format!("line {}", i + 2))?,
                trusted: bit(f[4])?,
                oracle_used: bit(f[5])?,
            })
        })
        .collect()
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, l);
    }
    out
}

pub fn memory_trace_csv(trace: &[TtTracePoint]) -> String {
    let mut out = String::from("step,tt,sse_tt,buffer_count\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{},{}", p.step, p.tt, p.sse_tt, p.buffer_count);
    }
    out
}

pub fn tt_trace_csv(trace: &[(u64, f64)]) -> String {
    let mut out = String::from("step,tt\n");
    for (s, tt) in trace {
        let _ = writeln!(out, "{s},{tt}");
    }
    out
}

pub fn histogram_line(label: &str, hist: &[usize]) -> String {
    let cells: Vec<String> = hist.iter().enumerate().map(|(e, n)| format!("{e}:{n}")).collect();
    format!("{label} e-histogram {}", cells.join(" "))
}
