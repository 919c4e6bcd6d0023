//! CSV and JSON emission. Column order, row order and number formatting are
//! fixed, so equal records always serialize to equal bytes.

use std::fs;
use std::path::Path;

use super::sweep::{BenchRecord, SweepSummary};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "method",
    "adapter",
    "k",
    "seed",
    "in_acc",
    "out_acc",
    "peak_mem_bytes",
    "train_ms",
    "eval_ms",
    "note",
];

/// Six decimal places; empty for a missing value.
pub fn fmt_real(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::State(format!("csv: {e}"))
}

pub fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

pub fn records_to_csv(records: &[BenchRecord]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(CSV_HEADER).map_err(csv_error)?;
        for r in records {
            w.write_record([
                r.method.as_str().to_string(),
                r.adapter.to_string(),
                r.k.to_string(),
                r.seed.to_string(),
                fmt_real(r.in_domain_acc),
                fmt_real(r.out_domain_acc),
                r.peak_memory_bytes.map_or_else(String::new, |b| b.to_string()),
                r.train_time_ms.to_string(),
                r.eval_time_ms.to_string(),
                r.notes.clone(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::State(format!("csv: {e}")))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    write_text(path, &records_to_csv(records)?)
}

pub fn write_summary(path: &Path, summary: &SweepSummary) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(summary)? + "\n"))
}
