//! Report files: a JSON report plus optional CSV tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::write_time_tags;
use crate::error::Result;
use crate::scenario::{ReportBody, RunReport};

pub const REPORT_FILE: &str = "report.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const TIME_TAG_FILE: &str = "time_tags.csv";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    /// JSON report plus the histogram or spectrum table.
    Csv,
}

pub fn to_json(report: &RunReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the report into `dir` and returns the files written. Contents
/// depend only on the report, never on timing.
pub fn emit_report(report: &RunReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    fs::write(&path, to_json(report)?)?;
    written.push(path);
    if format == Format::Csv {
        if let Some(hist) = &report.histogram {
            let path = dir.join(HISTOGRAM_FILE);
            let mut out = create(&path)?;
            hist.write_csv(&mut out)?;
            out.flush()?;
            written.push(path);
        }
        if let ReportBody::Spectrum(body) = &report.body {
            let path = dir.join(SPECTRUM_FILE);
            let mut out = create(&path)?;
            writeln!(out, "lambda_nm,transmission")?;
            for p in &body.points {
                writeln!(out, "{},{}", p.lambda_nm, p.transmission)?;
            }
            out.flush()?;
            written.push(path);
        }
    }
    if !report.time_tags.is_empty() {
        let path = dir.join(TIME_TAG_FILE);
        let mut out = create(&path)?;
        let streams: Vec<_> = report.time_tags.iter().collect();
        write_time_tags(&mut out, &streams, true)?;
        out.flush()?;
        written.push(path);
    }
    Ok(written)
}
