//! CSV and JSON serialisation of evaluation reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalReport;

pub const CSV_HEADER: &str = "method,attack_model,T,certified_accuracy,empirical_accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// One row per curve point. The certified column is empty for methods that
/// carry no certificate.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &report.curves {
        let certified = p.certified_accuracy.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", p.method, p.attack_model, p.budget, certified, p.empirical_accuracy)
            .expect("writing to a String");
    }
    out
}

pub fn report_to_json(report: &EvalReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report is serialisable");
    out.push('\n');
    out
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => report_to_json(report),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
