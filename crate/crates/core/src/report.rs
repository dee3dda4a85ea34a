//! Output formats: per-image metric rows (CSV), per-model summaries (JSON) and
//! plain-text comparison tables (semantic scores, CER/WER, coverage, time).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::AggregateReport;
use crate::corpus::{FieldType, UnknownField};
use crate::metrics::MetricRow;

pub const METRIC_ROWS_HEADER: [&str; 9] =
    ["product_id", "image_filename", "text_type", "cer", "wer", "bleu", "rouge_l", "f1", "missing"];

/// Version of the summary document layout; bump with `summary.schema.json`.
pub const SUMMARY_VERSION: u32 = 1;

/// JSON schema for the summary document.
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no metric rows to write (pass --allow-empty to write a header-only file)")]
    EmptyRows,
    #[error("no model reports to write")]
    NoReports,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn sort_key(r: &MetricRow) -> (&str, &str, FieldType) {
    (&r.product_key, &r.image_filename, r.field_type)
}

/// Serializes rows sorted by (product, image, field) with six decimals.
pub fn metric_rows_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<(), ReportError> {
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(METRIC_ROWS_HEADER)?;
    for r in sorted {
        wtr.write_record([
            r.product_key.clone(),
            r.image_filename.clone(),
            r.field_type.to_string(),
            format!("{:.6}", r.cer),
            format!("{:.6}", r.wer),
            format!("{:.6}", r.bleu),
            format!("{:.6}", r.rouge_l),
            format!("{:.6}", r.f1),
            r.missing.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

pub fn write_metric_rows(rows: &[MetricRow], path: &Path, allow_empty: bool) -> Result<(), ReportError> {
    if rows.is_empty() && !allow_empty {
        return Err(ReportError::EmptyRows);
    }
    let mut out = create(path)?;
    metric_rows_csv(&mut out, rows)?;
    out.flush().map_err(io_err(path))
}

/// Parses a metric-rows CSV as written by [`metric_rows_csv`].
pub fn read_metric_rows<R: Read>(input: R) -> Result<Vec<MetricRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(METRIC_ROWS_HEADER) {
        return Err(ReportError::BadRow { line: 1, reason: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| ReportError::BadRow { line, reason };
        let num = |i: usize| -> Result<f64, ReportError> {
            rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", METRIC_ROWS_HEADER[i])))
        };
        rows.push(MetricRow {
            product_key: rec[0].to_string(),
            image_filename: rec[1].to_string(),
            field_type: rec[2].parse().map_err(|UnknownField(v)| bad(format!("text_type {v:?}")))?,
            cer: num(3)?,
            wer: num(4)?,
            bleu: num(5)?,
            rouge_l: num(6)?,
            f1: num(7)?,
            missing: rec[8].parse().map_err(|_| bad(format!("missing {:?}", &rec[8])))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub models: Vec<AggregateReport>,
}

pub fn summary_json(reports: &[AggregateReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::NoReports);
    }
    let doc = Summary { version: SUMMARY_VERSION, models: reports.to_vec() };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// Writes the JSON summary, and the text tables next to it when `text_path`
/// is given.
pub fn write_summary(reports: &[AggregateReport], path: &Path, text_path: Option<&Path>) -> Result<(), ReportError> {
    let json = summary_json(reports)?;
    std::fs::write(path, json).map_err(io_err(path))?;
    if let Some(tp) = text_path {
        std::fs::write(tp, render_tables(reports)).map_err(io_err(tp))?;
    }
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Summary, ReportError> {
    Ok(serde_json::from_reader(input)?)
}

const NA: &str = "n/a";

/// Three decimals, as used for metric cells.
fn fixed3(v: f64) -> String {
    format!("{v:.3}")
}

pub fn mean_sd_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.3} ± {sd:.3}")
}

pub fn pct_cell(pct: Option<f64>) -> String {
    pct.map_or_else(|| NA.to_string(), |p| format!("{p:.2}"))
}

/// Two decimals with thousands separators, e.g. `10,161.16`.
pub fn seconds_cell(s: f64) -> String {
    let fixed = format!("{:.2}", s.abs());
    let (int, frac) = fixed.split_once('.').unwrap_or((&fixed, "00"));
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let sign = if s < 0.0 { "-" } else { "" };
    format!("{sign}{grouped}.{frac}")
}

#[derive(Clone, Copy)]
enum Align {
    Left,
    Right,
}

fn table(title: &str, header: &[&str], align: &[Align], rows: &[Vec<String>]) -> String {
    let width = |i: usize| {
        rows.iter().map(|r| r[i].chars().count()).chain(std::iter::once(header[i].chars().count())).max().unwrap_or(0)
    };
    let widths: Vec<usize> = (0..header.len()).map(width).collect();
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for ((cell, &w), a) in cells.iter().zip(&widths).zip(align) {
            let pad = w - cell.chars().count();
            match a {
                Align::Left => write!(s, " {cell}{} |", " ".repeat(pad)),
                Align::Right => write!(s, " {}{cell} |", " ".repeat(pad)),
            }
            .expect("writing to a String cannot fail");
        }
        s.push('\n');
        s
    };
    let rule = {
        let mut s = String::from("|");
        for &w in &widths {
            s.push_str(&"-".repeat(w + 2));
            s.push('|');
        }
        s.push('\n');
        s
    };

    let mut out = format!("{title}\n");
    out.push_str(&rule);
    out.push_str(&line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    out.push_str(&rule);
    for r in rows {
        out.push_str(&line(r));
    }
    out.push_str(&rule);
    out
}

/// Renders the semantic-performance, error-rate, field-coverage and
/// execution-time tables, one row per model in input order.
pub fn render_tables(reports: &[AggregateReport]) -> String {
    use Align::{Left, Right};

    let metric = |r: &AggregateReport, f: fn(&crate::aggregate::MetricStats) -> f64| {
        r.metrics.as_ref().map_or_else(|| NA.to_string(), |m| fixed3(f(m)))
    };
    let semantic: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model_name.clone(),
                pct_cell(r.coverage.product_coverage_pct),
                metric(r, |m| m.bleu.mean),
                metric(r, |m| m.rouge_l.mean),
                metric(r, |m| m.f1.mean),
            ]
        })
        .collect();
    let errors: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let cell = |f: fn(&crate::aggregate::MetricStats) -> crate::aggregate::Stat| {
                r.metrics.as_ref().map_or_else(
                    || NA.to_string(),
                    |m| {
                        let s = f(m);
                        mean_sd_cell(s.mean, s.sd)
                    },
                )
            };
            vec![r.model_name.clone(), cell(|m| m.cer), cell(|m| m.wer)]
        })
        .collect();
    let fields: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model_name.clone(),
                pct_cell(r.coverage.product_coverage_pct),
                pct_cell(r.coverage.ingredients_field_pct),
                pct_cell(r.coverage.nfp_field_pct),
            ]
        })
        .collect();
    let timing: Vec<Vec<String>> = reports
        .iter()
        .map(|r| match r.timing {
            Some(t) => vec![r.model_name.clone(), seconds_cell(t.total_time_s), seconds_cell(t.mean_time_per_image_s)],
            None => vec![r.model_name.clone(), NA.into(), NA.into()],
        })
        .collect();

    let mut out = String::new();
    out.push_str(&table(
        "Overall semantic performance",
        &["Model", "Coverage (%)", "BLEU", "ROUGE-L", "F1"],
        &[Left, Right, Right, Right, Right],
        &semantic,
    ));
    out.push('\n');
    out.push_str(&table(
        "Per-image CER and WER (mean ± SD)",
        &["Model", "CER mean ± SD", "WER mean ± SD"],
        &[Left, Right, Right],
        &errors,
    ));
    out.push('\n');
    out.push_str(&table(
        "Coverage by level",
        &["Model", "Product (%)", "Ingredients (%)", "NFP (%)"],
        &[Left, Right, Right, Right],
        &fields,
    ));
    out.push('\n');
    out.push_str(&table(
        "Execution time",
        &["Model", "Total Time (s)", "Avg Time/Image (s)"],
        &[Left, Right, Right],
        &timing,
    ));
    out
}
