//! Dataset ingestion: the capture filename grammar, predictions / ground-truth /
//! sectioned CSV files, and grouping of images into products.
//!
//! Images are named `YYYYMMDD_XX_YY_ZZZ (N).jpg`. The underscore-joined prefix
//! is the product key and `N` is the image index within that product.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact header of a predictions file.
pub const PREDICTIONS_HEADER: [&str; 4] = ["product_id", "image_filename", "raw_ocr_text", "time_seconds"];
/// Exact header of a ground-truth file.
pub const GROUND_TRUTH_HEADER: [&str; 4] = ["product_id", "image_filename", "text_type", "gt_text"];
/// Exact header of a sectioned file.
pub const SECTIONED_HEADER: [&str; 4] = ["product_id", "image_filename", "text_type", "ocr_text"];

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed image filename {name:?}: {reason}")]
    MalformedFilename { name: String, reason: &'static str },
    #[error("{path}: required column {column:?} missing from header")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path}: duplicate image {image:?} (line {line})")]
    DuplicateImage { path: String, image: String, line: u64 },
    #[error("{path}: duplicate ground truth for ({image:?}, {field})")]
    DuplicateGroundTruth { path: String, image: String, field: FieldType },
    #[error("{path}: malformed row at line {line}: {reason}")]
    MalformedRow { path: String, line: u64, reason: String },
    #[error("{path}: unknown text_type {value:?} at line {line}")]
    UnknownFieldType { path: String, line: u64, value: String },
    #[error("{path}: empty ground-truth text at line {line}")]
    EmptyGroundTruth { path: String, line: u64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One of the two target fields on a package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Ingredients,
    Nfp,
}

impl FieldType {
    pub const ALL: [FieldType; 2] = [FieldType::Ingredients, FieldType::Nfp];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::Ingredients => "ingredients",
            FieldType::Nfp => "nfp",
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownField(pub String);

impl FromStr for FieldType {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ingredients" => Ok(FieldType::Ingredients),
            "nfp" => Ok(FieldType::Nfp),
            other => Err(UnknownField(other.to_string())),
        }
    }
}

/// Components of a capture filename.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilenameParts {
    pub capture_date: NaiveDate,
    pub session_id: String,
    pub sub_id: String,
    pub fieldworker_id: String,
    pub image_index: u32,
    pub product_key: String,
}

impl FilenameParts {
    /// Builds parts from components, deriving the product key.
    pub fn new(
        capture_date: NaiveDate,
        session_id: &str,
        sub_id: &str,
        fieldworker_id: &str,
        image_index: u32,
    ) -> Result<Self, CorpusError> {
        let name = format!(
            "{}_{}_{}_{} ({}).jpg",
            capture_date.format("%Y%m%d"),
            session_id,
            sub_id,
            fieldworker_id,
            image_index
        );
        parse_filename(&name)
    }

    /// Renders the filename back with the given extension (without the dot).
    pub fn format_filename(&self, extension: &str) -> String {
        format!("{} ({}).{}", self.product_key, self.image_index, extension)
    }
}

fn malformed(name: &str, reason: &'static str) -> CorpusError {
    CorpusError::MalformedFilename { name: name.to_string(), reason }
}

fn fixed_id<'a>(name: &str, part: Option<&'a str>, len: usize, what: &'static str) -> Result<&'a str, CorpusError> {
    match part {
        Some(p) if p.len() == len && p.bytes().all(|b| b.is_ascii_alphanumeric()) => Ok(p),
        _ => Err(malformed(name, what)),
    }
}

/// Parses `YYYYMMDD_XX_YY_ZZZ (N).ext`.
pub fn parse_filename(name: &str) -> Result<FilenameParts, CorpusError> {
    let (stem, ext) = name.rsplit_once('.').ok_or_else(|| malformed(name, "no extension"))?;
    if !IMAGE_EXTENSIONS.iter().any(|e| ext.eq_ignore_ascii_case(e)) {
        return Err(malformed(name, "unrecognized image extension"));
    }

    let (prefix, index_part) = stem.split_once(" (").ok_or_else(|| malformed(name, "missing \" (N)\" suffix"))?;
    let digits = index_part.strip_suffix(')').ok_or_else(|| malformed(name, "unterminated image index"))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(name, "image index is not a number"));
    }
    let image_index: u32 = digits.parse().map_err(|_| malformed(name, "image index out of range"))?;
    if image_index == 0 {
        return Err(malformed(name, "image index must be at least 1"));
    }
    // Leading zeros would not survive a round trip.
    if digits.len() > 1 && digits.starts_with('0') {
        return Err(malformed(name, "image index has leading zeros"));
    }

    let mut parts = prefix.split('_');
    let date = parts.next().ok_or_else(|| malformed(name, "missing date"))?;
    if date.len() != 8 || !date.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(name, "date is not YYYYMMDD"));
    }
    let capture_date =
        NaiveDate::parse_from_str(date, "%Y%m%d").map_err(|_| malformed(name, "invalid calendar date"))?;
    // chrono accepts years outside 4 digits; the grammar does not.
    if !(0..=9999).contains(&capture_date.year()) {
        return Err(malformed(name, "date is not YYYYMMDD"));
    }
    let session_id = fixed_id(name, parts.next(), 2, "session id is not 2 characters")?;
    let sub_id = fixed_id(name, parts.next(), 2, "sub id is not 2 characters")?;
    let fieldworker_id = fixed_id(name, parts.next(), 3, "fieldworker id is not 3 characters")?;
    if parts.next().is_some() {
        return Err(malformed(name, "too many underscore-separated components"));
    }

    Ok(FilenameParts {
        capture_date,
        session_id: session_id.to_string(),
        sub_id: sub_id.to_string(),
        fieldworker_id: fieldworker_id.to_string(),
        image_index,
        product_key: prefix.to_string(),
    })
}

/// One captured packaging photo as returned by an OCR engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub product_key: String,
    pub image_filename: String,
    pub raw_text: String,
    pub time_seconds: Option<f64>,
}

/// Human transcription for one (image, field) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub product_key: String,
    pub image_filename: String,
    pub field_type: FieldType,
    pub gt_text: String,
}

/// Normalized, classified text for one (image, field) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionedText {
    pub product_key: String,
    pub image_filename: String,
    pub field_type: FieldType,
    pub text: String,
}

/// Strict mode turns recoverable row problems into errors; lenient mode skips
/// the row and logs a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ingest {
    #[default]
    Lenient,
    Strict,
}

struct Columns {
    index: Vec<Option<usize>>,
}

impl Columns {
    fn resolve(
        path: &str,
        headers: &csv::StringRecord,
        wanted: &[&'static str],
        optional: &[&'static str],
    ) -> Result<Self, CorpusError> {
        let index = wanted
            .iter()
            .map(|&col| {
                let pos = headers.iter().position(|h| h == col);
                match pos {
                    None if !optional.contains(&col) => {
                        Err(CorpusError::MissingColumn { path: path.to_string(), column: col })
                    }
                    p => Ok(p),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Columns { index })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, i: usize) -> Option<&'r str> {
        self.index[i].and_then(|p| record.get(p))
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_row_error(path: &str, err: csv::Error) -> CorpusError {
    let line = err.position().map_or(0, |p| p.line());
    CorpusError::MalformedRow { path: path.to_string(), line, reason: err.to_string() }
}

/// Either returns the error (strict) or logs and signals "skip" (lenient).
fn skip_or_fail(mode: Ingest, err: CorpusError) -> Result<(), CorpusError> {
    match mode {
        Ingest::Strict => Err(err),
        Ingest::Lenient => {
            log::warn!("skipping row: {err}");
            Ok(())
        }
    }
}

fn parse_time(raw: Option<&str>) -> Result<Option<f64>, String> {
    let Some(raw) = raw.map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    match raw.parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Ok(Some(t)),
        Ok(t) => Err(format!("time_seconds must be finite and non-negative, got {t}")),
        Err(_) => Err(format!("time_seconds {raw:?} is not a number")),
    }
}

pub fn load_predictions(path: &Path, mode: Ingest) -> Result<Vec<ImageRecord>, CorpusError> {
    read_predictions(open(path)?, &path.display().to_string(), mode)
}

/// Reads a predictions CSV. `origin` names the source in error messages.
pub fn read_predictions<R: Read>(input: R, origin: &str, mode: Ingest) -> Result<Vec<ImageRecord>, CorpusError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_row_error(origin, e))?.clone();
    let cols = Columns::resolve(origin, &headers, &PREDICTIONS_HEADER, &["time_seconds"])?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                // A broken reader state (I/O, UTF-8) is never recoverable.
                let fatal = !matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. });
                let err = csv_row_error(origin, e);
                if fatal {
                    return Err(err);
                }
                skip_or_fail(mode, err)?;
                continue;
            }
        };
        let line = line_of(&record);
        let field = |i| cols.get(&record, i).unwrap_or_default();
        let image_filename = field(1).to_string();

        if let Err(err) = parse_filename(&image_filename) {
            skip_or_fail(mode, err)?;
            continue;
        }
        let time_seconds = match parse_time(cols.get(&record, 3)) {
            Ok(t) => t,
            Err(reason) => {
                skip_or_fail(mode, CorpusError::MalformedRow { path: origin.to_string(), line, reason })?;
                continue;
            }
        };
        if !seen.insert(image_filename.clone()) {
            skip_or_fail(mode, CorpusError::DuplicateImage { path: origin.to_string(), image: image_filename, line })?;
            continue;
        }
        out.push(ImageRecord {
            product_key: field(0).to_string(),
            image_filename,
            raw_text: field(2).to_string(),
            time_seconds,
        });
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthEntry>, CorpusError> {
    read_ground_truth(open(path)?, &path.display().to_string())
}

/// Reads a ground-truth CSV. Every violation is fatal: scores against a
/// silently truncated reference set would not be comparable across engines.
pub fn read_ground_truth<R: Read>(input: R, origin: &str) -> Result<Vec<GroundTruthEntry>, CorpusError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_row_error(origin, e))?.clone();
    let cols = Columns::resolve(origin, &headers, &GROUND_TRUTH_HEADER, &[])?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let record = row.map_err(|e| csv_row_error(origin, e))?;
        let line = line_of(&record);
        let field = |i| cols.get(&record, i).unwrap_or_default();

        let field_type = field(2)
            .parse::<FieldType>()
            .map_err(|UnknownField(value)| CorpusError::UnknownFieldType { path: origin.to_string(), line, value })?;
        let gt_text = field(3);
        if gt_text.trim().is_empty() {
            return Err(CorpusError::EmptyGroundTruth { path: origin.to_string(), line });
        }
        let image_filename = field(1).to_string();
        if !seen.insert((image_filename.clone(), field_type)) {
            return Err(CorpusError::DuplicateGroundTruth {
                path: origin.to_string(),
                image: image_filename,
                field: field_type,
            });
        }
        out.push(GroundTruthEntry {
            product_key: field(0).to_string(),
            image_filename,
            field_type,
            gt_text: gt_text.to_string(),
        });
    }
    Ok(out)
}

pub fn load_sectioned(path: &Path, mode: Ingest) -> Result<Vec<SectionedText>, CorpusError> {
    read_sectioned(open(path)?, &path.display().to_string(), mode)
}

/// Reads a sectioned CSV. Duplicate `(product, field)` rows are kept; the
/// caller decides which one wins.
pub fn read_sectioned<R: Read>(input: R, origin: &str, mode: Ingest) -> Result<Vec<SectionedText>, CorpusError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_row_error(origin, e))?.clone();
    let cols = Columns::resolve(origin, &headers, &SECTIONED_HEADER, &[])?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                let fatal = !matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. });
                let err = csv_row_error(origin, e);
                if fatal {
                    return Err(err);
                }
                skip_or_fail(mode, err)?;
                continue;
            }
        };
        let line = line_of(&record);
        let field = |i| cols.get(&record, i).unwrap_or_default();
        let field_type = match field(2).parse::<FieldType>() {
            Ok(f) => f,
            Err(UnknownField(value)) => {
                skip_or_fail(mode, CorpusError::UnknownFieldType { path: origin.to_string(), line, value })?;
                continue;
            }
        };
        out.push(SectionedText {
            product_key: field(0).to_string(),
            image_filename: field(1).to_string(),
            field_type,
            text: field(3).to_string(),
        });
    }
    Ok(out)
}

/// True when the header row of a CSV names the sectioned format rather than
/// the predictions format.
pub fn is_sectioned_header<R: Read>(input: R) -> Result<bool, csv::Error> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?;
    Ok(headers.iter().any(|h| h == "text_type") && headers.iter().any(|h| h == "ocr_text"))
}

/// Writes records in the canonical predictions format.
pub fn write_predictions<W: std::io::Write>(out: W, records: &[ImageRecord]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(PREDICTIONS_HEADER)?;
    for r in records {
        let time = r.time_seconds.map(|t| t.to_string()).unwrap_or_default();
        wtr.write_record([r.product_key.as_str(), &r.image_filename, &r.raw_text, &time])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_ground_truth<W: std::io::Write>(out: W, entries: &[GroundTruthEntry]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(GROUND_TRUTH_HEADER)?;
    for e in entries {
        wtr.write_record([e.product_key.as_str(), &e.image_filename, e.field_type.as_str(), &e.gt_text])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sectioned<W: std::io::Write>(out: W, rows: &[SectionedText]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SECTIONED_HEADER)?;
    for r in rows {
        wtr.write_record([r.product_key.as_str(), &r.image_filename, r.field_type.as_str(), &r.text])?;
    }
    wtr.flush()?;
    Ok(())
}

fn index_key(filename: &str) -> u32 {
    parse_filename(filename).map_or(u32::MAX, |p| p.image_index)
}

/// Groups records by product key; each group is ordered by image index, then
/// filename. Records whose filename does not parse sort after indexed ones.
pub fn group_by_product(records: &[ImageRecord]) -> BTreeMap<String, Vec<ImageRecord>> {
    let mut groups: BTreeMap<String, Vec<ImageRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.product_key.clone()).or_default().push(r.clone());
    }
    for group in groups.values_mut() {
        group.sort_by_cached_key(|r| (index_key(&r.image_filename), r.image_filename.clone()));
    }
    groups
}
