//! End-to-end steps behind the CLI subcommands: sectioning raw predictions,
//! evaluating sectioned text against ground truth, and driving OCR adapters.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{coverage_report, AggregateError, AggregateReport, PresentFields, SelectedText, Timing};
use crate::corpus::{self, CorpusError, FieldType, GroundTruthEntry, ImageRecord, Ingest, SectionedText};
use crate::metrics::{evaluate_pair, BleuParams, MetricError, MetricRow};
use crate::sectioner::{classify_block, keyword_density, select_candidate, ClassifiedBlock, FuzzyConfig};
use crate::textnorm::{extract_after_keyword, normalize_text, NormalizationConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("building worker pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("adapter failed on {failed} of {total} images")]
    AdapterFailure { failed: usize, total: usize },
    #[error("no images found in {0}")]
    NoImages(String),
}

/// Runs `f` on a pool with `jobs` threads (0 = one per core).
fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SectionOptions {
    /// Fuzzy fallback for text that keyword classification leaves unclassified.
    pub fuzzy: Option<FuzzyConfig>,
    pub jobs: usize,
}

/// Normalizes and classifies each record, keeps the best block per
/// (product, field), then cuts the text after the field anchor.
///
/// Output is sorted by product, then field.
pub fn section_predictions(
    records: &[ImageRecord],
    cfg: &NormalizationConfig,
    opts: SectionOptions,
) -> Result<Vec<SectionedText>, PipelineError> {
    let blocks: Vec<ClassifiedBlock> = with_jobs(opts.jobs, || {
        records
            .par_iter()
            .map(|r| {
                let text = normalize_text(&r.raw_text, cfg);
                classify_block(&r.product_key, &r.image_filename, text, cfg, opts.fuzzy)
            })
            .collect()
    })?;

    let mut by_product: BTreeMap<&str, Vec<ClassifiedBlock>> = BTreeMap::new();
    for b in &blocks {
        by_product.entry(b.product_key.as_str()).or_default().push(b.clone());
    }
    let mut out = Vec::new();
    for (product, group) in &by_product {
        for field in FieldType::ALL {
            if let Some(best) = select_candidate(group, product, field) {
                out.push(SectionedText {
                    product_key: best.product_key.clone(),
                    image_filename: best.image_filename.clone(),
                    field_type: field,
                    text: extract_after_keyword(&best.text, field, cfg).text.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Sectioning applied to already-sectioned rows: the field is kept, text is
/// re-normalized and one row per (product, field) survives. Anchors are not
/// cut again, so a second pass leaves text unchanged.
pub fn resection(rows: &[SectionedText], cfg: &NormalizationConfig) -> Vec<SectionedText> {
    let mut groups: BTreeMap<(&str, FieldType), Vec<ClassifiedBlock>> = BTreeMap::new();
    for r in rows {
        let text = normalize_text(&r.text, cfg);
        groups.entry((r.product_key.as_str(), r.field_type)).or_default().push(ClassifiedBlock {
            product_key: r.product_key.clone(),
            image_filename: r.image_filename.clone(),
            section: crate::sectioner::Section::Field(r.field_type),
            density: keyword_density(&text, r.field_type, cfg),
            text,
            method: crate::sectioner::Method::Keyword,
        });
    }
    groups
        .iter()
        .filter_map(|(&(product, field), blocks)| {
            select_candidate(blocks, product, field).map(|b| SectionedText {
                product_key: b.product_key.clone(),
                image_filename: b.image_filename.clone(),
                field_type: field,
                text: b.text.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub model_name: String,
    /// Drop ground-truth pairs without a prediction instead of scoring them
    /// with the missing-prediction convention.
    pub skip_missing: bool,
    pub bleu: BleuParams,
    pub jobs: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions { model_name: "model".into(), skip_missing: false, bleu: BleuParams::default(), jobs: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Sorted by (product, image, field).
    pub rows: Vec<MetricRow>,
    pub report: AggregateReport,
}

/// Fields present per product according to the ground truth.
pub fn present_fields(gt: &[GroundTruthEntry]) -> PresentFields {
    let mut present = PresentFields::new();
    for e in gt {
        present.entry(e.product_key.clone()).or_default().insert(e.field_type);
    }
    present
}

/// Scores sectioned predictions against ground truth.
///
/// Each ground-truth pair is matched to the sectioned row for the same image
/// and field if one exists, else to the row for the same product and field.
/// Both sides are normalized with `cfg` first.
pub fn evaluate(
    sectioned: &[SectionedText],
    gt: &[GroundTruthEntry],
    timing: Option<Timing>,
    cfg: &NormalizationConfig,
    opts: &EvaluateOptions,
) -> Result<Evaluation, PipelineError> {
    let normalized: Vec<SectionedText> =
        sectioned.iter().map(|s| SectionedText { text: normalize_text(&s.text, cfg), ..s.clone() }).collect();

    let mut by_image: BTreeMap<(&str, FieldType), &SectionedText> = BTreeMap::new();
    let mut by_product: BTreeMap<(&str, FieldType), &SectionedText> = BTreeMap::new();
    let mut ordered: Vec<&SectionedText> = normalized.iter().collect();
    ordered.sort_by(|a, b| (&a.image_filename, &a.text).cmp(&(&b.image_filename, &b.text)));
    for s in ordered {
        by_image.entry((s.image_filename.as_str(), s.field_type)).or_insert(s);
        by_product.entry((s.product_key.as_str(), s.field_type)).or_insert(s);
    }

    let mut selected = SelectedText::new();
    for s in &normalized {
        let slot = selected.entry((s.product_key.clone(), s.field_type)).or_default();
        if slot.is_empty() {
            slot.clone_from(&s.text);
        }
    }

    let mut entries: Vec<GroundTruthEntry> =
        gt.iter().map(|e| GroundTruthEntry { gt_text: normalize_text(&e.gt_text, cfg), ..e.clone() }).collect();
    entries.sort_by(|a, b| {
        (&a.product_key, &a.image_filename, a.field_type).cmp(&(&b.product_key, &b.image_filename, b.field_type))
    });

    let rows: Vec<MetricRow> = with_jobs(opts.jobs, || {
        entries
            .par_iter()
            .map(|e| {
                let pred = by_image
                    .get(&(e.image_filename.as_str(), e.field_type))
                    .filter(|p| p.product_key == e.product_key)
                    .or_else(|| by_product.get(&(e.product_key.as_str(), e.field_type)))
                    .copied();
                evaluate_pair(e, pred, &opts.bleu)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let rows: Vec<MetricRow> = if opts.skip_missing { rows.into_iter().filter(|r| !r.missing).collect() } else { rows };

    let coverage = coverage_report(&selected, &present_fields(gt));
    let report = AggregateReport::build(&opts.model_name, &rows, coverage, timing)?;
    Ok(Evaluation { rows, report })
}

/// External OCR adapter: `program [args...] --input <path> --output <csv>`.
#[derive(Debug, Clone)]
pub struct AdapterCommand {
    pub program: OsString,
    pub args: Vec<OsString>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// One record per image, in filename order.
    pub records: Vec<ImageRecord>,
    /// Filenames of images the adapter failed on; their records have empty text.
    pub failures: Vec<String>,
    /// Wall-clock seconds measured by the harness, per image in record order
    /// (per-image mode) or one entry for the whole batch.
    pub wall_clock_s: Vec<f64>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["jpg", "jpeg", "png"].iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut images = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            images.push(path);
        }
    }
    images.sort();
    if images.is_empty() {
        return Err(PipelineError::NoImages(dir.display().to_string()));
    }
    Ok(images)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Product key from the filename grammar; the stem without the index suffix
/// for names that do not follow it.
fn product_of(name: &str, mode: Ingest) -> Result<String, CorpusError> {
    match corpus::parse_filename(name) {
        Ok(p) => Ok(p.product_key),
        Err(e) if mode == Ingest::Strict => Err(e),
        Err(e) => {
            log::warn!("{e}");
            let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
            Ok(stem.split(" (").next().unwrap_or(stem).to_string())
        }
    }
}

fn invoke(cmd: &AdapterCommand, input: &Path, output: &Path) -> std::io::Result<bool> {
    let status = Command::new(&cmd.program)
        .args(&cmd.args)
        .arg("--input")
        .arg(input)
        .arg("--output")
        .arg(output)
        .stdin(Stdio::null())
        .status()?;
    Ok(status.success())
}

fn adapter_rows(path: &Path) -> Option<Vec<ImageRecord>> {
    match corpus::load_predictions(path, Ingest::Strict) {
        Ok(rows) => Some(rows),
        Err(e) => {
            log::warn!("adapter output rejected: {e}");
            None
        }
    }
}

/// Runs the adapter once per image (or once on the directory with `batch`)
/// and collects canonical prediction records.
///
/// A record's time is the adapter's self-reported time when present, else the
/// harness wall-clock time. Adapter failures yield empty-text records; in
/// strict mode any failure is an error.
pub fn run_adapter(
    cmd: &AdapterCommand,
    image_dir: &Path,
    batch: bool,
    mode: Ingest,
) -> Result<RunOutcome, PipelineError> {
    let images = list_images(image_dir)?;
    let scratch = tempfile::tempdir()?;
    let out_csv = scratch.path().join("adapter.csv");

    let mut records = Vec::with_capacity(images.len());
    let mut failures = Vec::new();
    let mut wall_clock_s = Vec::new();

    let mut push = |name: String, found: Option<ImageRecord>, elapsed: f64| -> Result<(), PipelineError> {
        let product_key = product_of(&name, mode)?;
        match found {
            Some(r) => records.push(ImageRecord {
                product_key,
                image_filename: name,
                raw_text: r.raw_text,
                time_seconds: Some(r.time_seconds.unwrap_or(elapsed)),
            }),
            None => {
                log::warn!("adapter produced no output for {name}");
                failures.push(name.clone());
                records.push(ImageRecord {
                    product_key,
                    image_filename: name,
                    raw_text: String::new(),
                    time_seconds: Some(elapsed),
                });
            }
        }
        Ok(())
    };

    if batch {
        let start = Instant::now();
        let ok = invoke(cmd, image_dir, &out_csv)?;
        let elapsed = start.elapsed().as_secs_f64();
        wall_clock_s.push(elapsed);
        log::info!("adapter batch over {} images took {elapsed:.3}s wall-clock", images.len());
        let rows = if ok { adapter_rows(&out_csv).unwrap_or_default() } else { Vec::new() };
        let mut by_name: BTreeMap<String, ImageRecord> =
            rows.into_iter().map(|r| (r.image_filename.clone(), r)).collect();
        let share = elapsed / images.len() as f64;
        for img in &images {
            let name = file_name(img);
            let found = by_name.remove(&name);
            push(name, found, share)?;
        }
    } else {
        for img in &images {
            let name = file_name(img);
            let _ = std::fs::remove_file(&out_csv);
            let start = Instant::now();
            let ok = invoke(cmd, img, &out_csv)?;
            let elapsed = start.elapsed().as_secs_f64();
            wall_clock_s.push(elapsed);
            log::info!("{name}: {elapsed:.3}s wall-clock");
            let found = if ok {
                adapter_rows(&out_csv).and_then(|rows| {
                    let single = rows.len() == 1;
                    let mut it = rows.into_iter();
                    let mut first = None;
                    for r in it.by_ref() {
                        if r.image_filename == name {
                            return Some(r);
                        }
                        first.get_or_insert(r);
                    }
                    first.filter(|_| single)
                })
            } else {
                None
            };
            push(name, found, elapsed)?;
        }
    }

    if mode == Ingest::Strict && !failures.is_empty() {
        return Err(PipelineError::AdapterFailure { failed: failures.len(), total: images.len() });
    }
    let total: f64 = wall_clock_s.iter().sum();
    log::info!("harness wall-clock total {total:.3}s for {} images", images.len());
    Ok(RunOutcome { records, failures, wall_clock_s })
}

/// Distinct images across records, for sanity checks on fixtures.
pub fn distinct_images(records: &[ImageRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.image_filename.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(product: &str, idx: u32, text: &str) -> ImageRecord {
        ImageRecord {
            product_key: product.into(),
            image_filename: format!("{product} ({idx}).jpg"),
            raw_text: text.into(),
            time_seconds: Some(0.1),
        }
    }

    const P: &str = "20230613_04_03_001";
    const Q: &str = "20230613_04_03_002";

    #[test]
    fn sections_one_row_per_product_field() {
        let cfg = NormalizationConfig::default().validated().unwrap();
        let records = vec![
            rec(P, 1, "Front: CRUNCHY OATS"),
            rec(P, 2, "Ingredients: Oats, Sugar"),
            rec(P, 3, "ingredients ingredients: oats"),
            rec(P, 4, "NUTRITION INFORMATION per 100g Energy 1600kJ"),
            rec(Q, 1, "Bestanddele: suiker"),
        ];
        let out = section_predictions(&records, &cfg, SectionOptions::default()).unwrap();
        let got: Vec<(&str, &str, FieldType, &str)> = out
            .iter()
            .map(|s| (s.product_key.as_str(), s.image_filename.as_str(), s.field_type, s.text.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                (P, "20230613_04_03_001 (3).jpg", FieldType::Ingredients, "ingredients: oats"),
                (P, "20230613_04_03_001 (4).jpg", FieldType::Nfp, "per 100g energy 1600kj"),
                (Q, "20230613_04_03_002 (1).jpg", FieldType::Ingredients, "suiker"),
            ]
        );
    }

    #[test]
    fn resection_is_stable() {
        let cfg = NormalizationConfig::default().validated().unwrap();
        let records = vec![rec(P, 1, "ingredients: sugar ingredients: salt"), rec(P, 2, "nutrition facts energy")];
        let once = section_predictions(&records, &cfg, SectionOptions::default()).unwrap();
        assert_eq!(once[0].text, "sugar ingredients: salt");
        assert_eq!(resection(&once, &cfg), once);
    }

    #[test]
    fn evaluation_matches_by_image_then_product() {
        let cfg = NormalizationConfig::default().validated().unwrap();
        let gt = vec![
            GroundTruthEntry {
                product_key: P.into(),
                image_filename: format!("{P} (2).jpg"),
                field_type: FieldType::Ingredients,
                gt_text: "Oats, Sugar".into(),
            },
            GroundTruthEntry {
                product_key: P.into(),
                image_filename: format!("{P} (4).jpg"),
                field_type: FieldType::Nfp,
                gt_text: "energy 1600kj".into(),
            },
            GroundTruthEntry {
                product_key: Q.into(),
                image_filename: format!("{Q} (1).jpg"),
                field_type: FieldType::Nfp,
                gt_text: "energy 10".into(),
            },
        ];
        let sectioned = vec![
            SectionedText {
                product_key: P.into(),
                image_filename: format!("{P} (3).jpg"),
                field_type: FieldType::Ingredients,
                text: "oats, sugar".into(),
            },
            SectionedText {
                product_key: P.into(),
                image_filename: format!("{P} (4).jpg"),
                field_type: FieldType::Nfp,
                text: "energy 1600kj".into(),
            },
        ];
        let ev = evaluate(&sectioned, &gt, None, &cfg, &EvaluateOptions::default()).unwrap();
        assert_eq!(ev.rows.len(), 3);
        assert!(ev.rows[..2].iter().all(|r| r.cer == 0.0 && !r.missing));
        assert!(ev.rows[2].missing);
        assert_eq!(ev.report.coverage.product.covered, 1);
        assert_eq!(ev.report.coverage.product.total, 2);
        assert_eq!(ev.report.image_count, 3);

        let skip = EvaluateOptions { skip_missing: true, ..Default::default() };
        let ev = evaluate(&sectioned, &gt, None, &cfg, &skip).unwrap();
        assert_eq!(ev.rows.len(), 2);
        assert_eq!(ev.report.coverage.product.total, 2);
    }
}
