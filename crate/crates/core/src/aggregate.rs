//! Per-model summaries: mean and sample SD of each metric, two-level coverage
//! and timing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FieldType, ImageRecord};
use crate::metrics::MetricRow;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("no values to aggregate")]
    EmptyInput,
    #[error("no product contains field {0}")]
    NoProductsWithField(FieldType),
    #[error("timing missing for {0}")]
    MissingTiming(String),
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64), AggregateError> {
    if values.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Self, AggregateError> {
        mean_sd(values).map(|(mean, sd)| Stat { mean, sd })
    }
}

/// Fields present per product, typically taken from the ground truth.
pub type PresentFields = BTreeMap<String, BTreeSet<FieldType>>;

/// Selected sectioned text per (product, field).
pub type SelectedText = BTreeMap<(String, FieldType), String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub covered: usize,
    pub total: usize,
}

impl Ratio {
    pub fn pct(&self) -> f64 {
        100.0 * self.covered as f64 / self.total as f64
    }
}

fn has_text(selected: &SelectedText, product: &str, field: FieldType) -> bool {
    selected.get(&(product.to_string(), field)).is_some_and(|t| !t.trim().is_empty())
}

/// Products with at least one present field that has non-empty selected text,
/// over products with at least one present field.
pub fn product_coverage(selected: &SelectedText, present: &PresentFields) -> Ratio {
    let mut ratio = Ratio { covered: 0, total: 0 };
    for (product, fields) in present {
        if fields.is_empty() {
            continue;
        }
        ratio.total += 1;
        if fields.iter().any(|&f| has_text(selected, product, f)) {
            ratio.covered += 1;
        }
    }
    ratio
}

/// Coverage of one field over the products that contain it.
pub fn field_coverage(
    field: FieldType,
    selected: &SelectedText,
    present: &PresentFields,
) -> Result<Ratio, AggregateError> {
    let mut ratio = Ratio { covered: 0, total: 0 };
    for (product, fields) in present {
        if fields.contains(&field) {
            ratio.total += 1;
            if has_text(selected, product, field) {
                ratio.covered += 1;
            }
        }
    }
    if ratio.total == 0 {
        return Err(AggregateError::NoProductsWithField(field));
    }
    Ok(ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// `None` when no product has any present field.
    pub product_coverage_pct: Option<f64>,
    pub ingredients_field_pct: Option<f64>,
    pub nfp_field_pct: Option<f64>,
    pub product: Ratio,
    pub ingredients: Option<Ratio>,
    pub nfp: Option<Ratio>,
}

pub fn coverage_report(selected: &SelectedText, present: &PresentFields) -> CoverageReport {
    let product = product_coverage(selected, present);
    let ingredients = field_coverage(FieldType::Ingredients, selected, present).ok();
    let nfp = field_coverage(FieldType::Nfp, selected, present).ok();
    CoverageReport {
        product_coverage_pct: (product.total > 0).then(|| product.pct()),
        ingredients_field_pct: ingredients.map(|r| r.pct()),
        nfp_field_pct: nfp.map(|r| r.pct()),
        product,
        ingredients,
        nfp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_time_s: f64,
    pub mean_time_per_image_s: f64,
    pub image_count: usize,
}

/// Total and mean processing time. Every record must carry a time.
pub fn timing_aggregate(records: &[ImageRecord]) -> Result<Timing, AggregateError> {
    if records.is_empty() {
        return Err(AggregateError::MissingTiming("empty record list".into()));
    }
    let times = records
        .iter()
        .map(|r| r.time_seconds.ok_or_else(|| AggregateError::MissingTiming(r.image_filename.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let total = compensated_sum(times);
    Ok(Timing { total_time_s: total, mean_time_per_image_s: total / records.len() as f64, image_count: records.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub cer: Stat,
    pub wer: Stat,
    pub bleu: Stat,
    pub rouge_l: Stat,
    pub f1: Stat,
}

impl MetricStats {
    pub fn of(rows: &[MetricRow]) -> Result<Self, AggregateError> {
        let col = |f: fn(&MetricRow) -> f64| Stat::of(&rows.iter().map(f).collect::<Vec<_>>());
        Ok(MetricStats {
            cer: col(|r| r.cer)?,
            wer: col(|r| r.wer)?,
            bleu: col(|r| r.bleu)?,
            rouge_l: col(|r| r.rouge_l)?,
            f1: col(|r| r.f1)?,
        })
    }
}

/// Everything reported for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_name: String,
    /// Distinct images contributing metric rows.
    pub image_count: usize,
    pub row_count: usize,
    pub missing_count: usize,
    /// `None` when no rows were scored.
    pub metrics: Option<MetricStats>,
    pub coverage: CoverageReport,
    /// `None` when timing was not requested or not available.
    pub timing: Option<Timing>,
}

impl AggregateReport {
    /// Rows are sorted internally so the result does not depend on input order.
    pub fn build(
        model_name: &str,
        rows: &[MetricRow],
        coverage: CoverageReport,
        timing: Option<Timing>,
    ) -> Result<Self, AggregateError> {
        let mut sorted: Vec<&MetricRow> = rows.iter().collect();
        sorted.sort_by(|a, b| {
            (&a.product_key, &a.image_filename, a.field_type).cmp(&(&b.product_key, &b.image_filename, b.field_type))
        });
        let owned: Vec<MetricRow> = sorted.into_iter().cloned().collect();
        let metrics = if owned.is_empty() { None } else { Some(MetricStats::of(&owned)?) };
        let images: BTreeSet<&str> = owned.iter().map(|r| r.image_filename.as_str()).collect();
        Ok(AggregateReport {
            model_name: model_name.to_string(),
            image_count: images.len(),
            row_count: owned.len(),
            missing_count: owned.iter().filter(|r| r.missing).count(),
            metrics,
            coverage,
            timing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn present(rows: &[(&str, &[FieldType])]) -> PresentFields {
        rows.iter().map(|(p, f)| (p.to_string(), f.iter().copied().collect())).collect()
    }

    fn selected(rows: &[(&str, FieldType, &str)]) -> SelectedText {
        rows.iter().map(|(p, f, t)| ((p.to_string(), *f), t.to_string())).collect()
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[1.0, 2.0, 3.0]).unwrap(), (2.0, 1.0));
        assert_eq!(mean_sd(&[5.0]).unwrap(), (5.0, 0.0));
        assert_eq!(mean_sd(&[]), Err(AggregateError::EmptyInput));
    }

    #[test]
    fn product_covered_by_any_present_field() {
        use FieldType::*;
        let pres = present(&[("a", &[Ingredients, Nfp]), ("b", &[Ingredients, Nfp]), ("c", &[])]);
        let sel = selected(&[("a", Nfp, "energy 450"), ("b", Ingredients, ""), ("b", Nfp, "  ")]);
        assert_eq!(product_coverage(&sel, &pres), Ratio { covered: 1, total: 2 });
    }

    #[test]
    fn text_for_absent_field_does_not_count() {
        use FieldType::*;
        let pres = present(&[("a", &[Ingredients])]);
        let sel = selected(&[("a", Nfp, "energy")]);
        assert_eq!(product_coverage(&sel, &pres).covered, 0);
    }

    #[test]
    fn field_coverage_ratio() {
        use FieldType::*;
        let mut pres = PresentFields::new();
        let mut sel = SelectedText::new();
        for i in 0..40 {
            let p = format!("p{i:02}");
            pres.insert(p.clone(), [Ingredients].into());
            if i < 30 {
                sel.insert((p, Ingredients), "sugar".into());
            }
        }
        assert_eq!(field_coverage(Ingredients, &sel, &pres).unwrap().pct(), 75.0);
        assert_eq!(field_coverage(Nfp, &sel, &pres), Err(AggregateError::NoProductsWithField(Nfp)));

        let report = coverage_report(&sel, &pres);
        assert_eq!(report.product_coverage_pct, Some(75.0));
        assert_eq!(report.nfp_field_pct, None);
    }

    #[test]
    fn full_coverage_is_100() {
        use FieldType::*;
        let pres: PresentFields = (0..59).map(|i| (format!("p{i}"), [Nfp].into())).collect();
        let sel: SelectedText = (0..59).map(|i| ((format!("p{i}"), Nfp), "x".to_string())).collect();
        assert_eq!(product_coverage(&sel, &pres).pct(), 100.0);
    }

    #[test]
    fn timing() {
        let rec = |t: Option<f64>| ImageRecord {
            product_key: "p".into(),
            image_filename: "p (1).jpg".into(),
            raw_text: String::new(),
            time_seconds: t,
        };
        let t = timing_aggregate(&vec![rec(Some(0.5)); 4]).unwrap();
        assert_eq!((t.total_time_s, t.mean_time_per_image_s, t.image_count), (2.0, 0.5, 4));
        assert!(matches!(timing_aggregate(&[]), Err(AggregateError::MissingTiming(_))));
        assert!(matches!(timing_aggregate(&[rec(Some(1.0)), rec(None)]), Err(AggregateError::MissingTiming(_))));
    }
}
