//! Assigns OCR text to the ingredient-list or nutrition-panel field and picks
//! one block per (product, field).
//!
//! Keyword classification compares anchor densities. The fuzzy fallback scores
//! each anchor against the text with [`partial_ratio`] and is meant for engines
//! whose output fragments anchor words.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::corpus::FieldType;
use crate::metrics::bounded_edit_distance;
use crate::textnorm::{tokenize, NormalizationConfig};

pub const DEFAULT_FUZZY_THRESHOLD: u32 = 80;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SectionError {
    #[error("partial ratio needle is empty")]
    EmptyNeedle,
    #[error("fuzzy threshold {0} outside 0..=100")]
    ThresholdOutOfRange(u32),
}

/// Classification outcome for a block of text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    Field(FieldType),
    Unclassified,
}

impl Section {
    pub fn field(self) -> Option<FieldType> {
        match self {
            Section::Field(f) => Some(f),
            Section::Unclassified => None,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Field(field) => field.fmt(f),
            Section::Unclassified => f.write_str("unclassified"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Keyword,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedBlock {
    pub product_key: String,
    pub image_filename: String,
    pub section: Section,
    /// Normalized text of the whole block.
    pub text: String,
    /// Anchor density of `text` for `section`; 0 when unclassified.
    pub density: f64,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzyConfig {
    pub threshold: u32,
}

impl FuzzyConfig {
    pub fn new(threshold: u32) -> Result<Self, SectionError> {
        if threshold > 100 {
            return Err(SectionError::ThresholdOutOfRange(threshold));
        }
        Ok(FuzzyConfig { threshold })
    }
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig { threshold: DEFAULT_FUZZY_THRESHOLD }
    }
}

/// Non-overlapping anchor occurrences, scanning left to right and taking the
/// longest anchor at each position.
fn anchor_hits(text: &str, anchors: &[&str]) -> usize {
    let mut hits = 0;
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        match anchors.iter().find(|a| rest.starts_with(**a)) {
            Some(a) => {
                hits += 1;
                pos += a.len();
            }
            None => {
                pos += rest.chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    hits
}

/// Anchor hits per token for `field`.
pub fn keyword_density(text: &str, field: FieldType, cfg: &NormalizationConfig) -> f64 {
    let tokens = tokenize(text).len();
    if tokens == 0 {
        return 0.0;
    }
    anchor_hits(text, &cfg.anchors_longest_first(field)) as f64 / tokens as f64
}

fn pick(ingredients: f64, nfp: f64, floor_ok: bool, tie: FieldType) -> Section {
    if !floor_ok {
        return Section::Unclassified;
    }
    match ingredients.partial_cmp(&nfp) {
        Some(Ordering::Greater) => Section::Field(FieldType::Ingredients),
        Some(Ordering::Less) => Section::Field(FieldType::Nfp),
        _ => Section::Field(tie),
    }
}

/// Field with the strictly higher anchor density; unclassified when neither
/// field has an anchor.
pub fn classify_text(text: &str, cfg: &NormalizationConfig) -> Section {
    let ing = keyword_density(text, FieldType::Ingredients, cfg);
    let nfp = keyword_density(text, FieldType::Nfp, cfg);
    pick(ing, nfp, ing > 0.0 || nfp > 0.0, cfg.tie_break)
}

/// Best similarity (0 to 100) between `needle` and any window of `haystack`
/// of the needle's length, or the whole haystack if it is shorter.
///
/// Window similarity is `1 - distance / max(len)`. Only an exact window scores
/// 100; near-matches that would round up to 100 are capped at 99.
pub fn partial_ratio(needle: &str, haystack: &str) -> Result<u32, SectionError> {
    let needle: Vec<char> = needle.chars().collect();
    if needle.is_empty() {
        return Err(SectionError::EmptyNeedle);
    }
    let hay: Vec<char> = haystack.chars().collect();
    if hay.is_empty() {
        return Ok(0);
    }
    let width = needle.len().min(hay.len());
    let denom = needle.len().max(width);

    // Smallest distance over all windows; each window only needs to beat it.
    let mut best = denom;
    for window in hay.windows(width) {
        if let Some(d) = bounded_edit_distance(&needle, window, best) {
            best = d;
            if d == 0 {
                return Ok(100);
            }
        }
    }
    let score = (100.0 * (1.0 - best as f64 / denom as f64)).round() as u32;
    Ok(score.min(99))
}

/// Best partial ratio of any of the field's anchors against `text`.
pub fn anchor_score(text: &str, field: FieldType, cfg: &NormalizationConfig) -> u32 {
    cfg.anchors.for_field(field).iter().filter_map(|a| partial_ratio(a, text).ok()).max().unwrap_or(0)
}

/// Field whose best anchor score is highest and at least the threshold.
pub fn classify_fuzzy(text: &str, cfg: &NormalizationConfig, fz: FuzzyConfig) -> Section {
    let ing = anchor_score(text, FieldType::Ingredients, cfg);
    let nfp = anchor_score(text, FieldType::Nfp, cfg);
    let best = ing.max(nfp);
    pick(f64::from(ing), f64::from(nfp), best >= fz.threshold && !text.is_empty(), cfg.tie_break)
}

/// Classifies normalized text by keyword density, falling back to fuzzy
/// matching for unclassified text when `fuzzy` is set.
pub fn classify_block(
    product_key: &str,
    image_filename: &str,
    text: String,
    cfg: &NormalizationConfig,
    fuzzy: Option<FuzzyConfig>,
) -> ClassifiedBlock {
    let mut section = classify_text(&text, cfg);
    let mut method = Method::Keyword;
    if section == Section::Unclassified {
        if let Some(fz) = fuzzy {
            section = classify_fuzzy(&text, cfg, fz);
            method = Method::Fuzzy;
        }
    }
    let density = section.field().map_or(0.0, |f| keyword_density(&text, f, cfg));
    ClassifiedBlock {
        product_key: product_key.to_string(),
        image_filename: image_filename.to_string(),
        section,
        text,
        density,
        method,
    }
}

/// Order in which candidates are preferred: higher density, then longer
/// text, then the lexicographically smaller filename.
fn preference(a: &ClassifiedBlock, b: &ClassifiedBlock) -> Ordering {
    b.density
        .total_cmp(&a.density)
        .then_with(|| b.text.chars().count().cmp(&a.text.chars().count()))
        .then_with(|| a.image_filename.cmp(&b.image_filename))
}

/// The preferred block for `(product, field)`, if any.
pub fn select_candidate<'a>(
    blocks: &'a [ClassifiedBlock],
    product: &str,
    field: FieldType,
) -> Option<&'a ClassifiedBlock> {
    blocks
        .iter()
        .filter(|b| b.product_key == product && b.section == Section::Field(field))
        .min_by(|a, b| preference(a, b))
}
