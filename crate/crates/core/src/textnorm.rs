//! Text normalization applied to every engine's output before scoring.
//!
//! Stages run in a fixed order: lowercase, special-character filtering,
//! whitespace collapse, then (for predictions) anchor extraction. Lengths and
//! positions are measured in Unicode scalar values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FieldType;

/// Punctuation kept by default besides letters, digits and space.
pub const DEFAULT_KEEP_PUNCTUATION: &str = ".,%():-/";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("anchor list for {0} is empty")]
    NoAnchors(FieldType),
    #[error("anchor {anchor:?} for {field} is empty after normalization")]
    EmptyAnchor { field: FieldType, anchor: String },
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchors {
    pub ingredients: Vec<String>,
    pub nfp: Vec<String>,
}

impl Anchors {
    pub fn for_field(&self, field: FieldType) -> &[String] {
        match field {
            FieldType::Ingredients => &self.ingredients,
            FieldType::Nfp => &self.nfp,
        }
    }
}

impl Default for Anchors {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Anchors {
            ingredients: owned(&["ingredients:", "ingredients", "ingrediente", "bestanddele"]),
            nfp: owned(&[
                "nutrition information",
                "nutritional information",
                "nutrition facts",
                "typical nutritional information",
            ]),
        }
    }
}

/// Settings shared by normalization and sectioning.
///
/// Letters and digits are always kept; `keep_charset` lists the additional
/// characters that survive filtering. Anything else becomes a space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub keep_charset: String,
    pub anchors: Anchors,
    /// Field chosen when both fields score equally and above zero.
    pub tie_break: FieldType,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            keep_charset: DEFAULT_KEEP_PUNCTUATION.to_string(),
            anchors: Anchors::default(),
            tie_break: FieldType::Ingredients,
        }
    }
}

impl NormalizationConfig {
    /// Parses a JSON config and validates it. Missing keys take defaults.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: NormalizationConfig = serde_json::from_str(text)?;
        cfg.validated()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Checks anchor lists and rewrites each anchor into normalized form, so
    /// that anchors are compared against text in the same representation.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        // Anchors are normalized with the final keep-set, so validate that first.
        let probe = NormalizationConfig { anchors: Anchors { ingredients: vec![], nfp: vec![] }, ..self.clone() };
        for field in FieldType::ALL {
            let list = match field {
                FieldType::Ingredients => &mut self.anchors.ingredients,
                FieldType::Nfp => &mut self.anchors.nfp,
            };
            if list.is_empty() {
                return Err(ConfigError::NoAnchors(field));
            }
            for anchor in list.iter_mut() {
                let norm = normalize_text(anchor, &probe);
                if norm.is_empty() {
                    return Err(ConfigError::EmptyAnchor { field, anchor: anchor.clone() });
                }
                *anchor = norm;
            }
        }
        Ok(self)
    }

    pub fn keeps(&self, c: char) -> bool {
        c == ' ' || c.is_alphanumeric() || self.keep_charset.contains(c)
    }

    /// Anchors for a field, longest first, so that at equal positions the
    /// longer keyword is preferred.
    pub fn anchors_longest_first(&self, field: FieldType) -> Vec<&str> {
        let mut list: Vec<&str> = self.anchors.for_field(field).iter().map(String::as_str).collect();
        list.sort_by_key(|a| std::cmp::Reverse(a.chars().count()));
        list
    }
}

/// Lowercases a single scalar without growing the string. The few characters
/// whose lowercase form is a multi-scalar sequence keep only its first scalar.
fn lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Lowercase, replace characters outside the keep-set by spaces, collapse
/// whitespace runs and trim.
pub fn normalize_text(raw: &str, cfg: &NormalizationConfig) -> String {
    let filtered: String = raw
        .chars()
        .map(|c| {
            let c = lower(c);
            if cfg.keeps(c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    let mut out = String::with_capacity(filtered.len());
    for token in filtered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Result of anchor extraction; `text` is always a suffix of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extracted<'a> {
    pub text: &'a str,
    /// The anchor that matched, `None` when no anchor occurs.
    pub anchor: Option<&'a str>,
}

impl Extracted<'_> {
    pub fn no_anchor(&self) -> bool {
        self.anchor.is_none()
    }
}

/// Finds the earliest occurrence of any anchor (longest first on ties) and
/// returns its byte span.
pub(crate) fn first_anchor<'c>(text: &str, anchors: &[&'c str]) -> Option<(usize, usize, &'c str)> {
    let mut best: Option<(usize, usize, &str)> = None;
    for &anchor in anchors {
        if let Some(pos) = text.find(anchor) {
            let better = match best {
                None => true,
                Some((bpos, bend, _)) => pos < bpos || (pos == bpos && pos + anchor.len() > bend),
            };
            if better {
                best = Some((pos, pos + anchor.len(), anchor));
            }
        }
    }
    best
}

/// Returns the text after the first occurrence of a field anchor, with any
/// separating colons and whitespace dropped. Without an anchor the input is
/// returned.
pub fn extract_after_keyword<'a>(text: &'a str, field: FieldType, cfg: &'a NormalizationConfig) -> Extracted<'a> {
    let anchors: Vec<&'a str> = cfg.anchors.for_field(field).iter().map(String::as_str).collect();
    match first_anchor(text, &anchors) {
        Some((_, end, anchor)) => Extracted {
            text: text[end..].trim_start_matches(|c: char| c == ':' || c.is_whitespace()),
            anchor: Some(anchor),
        },
        None => Extracted { text, anchor: None },
    }
}

/// Splits on whitespace; never yields empty tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NormalizationConfig {
        NormalizationConfig::default().validated().unwrap()
    }

    #[test]
    fn normalizes_case_punctuation_and_spacing() {
        assert_eq!(normalize_text("  SUGAR,  Salt!! ", &cfg()), "sugar, salt");
        assert_eq!(normalize_text("", &cfg()), "");
        assert_eq!(normalize_text("sugar, salt", &cfg()), "sugar, salt");
        assert_eq!(normalize_text("Fat\t3.2g\n(2%)  *SATURATES*", &cfg()), "fat 3.2g (2%) saturates");
        assert_eq!(normalize_text("Bestanddele: SUIKER", &cfg()), "bestanddele: suiker");
        assert_eq!(normalize_text("ÉNERGIE ½", &cfg()), "énergie ½");
    }

    #[test]
    fn multi_scalar_lowercase_does_not_grow() {
        let s = "İSTANBUL";
        let n = normalize_text(s, &cfg());
        assert_eq!(n, "istanbul");
        assert!(n.chars().count() <= s.chars().count());
    }

    #[test]
    fn extracts_after_earliest_anchor() {
        let c = cfg();
        let e = extract_after_keyword("contains wheat. ingredients: sugar, salt", FieldType::Ingredients, &c);
        assert_eq!(e.text, "sugar, salt");
        assert_eq!(e.anchor, Some("ingredients:"));

        let e = extract_after_keyword("nutrition information per 100g energy 450", FieldType::Nfp, &c);
        assert_eq!(e.text, "per 100g energy 450");

        let e = extract_after_keyword("sugar, salt", FieldType::Ingredients, &c);
        assert_eq!(e.text, "sugar, salt");
        assert!(e.no_anchor());

        let e = extract_after_keyword("bestanddele: suiker", FieldType::Ingredients, &c);
        assert_eq!(e.text, "suiker");
    }

    #[test]
    fn typical_nutritional_information_anchor_wins_by_position() {
        let c = cfg();
        let e = extract_after_keyword("typical nutritional information per 100g", FieldType::Nfp, &c);
        assert_eq!(e.anchor, Some("typical nutritional information"));
        assert_eq!(e.text, "per 100g");
    }

    #[test]
    fn anchor_at_end_yields_empty() {
        let c = cfg();
        let e = extract_after_keyword("front panel ingredients:", FieldType::Ingredients, &c);
        assert_eq!(e.text, "");
        assert!(!e.no_anchor());
    }

    #[test]
    fn tokenizes_on_whitespace() {
        assert_eq!(tokenize("sugar, salt"), ["sugar,", "salt"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a b  c"), ["a", "b", "c"]);
    }

    #[test]
    fn config_from_json() {
        let c = NormalizationConfig::from_json(
            r#"{"keep_charset": ".,:", "anchors": {"ingredients": ["INGREDIENTS:"], "nfp": ["Nutrition"]}}"#,
        )
        .unwrap();
        assert_eq!(c.anchors.ingredients, ["ingredients:"]);
        assert_eq!(c.anchors.nfp, ["nutrition"]);
        assert_eq!(normalize_text("50% (x)", &c), "50 x");

        let partial = NormalizationConfig::from_json(r#"{"keep_charset": ""}"#).unwrap();
        assert_eq!(partial.anchors.nfp[0], "nutrition information");
        // ':' is filtered under this keep-set, so the anchor loses it.
        assert_eq!(partial.anchors.ingredients[0], "ingredients");
    }

    #[test]
    fn config_rejects_empty_anchor_lists() {
        let err = NormalizationConfig::from_json(r#"{"anchors": {"ingredients": [], "nfp": ["x"]}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::NoAnchors(FieldType::Ingredients)));
        let err = NormalizationConfig::from_json(r#"{"anchors": {"ingredients": ["!!"], "nfp": ["x"]}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::EmptyAnchor { .. }));
        assert!(NormalizationConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
