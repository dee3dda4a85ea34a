//! Benchmark harness for OCR output on food-packaging photos.
//!
//! Raw engine output is normalized ([`textnorm`]), assigned to the
//! ingredient-list or nutrition-panel field ([`sectioner`]), scored against
//! human transcriptions ([`metrics`]) and summarized per model
//! ([`aggregate`], [`report`]). [`pipeline`] wires the steps together for the
//! `ocrbench` binary.

pub mod aggregate;
pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod sectioner;
pub mod textnorm;

pub use corpus::{FieldType, GroundTruthEntry, ImageRecord, SectionedText};
pub use metrics::{BleuParams, MetricRow, Smoothing};
pub use textnorm::NormalizationConfig;
