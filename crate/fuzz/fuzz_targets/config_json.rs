#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::textnorm::{normalize_text, NormalizationConfig};

fuzz_target!(|text: &str| {
    if let Ok(cfg) = NormalizationConfig::from_json(text) {
        // Validated anchors are already normalized.
        for anchor in cfg.anchors.ingredients.iter().chain(&cfg.anchors.nfp) {
            assert_eq!(&normalize_text(anchor, &cfg), anchor);
        }
    }
});
