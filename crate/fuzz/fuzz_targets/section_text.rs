#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::sectioner::{classify_block, FuzzyConfig};
use ocrbench::textnorm::{extract_after_keyword, normalize_text, NormalizationConfig};

fuzz_target!(|raw: &str| {
    let cfg = NormalizationConfig::default().validated().unwrap();
    let text = normalize_text(raw, &cfg);
    assert_eq!(normalize_text(&text, &cfg), text);
    let block = classify_block("p", "i", text.clone(), &cfg, Some(FuzzyConfig::default()));
    if let Some(field) = block.section.field() {
        let e = extract_after_keyword(&text, field, &cfg);
        assert!(text.ends_with(e.text));
    }
});
