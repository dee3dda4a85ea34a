#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::corpus::{read_predictions, Ingest};

fuzz_target!(|data: &[u8]| {
    let lenient = read_predictions(data, "fuzz", Ingest::Lenient);
    if let Ok(rows) = read_predictions(data, "fuzz", Ingest::Strict) {
        // Strict acceptance implies lenient acceptance of the same rows.
        assert_eq!(lenient.expect("lenient accepts what strict accepts"), rows);
    }
});
