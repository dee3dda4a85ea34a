#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::report::{read_summary, render_tables};

fuzz_target!(|data: &[u8]| {
    if let Ok(summary) = read_summary(data) {
        let _ = render_tables(&summary.models);
    }
});
