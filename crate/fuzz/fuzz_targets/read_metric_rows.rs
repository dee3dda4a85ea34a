#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::report::read_metric_rows;

fuzz_target!(|data: &[u8]| {
    let _ = read_metric_rows(data);
});
