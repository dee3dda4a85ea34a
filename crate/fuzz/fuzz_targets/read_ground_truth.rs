#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::corpus::{read_ground_truth, write_ground_truth};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = read_ground_truth(data, "fuzz") {
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &entries).unwrap();
        assert_eq!(read_ground_truth(buf.as_slice(), "fuzz").unwrap(), entries);
    }
});
