#![no_main]

use libfuzzer_sys::fuzz_target;
use ocrbench::corpus::parse_filename;

fuzz_target!(|name: &str| {
    if let Ok(parts) = parse_filename(name) {
        // Whatever parses must re-render to a name that parses the same way.
        let again = parse_filename(&parts.format_filename("jpg")).expect("formatted name parses");
        assert_eq!(again, parts);
    }
});
