#![no_main]

use libfuzzer_sys::fuzz_target;
use pulseforge::archive::{parse_archive, write_records};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(records) = parse_archive(text) else {
        return;
    };
    // Anything accepted must survive a write/parse round trip unchanged.
    let written = write_records(&records);
    let again = parse_archive(&written).expect("written archive parses");
    assert_eq!(again, records);
    assert_eq!(write_records(&again), written);
});
