#![no_main]

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::parse_family_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_family_manifest(text);
    }
});
