#![no_main]

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::parse_gallery_run;

fuzz_target!(|data: &[u8]| {
    // parse only: building the processes is bounded by the spec itself
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_gallery_run(text);
    }
});
