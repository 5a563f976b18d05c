#![no_main]

//! Input: surface CSV, optionally followed by a NUL byte and the JSON
//! sidecar.

use libfuzzer_sys::fuzz_target;
use peacock_lab::call_surface::validate_surface;
use peacock_lab::io::parse_surface;

fuzz_target!(|data: &[u8]| {
    let (csv, meta) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], Some(&data[i + 1..])),
        None => (data, None),
    };
    let Ok(csv) = std::str::from_utf8(csv) else { return };
    let meta = match meta.map(std::str::from_utf8) {
        Some(Ok(m)) => Some(m),
        Some(Err(_)) => return,
        None => None,
    };
    if let Ok(s) = parse_surface(csv, meta) {
        let _ = validate_surface(&s);
    }
});
