#![no_main]

//! Input: local-vol CSV, optionally followed by a NUL byte and the JSON
//! sidecar with the clamp list.

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::parse_local_vol;

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
    if let Ok(lv) = parse_local_vol(csv, meta) {
        let _ = lv.sigma_at(0.5, 0.0);
    }
});
