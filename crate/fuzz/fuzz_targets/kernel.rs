#![no_main]

//! Input: JSON header, a NUL byte, then the CSV matrix.

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::decode_kernel;

fuzz_target!(|data: &[u8]| {
    let Some(i) = data.iter().position(|&b| b == 0) else { return };
    let (Ok(header), Ok(csv)) = (std::str::from_utf8(&data[..i]), std::str::from_utf8(&data[i + 1..])) else {
        return;
    };
    if let Ok(k) = decode_kernel(header, csv) {
        let _ = k.martingale_defect();
    }
});
