#![no_main]

//! Input: JSON header, a NUL byte, then the binary payload.

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::{decode_ensemble, encode_ensemble};

fuzz_target!(|data: &[u8]| {
    let Some(i) = data.iter().position(|&b| b == 0) else { return };
    let Ok(header) = std::str::from_utf8(&data[..i]) else { return };
    if let Ok(ens) = decode_ensemble(header, &data[i + 1..]) {
        let (h, b) = encode_ensemble(&ens).expect("ensemble encodes");
        assert_eq!(decode_ensemble(&h, &b).expect("encoded ensemble decodes"), ens);
    }
});
