#![no_main]

use libfuzzer_sys::fuzz_target;
use peacock_lab::io::{parse_measure_csv, write_measure_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_measure_csv(text) {
        let again = parse_measure_csv(&write_measure_csv(&m)).expect("written measure parses");
        assert_eq!(again.grid(), m.grid());
        assert_eq!(again.weights(), m.weights());
    }
});
