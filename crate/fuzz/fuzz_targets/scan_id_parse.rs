#![no_main]

use libfuzzer_sys::fuzz_target;
use prism_core::ScanChoice;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(choice) = text.parse::<ScanChoice>() {
        assert_eq!(choice.to_string().parse::<ScanChoice>().unwrap(), choice);
    }
});
