#![no_main]

use libfuzzer_sys::fuzz_target;
use prism_core::io::{decode_prfm, encode_prfm};

// Accepted payloads are canonical: re-encoding gives back the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_prfm(data) {
        assert_eq!(encode_prfm(&map), data);
    }
});
