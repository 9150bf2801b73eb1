#![no_main]

use libfuzzer_sys::fuzz_target;
use prism_core::config::{parse_config, render_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        let again = parse_config(&render_config(&cfg)).expect("rendered config parses");
        assert_eq!(again, cfg);
    }
});
