#![no_main]

use libfuzzer_sys::fuzz_target;
use prism_core::config::parse_center;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_center(text) {
        assert!(c.cx.is_finite() && c.cy.is_finite());
        let again = parse_center(&format!("{:?},{:?}", c.cx, c.cy)).unwrap();
        assert_eq!((again.cx.to_bits(), again.cy.to_bits()), (c.cx.to_bits(), c.cy.to_bits()));
    }
});
