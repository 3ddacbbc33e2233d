//! A single LOBSTER message row. Any row that parses must survive a
//! format/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mlofi::lobster::{format_message_line, parse_message_line};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(event) = parse_message_line(text, 1) {
        let again = parse_message_line(&format_message_line(&event), 1).expect("formatted row must parse");
        assert_eq!(event, again);
    }
});
