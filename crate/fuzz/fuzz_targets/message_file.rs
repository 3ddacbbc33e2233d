#![no_main]

use libfuzzer_sys::fuzz_target;
use mlofi::lobster::{parse_message_rows, parse_messages, SessionConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_message_rows(text);
    // Replays the parsed rows through the book, so crossing and unknown-order
    // errors are exercised too.
    let _ = parse_messages(text, "2016-01-04", &SessionConfig::default());
});
