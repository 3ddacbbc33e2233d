#![no_main]

use libfuzzer_sys::fuzz_target;
use mlofi::lobster::parse_orderbook_row;

fuzz_target!(|data: &[u8]| {
    let Some((&levels, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let _ = parse_orderbook_row(text, usize::from(levels % 16), 1);
});
