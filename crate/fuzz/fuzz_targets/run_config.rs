//! TOML run configuration and `HH:MM:SS` clock values. Errors are fine;
//! panics are not.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mlofi_cli::config::{parse_clock, parse_config, Overrides, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_clock(text);
    if let Ok(file) = parse_config(text) {
        let _ = RunConfig::resolve(file, &Overrides::default(), None);
    }
});
