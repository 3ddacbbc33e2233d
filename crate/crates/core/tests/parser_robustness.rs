//! Stable-toolchain stand-in for the fuzz targets: arbitrary row-like text
//! must never panic, and anything that parses must round-trip.

use mlofi::lobster::{
    format_message_line, format_orderbook_row, parse_message_line, parse_message_rows, parse_messages,
    parse_orderbook_row, parse_timestamp, SessionConfig,
};
use proptest::prelude::*;

fn row_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[0-9.,+ -]{0,60}",
        (
            "[0-9]{1,6}(\\.[0-9]{0,10})?",
            -1i64..9,
            any::<i64>(),
            -5i64..500,
            prop_oneof![Just(-9_999_999_999i64), -10i64..20_000, Just(9_999_999_999i64)],
            -2i64..3
        )
            .prop_map(|(t, k, id, s, p, d)| format!("{t},{k},{id},{s},{p},{d}")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn message_rows_round_trip(text in row_text()) {
        if let Ok(event) = parse_message_line(&text, 1) {
            let again = parse_message_line(&format_message_line(&event), 1).unwrap();
            prop_assert_eq!(event, again);
        }
    }

    #[test]
    fn message_files_never_panic(rows in prop::collection::vec(row_text(), 0..12)) {
        let text = rows.join("\n");
        let _ = parse_message_rows(&text);
        let _ = parse_messages(&text, "2016-01-04", &SessionConfig::default());
    }

    #[test]
    fn orderbook_rows_round_trip(levels in 0usize..4, fields in prop::collection::vec(-20i64..20_000, 0..16)) {
        let text = fields.iter().map(i64::to_string).collect::<Vec<_>>().join(",");
        if let Ok(snap) = parse_orderbook_row(&text, levels, 1) {
            let again = parse_orderbook_row(&format_orderbook_row(&snap), levels, 1).unwrap();
            prop_assert_eq!(snap, again);
        }
    }

    #[test]
    fn timestamps_never_panic(text in "[0-9.e+-]{0,30}") {
        if let Some(t) = parse_timestamp(&text) {
            prop_assert_eq!(parse_timestamp(&t.to_string()), Some(t));
        }
    }
}
