//! Contiguous, time-ordered fold partitions.

use std::ops::Range;

/// Splits `0..rows` into `folds` contiguous blocks whose sizes differ by at
/// most one, earlier blocks taking the extra rows.
pub fn contiguous_folds(rows: usize, folds: usize) -> Vec<Range<usize>> {
    assert!(folds >= 1, "at least one fold");
    let base = rows / folds;
    let extra = rows % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

/// Row indices outside `held_out`, in order.
pub fn training_rows(rows: usize, held_out: &Range<usize>) -> Vec<usize> {
    (0..held_out.start).chain(held_out.end..rows).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uneven_split() {
        assert_eq!(contiguous_folds(12, 5), vec![0..3, 3..6, 6..8, 8..10, 10..12]);
        assert_eq!(training_rows(5, &(1..3)), vec![0, 3, 4]);
    }

    proptest! {
        #[test]
        fn folds_partition_the_rows(rows in 0usize..5_000, folds in 1usize..12) {
            let parts = contiguous_folds(rows, folds);
            prop_assert_eq!(parts.len(), folds);
            let mut seen = vec![0u8; rows];
            for part in &parts {
                for r in part.clone() {
                    seen[r] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
