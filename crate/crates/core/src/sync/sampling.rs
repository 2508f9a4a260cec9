use super::SyncError;

/// `round(num / den)` with ties to even; `den` must be positive.
pub(crate) fn div_round_half_even(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    }
}

/// Endpoint-inclusive evenly spaced frame indices:
/// `round(k (T - 1) / (budget - 1))` for `k = 0..budget`, deduplicated.
///
/// A budget larger than the frame count selects every frame.
pub fn sample_initial(frame_count: usize, budget: usize) -> Result<Vec<usize>, SyncError> {
    if frame_count < 2 {
        return Err(SyncError::Input(format!("need at least 2 frames, got {frame_count}")));
    }
    if budget < 2 {
        return Err(SyncError::Input(format!(
            "sampling budget must be at least 2, got {budget}"
        )));
    }
    let budget = budget.min(frame_count) as i64;
    let last = frame_count as i64 - 1;
    let mut out: Vec<usize> = (0..budget)
        .map(|k| div_round_half_even(k * last, budget - 1) as usize)
        .collect();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_spacing_examples() {
        assert_eq!(sample_initial(100, 5).unwrap(), vec![0, 25, 50, 74, 99]);
        assert_eq!(sample_initial(2, 2).unwrap(), vec![0, 1]);
        assert_eq!(sample_initial(4, 10).unwrap(), vec![0, 1, 2, 3]);
        assert!(sample_initial(1, 2).is_err());
        assert!(sample_initial(10, 1).is_err());
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(div_round_half_even(5, 2), 2);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(10, 3), 3);
        assert_eq!(div_round_half_even(11, 3), 4);
    }

    proptest! {
        #[test]
        fn strictly_increasing_with_endpoints(t in 2usize..5000, budget in 2usize..64) {
            let s = sample_initial(t, budget).unwrap();
            prop_assert_eq!(s[0], 0);
            prop_assert_eq!(*s.last().unwrap(), t - 1);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.len() <= budget);
        }
    }
}
