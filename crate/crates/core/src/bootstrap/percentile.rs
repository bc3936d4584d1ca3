use crate::error::{Error, Result};
use crate::scalar::Scalar;

// ceil/floor of a product that should be an integer, tolerant of rounding
fn ceil_tol(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

fn floor_tol(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Percentile interval of `values`: the order statistics at 1-based ranks
/// `ceil(k alpha / 2)` and `floor(k (1 - alpha / 2))`.
pub fn percentile_interval<S: Scalar>(values: &[S], alpha: f64) -> Result<(S, S)> {
    let k = values.len();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if (k as f64) * alpha < 5.0 - 1e-9 {
        return Err(Error::Invalid(format!(
            "percentile interval needs k * alpha >= 5 (k = {k}, alpha = {alpha})"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    let lo_rank = ceil_tol(k as f64 * alpha / 2.0).clamp(1, k);
    let hi_rank = floor_tol(k as f64 * (1.0 - alpha / 2.0)).clamp(lo_rank, k);
    Ok((sorted[lo_rank - 1], sorted[hi_rank - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_statistic_examples() {
        let v: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(percentile_interval(&v, 0.05).unwrap(), (25.0, 975.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile_interval(&v, 0.10).unwrap(), (5.0, 95.0));
        assert_eq!(percentile_interval(&[2.5f64; 200], 0.05).unwrap(), (2.5, 2.5));
    }

    #[test]
    fn too_few_values() {
        assert!(percentile_interval(&[1.0f64; 50], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn interval_ordered_and_inside_range(
            values in proptest::collection::vec(-1e3f64..1e3, 100..400),
            alpha in 0.05f64..0.3,
        ) {
            let (lo, hi) = percentile_interval(&values, alpha).unwrap();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= hi);
            prop_assert!(lo >= min && hi <= max);
        }

        #[test]
        fn wider_alpha_nests_inside(
            values in proptest::collection::vec(-1e3f64..1e3, 200..400),
        ) {
            let (lo_a, hi_a) = percentile_interval(&values, 0.05).unwrap();
            let (lo_b, hi_b) = percentile_interval(&values, 0.2).unwrap();
            prop_assert!(lo_a <= lo_b && hi_b <= hi_a);
        }
    }
}
