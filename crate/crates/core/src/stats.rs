//! Order statistics shared by the quartile and validation stages.

use serde::Serialize;

/// Median of an unsorted slice; even lengths average the two central values.
/// Returns `None` for an empty slice. NaNs are not expected.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    Some(quantile_sorted(values, 0.5))
}

/// Linear-interpolation quantile of sorted data (R's default, type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Six-number summary, as printed by R's `summary()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        Some(Summary {
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            mean,
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    /// Entry-wise `self - other`.
    pub fn minus(&self, other: &Summary) -> Summary {
        Summary {
            min: self.min - other.min,
            q1: self.q1 - other.q1,
            median: self.median - other.median,
            mean: self.mean - other.mean,
            q3: self.q3 - other.q3,
            max: self.max - other.max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [90.0, 10.0, 50.0]), Some(50.0));
        assert_eq!(median(&mut [75.0, 75.0]), Some(75.0));
        assert_eq!(median(&mut [10.0, 20.0, 80.0, 90.0, 95.0]), Some(80.0));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn matches_r_summary() {
        // summary(c(1, 2, 3, 4, 10)) in R: 1 2 3 4 4 10
        let s = Summary::of(&[10.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.mean, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 4.0, 10.0));
        // summary(1:4): 1.00 1.75 2.50 2.50 3.25 4.00
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
    }
}
