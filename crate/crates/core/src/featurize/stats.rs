//! Segment extraction and the nine per-segment summary statistics.

pub const SEGMENT_NAMES: [&str; 7] = [
    "entire", "first10", "first25", "first50", "last10", "last25", "last50",
];

pub const STAT_NAMES: [&str; 9] = [
    "count", "min", "max", "mean", "std", "skew", "kurtosis", "median", "max_abs_dev",
];

const FRACTIONS: [f64; 3] = [0.10, 0.25, 0.50];

/// Splits a time series into the entire sequence plus the first and last
/// 10/25/50% of the window. Membership is by timestamp: `t <= p*window` for the
/// first segments and `t >= (1-p)*window` for the last ones, both closed.
pub fn segment_series(points: &[(f64, f64)], window: f64) -> [Vec<f64>; 7] {
    let mut out: [Vec<f64>; 7] = Default::default();
    for &(t, v) in points {
        out[0].push(v);
        for (k, p) in FRACTIONS.iter().enumerate() {
            if t <= p * window {
                out[1 + k].push(v);
            }
            if t >= (1.0 - p) * window {
                out[4 + k].push(v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStats {
    /// count, min, max, mean, std, skew, kurtosis, median, max absolute deviation
    pub values: [f64; 9],
    pub observed: bool,
}

/// Population moments; skew and excess kurtosis are 0 when the variance is 0.
pub fn segment_stats(xs: &[f64]) -> SegmentStats {
    if xs.is_empty() {
        return SegmentStats {
            values: [0.0; 9],
            observed: false,
        };
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        min = min.min(x);
        max = max.max(x);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let max_abs_dev = xs.iter().map(|x| (x - median).abs()).fold(0.0, f64::max);

    SegmentStats {
        values: [n, min, max, mean, m2.sqrt(), skew, kurt, median, max_abs_dev],
        observed: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_interval_membership() {
        let segs = segment_series(&[(0.0, 1.0), (24.0, 2.0), (48.0, 3.0)], 48.0);
        assert_eq!(segs[0], vec![1.0, 2.0, 3.0]);
        assert_eq!(segs[3], vec![1.0, 2.0]); // first50
        assert_eq!(segs[6], vec![2.0, 3.0]); // last50
        assert_eq!(segs[1], vec![1.0]);
        assert_eq!(segs[4], vec![3.0]);
    }

    #[test]
    fn empty_series_gives_empty_segments() {
        assert!(segment_series(&[], 48.0).iter().all(Vec::is_empty));
    }

    #[test]
    fn endpoint_lands_only_in_last_segments() {
        let segs = segment_series(&[(48.0, 7.0)], 48.0);
        let present: Vec<bool> = segs.iter().map(|s| !s.is_empty()).collect();
        assert_eq!(present, vec![true, false, false, false, true, true, true]);
    }

    #[test]
    fn stats_of_one_two_three() {
        let s = segment_stats(&[1.0, 2.0, 3.0]);
        assert!(s.observed);
        let expect = [3.0, 1.0, 3.0, 2.0, 0.816_496_580_927_726, 0.0, -1.5, 2.0, 1.0];
        for (a, b) in s.values.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_list_unobserved() {
        assert!(!segment_stats(&[]).observed);
    }

    #[test]
    fn constant_list_conventions() {
        let s = segment_stats(&[5.0; 4]);
        assert_eq!(s.values[4], 0.0);
        assert_eq!(s.values[5], 0.0);
        assert_eq!(s.values[6], 0.0);
        assert_eq!(s.values[8], 0.0);
        let one = segment_stats(&[2.5]);
        assert_eq!(one.values[5], 0.0);
        assert_eq!(one.values[6], 0.0);
    }

    #[test]
    fn even_count_median_is_midpoint() {
        let s = segment_stats(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.values[7], 2.5);
        assert_eq!(s.values[8], 1.5);
    }
}
