//! Shared numeric conventions: percentile, mean/std, median and IQR.
//!
//! One percentile definition is used everywhere (intensity clipping, HD95,
//! interquartile ranges): linear interpolation between closest ranks. For a
//! sorted sample `v[0..n]` and percentile `p` in `[0, 100]`, the fractional
//! rank is `r = p/100 * (n-1)` and the value is
//! `v[floor(r)] + frac(r) * (v[ceil(r)] - v[floor(r)])`.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

/// Percentile of an ascending-sorted slice. Empty input returns NaN.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let p = p.clamp(0.0, 100.0);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile of an unsorted sample (sorts a copy).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

/// Population mean and standard deviation (divide by `n`).
pub fn mean_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Sample mean and standard deviation (divide by `n - 1`; zero when `n < 2`).
pub fn mean_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Median and interquartile range `(median, q25, q75)` under the shared
/// percentile convention.
pub fn median_iqr(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    (
        percentile_sorted(&sorted, 50.0),
        percentile_sorted(&sorted, 25.0),
        percentile_sorted(&sorted, 75.0),
    )
}
