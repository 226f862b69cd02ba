//! Small statistics helpers: nearest-rank percentiles and means over
//! picosecond samples.

use crate::error::{Error, Result};

/// Nearest-rank percentile of an unsorted sample set.
///
/// Requires at least `ceil(1 / (1 - p/100))` samples so the requested tail
/// is actually resolved by data (1e4 samples for p99.99).
pub fn percentile(samples: &[u64], p: f64) -> Result<u64> {
    let needed = min_samples_for(p);
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            percentile: p,
            needed,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    Ok(percentile_of_sorted(&sorted, p))
}

/// Nearest-rank percentile of an already sorted slice (no sample-count gate).
pub fn percentile_of_sorted(sorted: &[u64], p: f64) -> u64 {
    assert!(!sorted.is_empty() && (0.0..=100.0).contains(&p));
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

pub fn min_samples_for(p: f64) -> usize {
    if p >= 100.0 {
        return usize::MAX;
    }
    (1.0 / (1.0 - p / 100.0)).ceil() as usize
}

pub fn mean(samples: &[u64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&x| x as f64).sum::<f64>() / samples.len() as f64
}
