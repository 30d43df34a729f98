//! Global standardization of sample buckets to zero mean, unit variance.

use serde::{Deserialize, Serialize};

use super::SampleBucket;
use crate::error::{Error, Result};

/// Mean and population standard deviation of a training corpus, stored with
/// every trained model so samples can be mapped back to Kelvin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: f64,
    /// Population (divide-by-N) standard deviation.
    pub std: f64,
}

impl StandardizationStats {
    /// Global statistics over every value in every bucket.
    pub fn fit(buckets: &[SampleBucket]) -> Result<Self> {
        let mut count = 0u64;
        let mut sum = 0.0f64;
        for b in buckets {
            for s in b.samples() {
                count += s.values().len() as u64;
                sum += s.values().iter().sum::<f64>();
            }
        }
        if count == 0 {
            return Err(Error::data("cannot standardize an empty corpus"));
        }
        let mean = sum / count as f64;
        let mut ss = 0.0f64;
        for b in buckets {
            for s in b.samples() {
                ss += s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
        }
        let std = (ss / count as f64).sqrt();
        if std <= 0.0 {
            return Err(Error::DegenerateDataset);
        }
        Ok(Self { mean, std })
    }
}

#[inline]
pub fn standardize_value(v: f64, stats: &StandardizationStats) -> f64 {
    (v - stats.mean) / stats.std
}

#[inline]
pub fn destandardize_value(v: f64, stats: &StandardizationStats) -> f64 {
    v * stats.std + stats.mean
}

/// Transform buckets to standard units. Statistics are computed from the
/// buckets when `stats` is `None`, otherwise the given statistics are applied
/// (the train/apply split for held-out data).
pub fn standardize(
    buckets: &[SampleBucket],
    stats: Option<StandardizationStats>,
) -> Result<(Vec<SampleBucket>, StandardizationStats)> {
    if buckets.is_empty() {
        return Err(Error::data("cannot standardize an empty corpus"));
    }
    let stats = match stats {
        Some(s) => s,
        None => StandardizationStats::fit(buckets)?,
    };
    if stats.std <= 0.0 {
        return Err(Error::DegenerateDataset);
    }
    let out = buckets
        .iter()
        .map(|b| {
            let samples = b
                .samples()
                .iter()
                .map(|s| s.map(|v| standardize_value(v, &stats)))
                .collect();
            SampleBucket::new(b.label, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, stats))
}
