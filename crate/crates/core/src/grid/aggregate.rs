//! Spatial blocking into 1°×1° regions and temporal bucketing into labeled
//! daily samples.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Timelike};
use rayon::prelude::*;

use super::{
    ConditionLabel, GridDataset, PeriodIndex, RegionIndex, SampleBucket, TemperatureSample,
    HOURS_PER_SAMPLE, REGION_SIDE, SAMPLE_LEN,
};
use crate::error::{Error, Result};

/// Hourly 8×8 frames for one region, cut out of the full grid.
#[derive(Debug, Clone)]
pub struct RegionStream {
    pub region: RegionIndex,
    pub start_time: u64,
    pub n_hours: usize,
    /// Hour-major frames, 64 values each, row 0 south.
    frames: Vec<f64>,
}

impl RegionStream {
    #[inline]
    pub fn frame(&self, hour: usize) -> &[f64] {
        &self.frames[hour * REGION_SIDE * REGION_SIDE..(hour + 1) * REGION_SIDE * REGION_SIDE]
    }
}

/// Bookkeeping emitted alongside aggregation results.
#[derive(Debug, Clone, Default)]
pub struct AggregationSummary {
    /// Trailing hours that did not fill a complete UTC day, per region.
    pub dropped_trailing_hours: usize,
    /// Regions excluded because at least one of their 64 cells is masked.
    pub excluded_regions: Vec<RegionIndex>,
    /// Raw cells east/north of the last full 8-cell block.
    pub dropped_cells: usize,
}

/// Block the grid into 1°×1° regions of 8×8 cells anchored at the SW corner.
///
/// Region (x, y) covers cells [(x-1)·8, x·8) × [(y-1)·8, y·8); trailing cells
/// that do not fill a full block are dropped. A region is retained only when
/// all 64 of its cells are unmasked.
pub fn aggregate_spatial(
    ds: &GridDataset,
) -> Result<(BTreeMap<RegionIndex, RegionStream>, AggregationSummary)> {
    if ds.width < REGION_SIDE || ds.height < REGION_SIDE {
        return Err(Error::data(format!(
            "grid {}x{} smaller than one {REGION_SIDE}x{REGION_SIDE} region",
            ds.width, ds.height
        )));
    }
    let nx = ds.width / REGION_SIDE;
    let ny = ds.height / REGION_SIDE;
    let mut summary = AggregationSummary {
        dropped_cells: ds.width * ds.height - nx * REGION_SIDE * ny * REGION_SIDE,
        ..Default::default()
    };

    let mut region_ids = Vec::new();
    for ry in 1..=ny {
        for rx in 1..=nx {
            let region = RegionIndex::new(rx as u32, ry as u32)?;
            let x0 = (rx - 1) * REGION_SIDE;
            let y0 = (ry - 1) * REGION_SIDE;
            let complete = (0..REGION_SIDE)
                .all(|dy| (0..REGION_SIDE).all(|dx| ds.is_valid(x0 + dx, y0 + dy)));
            if complete {
                region_ids.push((region, x0, y0));
            } else {
                summary.excluded_regions.push(region);
            }
        }
    }

    let streams: Vec<(RegionIndex, RegionStream)> = region_ids
        .par_iter()
        .map(|&(region, x0, y0)| {
            let mut frames = Vec::with_capacity(ds.n_hours * REGION_SIDE * REGION_SIDE);
            for hour in 0..ds.n_hours {
                for dy in 0..REGION_SIDE {
                    for dx in 0..REGION_SIDE {
                        frames.push(ds.value(x0 + dx, y0 + dy, hour) as f64);
                    }
                }
            }
            (
                region,
                RegionStream {
                    region,
                    start_time: ds.start_time,
                    n_hours: ds.n_hours,
                    frames,
                },
            )
        })
        .collect();

    Ok((streams.into_iter().collect(), summary))
}

/// Cut region streams into UTC calendar days and bucket them by
/// (region, month, period k = floor((year - base_year) / 4)).
///
/// Streams must start on a UTC midnight; a partial trailing day is dropped
/// and counted in the summary.
pub fn aggregate_temporal(
    streams: &BTreeMap<RegionIndex, RegionStream>,
    base_year: i32,
) -> Result<(Vec<SampleBucket>, AggregationSummary)> {
    let mut buckets: BTreeMap<ConditionLabel, Vec<TemperatureSample>> = BTreeMap::new();
    let mut summary = AggregationSummary::default();

    for stream in streams.values() {
        if stream.start_time % HOURS_PER_SAMPLE as u64 != 0 {
            return Err(Error::data(format!(
                "stream start hour {} is not aligned to UTC midnight",
                stream.start_time
            )));
        }
        let n_days = stream.n_hours / HOURS_PER_SAMPLE;
        summary.dropped_trailing_hours += stream.n_hours - n_days * HOURS_PER_SAMPLE;

        for day in 0..n_days {
            let day_start = stream.start_time + (day * HOURS_PER_SAMPLE) as u64;
            let ts = DateTime::from_timestamp((day_start * 3600) as i64, 0)
                .ok_or_else(|| Error::data(format!("hour {day_start} out of calendar range")))?;
            debug_assert_eq!(ts.hour(), 0);
            let label = ConditionLabel::new(
                ts.month() as u8,
                stream.region,
                PeriodIndex::for_year(ts.year(), base_year)?,
            )?;
            let mut values = Vec::with_capacity(SAMPLE_LEN);
            for hour in 0..HOURS_PER_SAMPLE {
                values.extend_from_slice(stream.frame(day * HOURS_PER_SAMPLE + hour));
            }
            buckets
                .entry(label)
                .or_default()
                .push(TemperatureSample::new(label, values)?);
        }
    }

    let buckets = buckets
        .into_iter()
        .map(|(label, samples)| SampleBucket::new(label, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok((buckets, summary))
}
