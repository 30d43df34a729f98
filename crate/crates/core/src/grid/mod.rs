//! Gridded hourly temperature data: ingestion, spatial/temporal aggregation
//! into labeled daily sample buckets, standardization, and bit-exact binary
//! persistence.

mod aggregate;
mod io;
mod standardize;

pub use aggregate::{aggregate_spatial, aggregate_temporal, AggregationSummary, RegionStream};
pub use io::{export_buckets, export_grid, ingest_buckets, ingest_grid, GridFormat};
pub use standardize::{destandardize_value, standardize, standardize_value, StandardizationStats};

use crate::error::{Error, Result};

/// Kelvin sanity bounds for terrestrial 2 m temperatures.
pub const TEMP_MIN_K: f64 = 150.0;
pub const TEMP_MAX_K: f64 = 350.0;

/// Cells per region side; a region is one degree at 0.125° resolution.
pub const REGION_SIDE: usize = 8;

/// Hours per sample.
pub const HOURS_PER_SAMPLE: usize = 24;

/// Values per sample: 24 hourly 8x8 frames.
pub const SAMPLE_LEN: usize = HOURS_PER_SAMPLE * REGION_SIDE * REGION_SIDE;

/// Raw conditioning dimension: 12 one-hot months + 2 region coords + 1 period.
pub const LABEL_DIM: usize = 15;

// ---------------------------------------------------------------------------
// GridDataset
// ---------------------------------------------------------------------------

/// Raw hourly temperature grid over a lon/lat box.
///
/// Values are row-major with latitude-major rows (row 0 at the SW origin),
/// west to east within a row, hour-major outermost. Masked cells hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub n_hours: usize,
    /// Hours since the Unix epoch (UTC) of the first frame.
    pub start_time: u64,
    values: Vec<f32>,
    /// Per-cell validity, `width * height` entries; true = data present.
    mask: Vec<bool>,
}

impl GridDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        n_hours: usize,
        start_time: u64,
        values: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || n_hours == 0 {
            return Err(Error::data("grid dimensions must be at least 1"));
        }
        let expected = width * height * n_hours;
        if values.len() != expected {
            return Err(Error::PayloadMismatch {
                expected,
                got: values.len(),
            });
        }
        if mask.len() != width * height {
            return Err(Error::PayloadMismatch {
                expected: width * height,
                got: mask.len(),
            });
        }
        let ds = Self {
            origin_lon,
            origin_lat,
            cell_size,
            width,
            height,
            n_hours,
            start_time,
            values,
            mask,
        };
        ds.validate_values()?;
        Ok(ds)
    }

    fn validate_values(&self) -> Result<()> {
        for hour in 0..self.n_hours {
            for y in 0..self.height {
                for x in 0..self.width {
                    let v = self.value(x, y, hour) as f64;
                    if self.is_valid(x, y) {
                        if !v.is_finite() || !(TEMP_MIN_K..=TEMP_MAX_K).contains(&v) {
                            return Err(Error::TemperatureOutOfRange { value: v, x, y, hour });
                        }
                    } else if v != 0.0 {
                        return Err(Error::data(format!(
                            "masked cell ({x}, {y}) must be zero-padded, found {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, hour: usize) -> f32 {
        self.values[(hour * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Relative offset of a 1°×1° block from the SW corner; SW-most is (1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionIndex {
    pub x: u32,
    pub y: u32,
}

impl RegionIndex {
    pub fn new(x: u32, y: u32) -> Result<Self> {
        if x == 0 || y == 0 {
            return Err(Error::InvalidLabel(format!(
                "region indices start at (1, 1), got ({x}, {y})"
            )));
        }
        Ok(Self { x, y })
    }
}

/// Four-year period index; period k covers [base_year + 4k, base_year + 4k + 3].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeriodIndex {
    pub k: u32,
}

impl PeriodIndex {
    pub const SPAN_YEARS: i32 = 4;

    /// Period for `year` relative to `base_year`.
    pub fn for_year(year: i32, base_year: i32) -> Result<Self> {
        if year < base_year {
            return Err(Error::InvalidLabel(format!(
                "year {year} precedes base year {base_year}"
            )));
        }
        Ok(Self {
            k: ((year - base_year) / Self::SPAN_YEARS) as u32,
        })
    }

    /// Inclusive year range covered by this period.
    pub fn year_range(&self, base_year: i32) -> (i32, i32) {
        let start = base_year + Self::SPAN_YEARS * self.k as i32;
        (start, start + Self::SPAN_YEARS - 1)
    }
}

/// Conditioning label: month one-hot, region coordinates, period index.
/// The raw vector is 15-dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionLabel {
    /// Calendar month, 1..=12.
    pub month: u8,
    pub region: RegionIndex,
    pub period: PeriodIndex,
}

impl ConditionLabel {
    pub fn new(month: u8, region: RegionIndex, period: PeriodIndex) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidLabel(format!("month {month} out of 1..=12")));
        }
        Ok(Self {
            month,
            region,
            period,
        })
    }

    /// Raw 15-d conditioning vector: one-hot month, region x, region y, k.
    pub fn raw_vector(&self) -> [f64; LABEL_DIM] {
        let mut v = [0.0; LABEL_DIM];
        v[self.month as usize - 1] = 1.0;
        v[12] = self.region.x as f64;
        v[13] = self.region.y as f64;
        v[14] = self.period.k as f64;
        v
    }

    /// Reconstruct a label from a raw vector, validating the one-hot block.
    pub fn from_raw(v: &[f64]) -> Result<Self> {
        if v.len() != LABEL_DIM {
            return Err(Error::InvalidLabel(format!(
                "label vector has {} entries, expected {LABEL_DIM}",
                v.len()
            )));
        }
        let mut month = None;
        for (i, &m) in v[..12].iter().enumerate() {
            if m == 1.0 {
                if month.is_some() {
                    return Err(Error::InvalidLabel("month one-hot has two ones".into()));
                }
                month = Some(i as u8 + 1);
            } else if m != 0.0 {
                return Err(Error::InvalidLabel(format!(
                    "month one-hot entry {i} is {m}, expected 0 or 1"
                )));
            }
        }
        let month = month.ok_or_else(|| Error::InvalidLabel("month one-hot is all zero".into()))?;
        Self::new(
            month,
            RegionIndex::new(v[12] as u32, v[13] as u32)?,
            PeriodIndex { k: v[14] as u32 },
        )
    }
}

// ---------------------------------------------------------------------------
// Samples and buckets
// ---------------------------------------------------------------------------

/// One 24-hour 8×8 temperature map with its conditioning label.
///
/// Values are hour-major Kelvin (or standardized units after
/// [`standardize`]); f64 in memory, f32 on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSample {
    pub label: ConditionLabel,
    values: Vec<f64>,
}

impl TemperatureSample {
    pub fn new(label: ConditionLabel, values: Vec<f64>) -> Result<Self> {
        if values.len() != SAMPLE_LEN {
            return Err(Error::PayloadMismatch {
                expected: SAMPLE_LEN,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("sample contains non-finite values"));
        }
        Ok(Self { label, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, hour: usize, row: usize, col: usize) -> f64 {
        self.values[(hour * REGION_SIDE + row) * REGION_SIDE + col]
    }

    /// Map values through `f`, keeping the label.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            label: self.label,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Samples sharing one (region, month, period) label.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBucket {
    pub label: ConditionLabel,
    samples: Vec<TemperatureSample>,
}

impl SampleBucket {
    pub fn new(label: ConditionLabel, samples: Vec<TemperatureSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("bucket must contain at least one sample"));
        }
        if let Some(s) = samples.iter().find(|s| s.label != label) {
            return Err(Error::InvalidLabel(format!(
                "sample label {:?} does not match bucket label {:?}",
                s.label, label
            )));
        }
        Ok(Self { label, samples })
    }

    pub fn samples(&self) -> &[TemperatureSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
