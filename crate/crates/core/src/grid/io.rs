//! Bit-exact binary persistence ("TGRD" grids, "TBKT" buckets) and CSV
//! ingestion for tests.
//!
//! Grid layout (little-endian): magic "TGRD" | version u16 | origin_lon f64 |
//! origin_lat f64 | cell_size f64 | width u32 | height u32 | n_hours u32 |
//! start_time u64 | mask bitset (ceil(w·h/8) bytes) | f32 payload, row-major
//! (lat-major rows, west→east), hour-major outermost.
//!
//! Bucket layout: magic "TBKT" | version u16 | label 15×f32 | count u32 |
//! per sample 24×8×8 f32, hour-major. A zero count is legal on disk; it
//! denotes an empty generated set, not an aggregation bucket.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Timelike};

use super::{
    ConditionLabel, GridDataset, TemperatureSample, LABEL_DIM, SAMPLE_LEN,
};
use crate::error::{Error, Result};

const GRID_MAGIC: &[u8; 4] = b"TGRD";
const BUCKET_MAGIC: &[u8; 4] = b"TBKT";
const VERSION: u16 = 1;

/// Size in bytes of the fixed bucket header, exposed for file-size checks.
pub const BUCKET_HEADER_BYTES: usize = 4 + 2 + LABEL_DIM * 4 + 4;

/// On-disk grid encodings accepted by [`ingest_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for GridFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(GridFormat::Binary),
            "csv" => Ok(GridFormat::Csv),
            other => Err(Error::data(format!(
                "unknown grid format '{other}', expected binary or csv"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Grid binary
// ---------------------------------------------------------------------------

/// Write a grid; round-trips bit-exactly through [`ingest_grid`].
pub fn export_grid(ds: &GridDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ds.origin_lon.to_le_bytes())?;
    w.write_all(&ds.origin_lat.to_le_bytes())?;
    w.write_all(&ds.cell_size.to_le_bytes())?;
    w.write_all(&(ds.width as u32).to_le_bytes())?;
    w.write_all(&(ds.height as u32).to_le_bytes())?;
    w.write_all(&(ds.n_hours as u32).to_le_bytes())?;
    w.write_all(&ds.start_time.to_le_bytes())?;
    let mask = ds.mask();
    let mut bits = vec![0u8; mask.len().div_ceil(8)];
    for (i, &valid) in mask.iter().enumerate() {
        if valid {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&bits)?;
    for &v in ds.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a grid in the given format.
pub fn ingest_grid(path: &Path, format: GridFormat) -> Result<GridDataset> {
    match format {
        GridFormat::Binary => ingest_grid_binary(path),
        GridFormat::Csv => ingest_grid_csv(path),
    }
}

fn ingest_grid_binary(path: &Path) -> Result<GridDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Format {
            what: "grid file",
            detail: format!("bad magic {magic:?}, expected TGRD"),
        });
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Format {
            what: "grid file",
            detail: format!("unsupported version {version}"),
        });
    }
    let origin_lon = read_f64(&mut r)?;
    let origin_lat = read_f64(&mut r)?;
    let cell_size = read_f64(&mut r)?;
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let n_hours = read_u32(&mut r)? as usize;
    let start_time = read_u64(&mut r)?;
    let n_cells = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format {
            what: "grid file",
            detail: "dimension overflow".into(),
        })?;
    let mut bits = vec![0u8; n_cells.div_ceil(8)];
    r.read_exact(&mut bits)?;
    let mask: Vec<bool> = (0..n_cells).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();

    let expected = n_cells * n_hours;
    let mut values = Vec::with_capacity(expected);
    let mut buf = [0u8; 4];
    for _ in 0..expected {
        if r.read_exact(&mut buf).is_err() {
            return Err(Error::PayloadMismatch {
                expected,
                got: values.len(),
            });
        }
        values.push(f32::from_le_bytes(buf));
    }
    let mut trailing = [0u8; 1];
    if r.read_exact(&mut trailing).is_ok() {
        return Err(Error::Format {
            what: "grid file",
            detail: "trailing bytes after payload".into(),
        });
    }
    GridDataset::new(
        origin_lon, origin_lat, cell_size, width, height, n_hours, start_time, values, mask,
    )
}

// ---------------------------------------------------------------------------
// Grid CSV
// ---------------------------------------------------------------------------

/// CSV with header `time_iso8601,lon,lat,kelvin`; every present cell must
/// cover the full hour range, absent cells become masked cells.
fn ingest_grid_csv(path: &Path) -> Result<GridDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format {
                what: "grid csv",
                detail: format!("missing column '{name}'"),
            })
    };
    let (c_time, c_lon, c_lat, c_kelvin) =
        (col("time_iso8601")?, col("lon")?, col("lat")?, col("kelvin")?);

    let mut rows: Vec<(u64, f64, f64, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let time_s = &record[c_time];
        let ts = DateTime::parse_from_rfc3339(time_s).map_err(|e| Error::Format {
            what: "grid csv",
            detail: format!("bad time '{time_s}': {e}"),
        })?;
        if ts.minute() != 0 || ts.second() != 0 || ts.timestamp() % 3600 != 0 {
            return Err(Error::Format {
                what: "grid csv",
                detail: format!("time '{time_s}' is not on an hour boundary"),
            });
        }
        if ts.timestamp() < 0 {
            return Err(Error::Format {
                what: "grid csv",
                detail: format!("time '{time_s}' predates the epoch"),
            });
        }
        let hour = (ts.timestamp() / 3600) as u64;
        let parse = |field: &str, what: &'static str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|e| Error::Format {
                what: "grid csv",
                detail: format!("bad {what} '{field}': {e}"),
            })
        };
        rows.push((
            hour,
            parse(&record[c_lon], "lon")?,
            parse(&record[c_lat], "lat")?,
            parse(&record[c_kelvin], "kelvin")?,
        ));
    }
    if rows.is_empty() {
        return Err(Error::data("grid csv contains no data rows"));
    }

    let lons = distinct_sorted(rows.iter().map(|r| r.1));
    let lats = distinct_sorted(rows.iter().map(|r| r.2));
    let cell_size = infer_step(&lons).or_else(|| infer_step(&lats)).unwrap_or(0.125);
    let origin_lon = lons[0];
    let origin_lat = lats[0];
    let width = coord_count(&lons, cell_size)?;
    let height = coord_count(&lats, cell_size)?;

    let start_time = rows.iter().map(|r| r.0).min().unwrap();
    let end_time = rows.iter().map(|r| r.0).max().unwrap();
    let n_hours = (end_time - start_time + 1) as usize;

    let n_cells = width * height;
    let mut values = vec![0.0f32; n_cells * n_hours];
    let mut present = vec![false; n_cells * n_hours];
    for (hour, lon, lat, kelvin) in rows {
        let x = coord_index(lon, origin_lon, cell_size, width)?;
        let y = coord_index(lat, origin_lat, cell_size, height)?;
        let h = (hour - start_time) as usize;
        let idx = (h * height + y) * width + x;
        if present[idx] {
            return Err(Error::Format {
                what: "grid csv",
                detail: format!("duplicate entry for cell ({x}, {y}) at hour {hour}"),
            });
        }
        present[idx] = true;
        values[idx] = kelvin as f32;
    }

    // A cell is valid when every hour is present; partially-covered cells are
    // a data defect rather than missing data.
    let mut mask = vec![false; n_cells];
    for cell in 0..n_cells {
        let covered = (0..n_hours).filter(|h| present[h * n_cells + cell]).count();
        mask[cell] = match covered {
            0 => false,
            c if c == n_hours => true,
            c => {
                return Err(Error::Format {
                    what: "grid csv",
                    detail: format!(
                        "cell ({}, {}) covers {c} of {n_hours} hours",
                        cell % width,
                        cell / width
                    ),
                })
            }
        };
    }

    GridDataset::new(
        origin_lon, origin_lat, cell_size, width, height, n_hours, start_time, values, mask,
    )
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

fn infer_step(coords: &[f64]) -> Option<f64> {
    coords
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |a| a.min(d)))
        })
}

fn coord_count(coords: &[f64], step: f64) -> Result<usize> {
    let last = coords.last().unwrap();
    let first = coords[0];
    let count = ((last - first) / step).round() as usize + 1;
    for &c in coords {
        coord_index(c, first, step, count)?;
    }
    Ok(count)
}

fn coord_index(coord: f64, origin: f64, step: f64, count: usize) -> Result<usize> {
    let fidx = (coord - origin) / step;
    let idx = fidx.round();
    if (fidx - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= count {
        return Err(Error::Format {
            what: "grid csv",
            detail: format!("coordinate {coord} is not on the {step}-degree lattice"),
        });
    }
    Ok(idx as usize)
}

// ---------------------------------------------------------------------------
// Bucket binary
// ---------------------------------------------------------------------------

/// Write one labeled sample set; an empty slice writes a zero-count file.
pub fn export_buckets(label: &ConditionLabel, samples: &[TemperatureSample], path: &Path) -> Result<()> {
    for s in samples {
        if s.label != *label {
            return Err(Error::InvalidLabel(format!(
                "sample label {:?} does not match file label {:?}",
                s.label, label
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BUCKET_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in label.raw_vector() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    for s in samples {
        for &v in s.values() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a labeled sample set written by [`export_buckets`].
pub fn ingest_buckets(path: &Path) -> Result<(ConditionLabel, Vec<TemperatureSample>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BUCKET_MAGIC {
        return Err(Error::Format {
            what: "bucket file",
            detail: format!("bad magic {magic:?}, expected TBKT"),
        });
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Format {
            what: "bucket file",
            detail: format!("unsupported version {version}"),
        });
    }
    let mut raw = [0.0f64; LABEL_DIM];
    let mut buf = [0u8; 4];
    for slot in raw.iter_mut() {
        r.read_exact(&mut buf)?;
        *slot = f32::from_le_bytes(buf) as f64;
    }
    let label = ConditionLabel::from_raw(&raw)?;
    let count = read_u32(&mut r)? as usize;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let mut values = Vec::with_capacity(SAMPLE_LEN);
        for _ in 0..SAMPLE_LEN {
            if r.read_exact(&mut buf).is_err() {
                return Err(Error::PayloadMismatch {
                    expected: count * SAMPLE_LEN,
                    got: i * SAMPLE_LEN + values.len(),
                });
            }
            values.push(f32::from_le_bytes(buf) as f64);
        }
        samples.push(TemperatureSample::new(label, values)?);
    }
    Ok((label, samples))
}

// ---------------------------------------------------------------------------
// Little-endian primitives
// ---------------------------------------------------------------------------

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
