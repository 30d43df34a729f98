//! "TPAR" parameter checkpoint format: name-indexed f32 blobs with shape
//! headers, entries sorted by name so identical parameter sets serialize to
//! identical bytes.
//!
//! Layout (little-endian):
//!   magic "TPAR" | version u16 | count u32
//!   per entry: name_len u16 | name utf-8 | ndim u8 | dims u32 × ndim | f32 × numel

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TPAR";
const VERSION: u16 = 1;

/// One named parameter blob.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Serialize blobs to `path`, sorted by name.
pub fn write_params(path: &Path, blobs: &[ParamBlob]) -> Result<()> {
    let mut sorted: Vec<&ParamBlob> = blobs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sorted.len() as u32).to_le_bytes())?;
    for blob in sorted {
        let expected: usize = blob.shape.iter().product();
        if expected != blob.data.len() {
            return Err(Error::PayloadMismatch {
                expected,
                got: blob.data.len(),
            });
        }
        let name = blob.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[blob.shape.len() as u8])?;
        for &d in &blob.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &blob.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read blobs from `path` in their serialized (name-sorted) order.
pub fn read_params(path: &Path) -> Result<Vec<ParamBlob>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            detail: format!("bad magic {magic:?}, expected TPAR"),
        });
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Format {
            what: "checkpoint",
            detail: format!("unsupported version {version}"),
        });
    }
    let count = read_u32(&mut r)? as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format {
            what: "checkpoint",
            detail: format!("non-utf8 parameter name: {e}"),
        })?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        blobs.push(ParamBlob { name, shape, data });
    }
    Ok(blobs)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.tpar");
        let blobs = vec![
            ParamBlob {
                name: "z.late".into(),
                shape: vec![2, 3],
                data: vec![1.0, -2.0, 3.5, 0.0, 4.25, -0.5],
            },
            ParamBlob {
                name: "a.early".into(),
                shape: vec![4],
                data: vec![9.0, 8.0, 7.0, 6.0],
            },
        ];
        write_params(&path, &blobs).unwrap();
        let back = read_params(&path).unwrap();
        assert_eq!(back.len(), 2);
        // Sorted by name on disk.
        assert_eq!(back[0].name, "a.early");
        assert_eq!(back[1].name, "z.late");
        assert_eq!(back[1].data, blobs[0].data);
        // Deterministic bytes: writing the read-back set reproduces the file.
        let path2 = dir.path().join("params2.tpar");
        write_params(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.tpar");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00").unwrap();
        assert!(read_params(&path).is_err());
    }
}
