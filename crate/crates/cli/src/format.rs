//! Binary array format: magic `CGH1`, little-endian `u32` rank, `u64` sizes
//! per dimension, then row-major `f64` payload — interleaved `(re, im)` for
//! complex data, plain values for real data.  The payload length relative to
//! the dimension product tells a reader which of the two it has.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex64;

pub const MAGIC: &[u8; 4] = b"CGH1";

#[derive(Debug, Clone, PartialEq)]
pub enum CghData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CghArray {
    pub dims: Vec<u64>,
    pub data: CghData,
}

/// Write bytes to `path` atomically via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn header(dims: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * dims.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn write_complex_array(path: &Path, dims: &[u64], data: &[Complex64]) -> io::Result<()> {
    let mut bytes = header(dims);
    bytes.reserve(16 * data.len());
    for v in data {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn write_real_array(path: &Path, dims: &[u64], data: &[f64]) -> io::Result<()> {
    let mut bytes = header(dims);
    bytes.reserve(8 * data.len());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_array(path: &Path) -> io::Result<CghArray> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(bad("missing CGH1 magic"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let head = 8 + 8 * rank;
    if bytes.len() < head {
        return Err(bad("truncated header"));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 8 + 8 * i;
        dims.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    let points: u64 = dims.iter().product();
    let payload = &bytes[head..];
    let data = if payload.len() as u64 == 16 * points {
        let mut v = Vec::with_capacity(points as usize);
        for c in payload.chunks_exact(16) {
            v.push(Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            ));
        }
        CghData::Complex(v)
    } else if payload.len() as u64 == 8 * points {
        let mut v = Vec::with_capacity(points as usize);
        for c in payload.chunks_exact(8) {
            v.push(f64::from_le_bytes(c.try_into().unwrap()));
        }
        CghData::Real(v)
    } else {
        return Err(bad("payload size matches neither real nor complex f64"));
    };
    Ok(CghArray { dims, data })
}

/// CSV with a header row; numbers use the shortest round-trip formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("cgh_fmt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.cgh");
        let data = vec![
            Complex64::new(1.5, -2.25),
            Complex64::new(f64::MIN_POSITIVE, 1e300),
            Complex64::new(-0.0, 3.7),
            Complex64::new(0.1, 0.2),
        ];
        write_complex_array(&path, &[2, 2], &data).unwrap();
        let back = read_array(&path).unwrap();
        assert_eq!(back.dims, vec![2, 2]);
        match back.data {
            CghData::Complex(v) => {
                for (a, b) in v.iter().zip(data.iter()) {
                    assert_eq!(a.re.to_bits(), b.re.to_bits());
                    assert_eq!(a.im.to_bits(), b.im.to_bits());
                }
            }
            _ => panic!("expected complex payload"),
        }
    }

    #[test]
    fn real_payload_detected_by_size() {
        let dir = std::env::temp_dir().join("cgh_fmt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("b.cgh");
        write_real_array(&path, &[3], &[1.0, 2.0, 3.0]).unwrap();
        match read_array(&path).unwrap().data {
            CghData::Real(v) => assert_eq!(v, vec![1.0, 2.0, 3.0]),
            _ => panic!("expected real payload"),
        }
    }
}
