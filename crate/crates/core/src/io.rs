//! Raw snapshot files and Brownian path export.
//!
//! A snapshot holds one scalar component: the magic bytes `GFSF`, a `u32`
//! format version, a `u32` dimension count, one `u32` size per axis, then the
//! row-major samples as little-endian `f64`. Domain lengths, time and model
//! parameters travel in a separate metadata document written by the caller.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid};
use crate::noise::WienerPath;

pub const MAGIC: &[u8; 4] = b"GFSF";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_snapshot(out: &mut impl Write, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(12 + 4 * grid.dims() + 8 * grid.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dims() as u32).to_le_bytes());
    for &n in grid.shape() {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Shape and samples of a snapshot, before a grid is attached.
pub fn read_snapshot_raw(input: &mut impl Read) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing GFSF magic bytes".into()));
    }
    let version = read_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let dims = read_u32(input)? as usize;
    if !(1..=3).contains(&dims) {
        return Err(Error::Format(format!("snapshot has {dims} axes")));
    }
    let shape = (0..dims).map(|_| read_u32(input).map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let total = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .filter(|&t| t > 0 && t <= 1 << 28)
        .ok_or_else(|| Error::Format(format!("implausible snapshot shape {shape:?}")))?;
    let mut bytes = vec![0u8; total * 8];
    input.read_exact(&mut bytes)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after snapshot data".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect();
    Ok((shape, values))
}

/// Reads a snapshot onto `grid`, whose shape must match the file.
pub fn read_snapshot(input: &mut impl Read, grid: &PeriodicGrid) -> Result<Field> {
    let (shape, values) = read_snapshot_raw(input)?;
    if shape != grid.shape() {
        return Err(Error::Format(format!(
            "snapshot shape {shape:?} does not match grid {:?}",
            grid.shape()
        )));
    }
    Field::from_values(grid, values)
}

/// CSV rows `step,dW1,…,dWK` with a header line. Values use Rust's
/// shortest round-trip formatting, so reading them back is lossless.
pub fn write_path_csv(out: &mut impl Write, path: &WienerPath) -> Result<()> {
    let mut s = String::from("step");
    for i in 1..=path.components() {
        s.push_str(&format!(",dW{i}"));
    }
    s.push('\n');
    for n in 0..path.steps() {
        s.push_str(&n.to_string());
        for v in path.increment(n) {
            s.push(',');
            s.push_str(&format!("{v:?}"));
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_path_csv(input: &mut impl Read, dt: f64) -> Result<WienerPath> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty path file".into()))?;
    let k = header.split(',').count().saturating_sub(1);
    if k == 0 || !header.starts_with("step") {
        return Err(Error::Format(format!("bad path header {header:?}")));
    }
    let mut increments = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != k + 1 || cells[0].parse::<usize>().ok() != Some(n) {
            return Err(Error::Format(format!("bad path row {n}: {line:?}")));
        }
        for c in &cells[1..] {
            increments.push(
                c.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad increment {c:?} in row {n}")))?,
            );
        }
    }
    WienerPath::from_increments(k, dt, increments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::band_limited;

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let g = PeriodicGrid::new(&[8, 16]).unwrap();
        let f = band_limited(&g, 4, 2, 1.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"GFSF");
        assert_eq!(buf.len(), 4 + 4 + 4 + 2 * 4 + 128 * 8);
        let back = read_snapshot(&mut buf.as_slice(), &g).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn rejects_corrupt_snapshots() {
        let g = PeriodicGrid::new(&[8, 8]).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &Field::constant(&g, 1.0)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_snapshot(&mut bad.as_slice(), &g).is_err());
        assert!(read_snapshot(&mut &buf[..buf.len() - 1], &g).is_err());
        let other = PeriodicGrid::new(&[8, 16]).unwrap();
        assert!(read_snapshot(&mut buf.as_slice(), &other).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_snapshot(&mut long.as_slice(), &g).is_err());
    }

    #[test]
    fn path_csv_roundtrip() {
        let p = WienerPath::sample_increments(3, 2, 0.01, 5).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,dW1,dW2\n0,"));
        let back = read_path_csv(&mut buf.as_slice(), 0.01).unwrap();
        assert_eq!(back.increments(), p.increments());
    }
}
