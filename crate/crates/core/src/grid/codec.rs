//! Binary grid format: `"P3AG"`, then little-endian `u32` version, height,
//! width and channels, then `height·width·channels` little-endian `f32`
//! values, channel-planar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FeatureGrid;
use crate::error::{file_error, Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"P3AG";
pub const GRID_VERSION: u32 = 1;

// Guards against allocating absurd buffers from a corrupt header.
const MAX_VALUES: u64 = 1 << 31;

pub fn write_grid<W: Write>(mut out: W, grid: &FeatureGrid) -> Result<()> {
    out.write_all(GRID_MAGIC)?;
    for v in [
        GRID_VERSION,
        grid.height() as u32,
        grid.width() as u32,
        grid.channels() as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &v in grid.data() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

/// Reads one grid blob. Trailing bytes are left in the reader.
pub fn read_grid<R: Read>(mut input: R) -> Result<FeatureGrid> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("missing magic".into()))?;
    if &magic != GRID_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let height = read_u32(&mut input)? as usize;
    let width = read_u32(&mut input)? as usize;
    let channels = read_u32(&mut input)? as usize;
    let count = height as u64 * width as u64 * channels as u64;
    if count > MAX_VALUES {
        return Err(Error::Format(format!(
            "grid {height}x{width}x{channels} too large"
        )));
    }
    let mut bytes = vec![0u8; count as usize * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("truncated payload, expected {count} values")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    FeatureGrid::new(height, width, channels, data)
}

pub fn write_grid_file(path: impl AsRef<Path>, grid: &FeatureGrid) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(file_error(path))?;
    let mut out = BufWriter::new(file);
    write_grid(&mut out, grid)?;
    out.flush().map_err(file_error(path))?;
    Ok(())
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(file_error(path))?;
    read_grid(BufReader::new(file))
}
