//! Grid files, heatmaps and CSV tables.
//!
//! Grid file layout (little-endian): `"SPGD"`, `u32` version, `u32` ndim,
//! `ndim` x `u32` dims, `u32` components, then `f64` values
//! component-major with the first axis slowest.

use std::fmt::Write as _;
use std::path::Path;

use spinn::separable::SolutionGrid;

use crate::error::CliError;

pub const GRID_MAGIC: &[u8; 4] = b"SPGD";
pub const GRID_VERSION: u32 = 1;

pub fn grid_bytes(grid: &SolutionGrid) -> Vec<u8> {
    let dims = grid.dims();
    let mut w = Vec::with_capacity(16 + 4 * dims.len() + 8 * grid.data().len());
    w.extend_from_slice(GRID_MAGIC);
    w.extend_from_slice(&GRID_VERSION.to_le_bytes());
    w.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &n in dims {
        w.extend_from_slice(&(n as u32).to_le_bytes());
    }
    w.extend_from_slice(&(grid.components() as u32).to_le_bytes());
    for v in grid.data() {
        w.extend_from_slice(&v.to_le_bytes());
    }
    w
}

pub fn write_grid(path: &Path, grid: &SolutionGrid) -> Result<(), CliError> {
    std::fs::write(path, grid_bytes(grid)).map_err(|e| CliError::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<SolutionGrid, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: &str| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut words = bytes.get(4..).unwrap_or_default().chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")));
    if !bytes.starts_with(GRID_MAGIC) {
        return Err(bad("not a grid file"));
    }
    if words.next() != Some(GRID_VERSION) {
        return Err(bad("unsupported grid version"));
    }
    let ndim = words.next().ok_or_else(|| bad("truncated header"))? as usize;
    let dims = (0..ndim)
        .map(|_| words.next().map(|v| v as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("truncated header"))?;
    let comps = words.next().ok_or_else(|| bad("truncated header"))? as usize;
    let header = 16 + 4 * ndim;
    let data: Vec<f64> = bytes[header.min(bytes.len())..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    SolutionGrid::new(dims, comps, data).map_err(|e| bad(&e.to_string()))
}

/// Binary P5 image; `values` row-major `height x width`, min-max scaled to
/// 0..=255 (a constant image maps to 0).
pub fn pgm_bytes(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "image size");
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

/// CSV text with the given header and numeric rows.
pub fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v}").expect("string write");
        }
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
