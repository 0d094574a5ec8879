use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{GridSolution, SolverConfig, SolverMetrics};
use crate::error::{Error, Result};

/// Contents of a flat binary grid file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dimension: usize,
    pub cells: usize,
    pub spacing: f64,
    pub values: Vec<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    solver: &'a SolverConfig,
    metrics: &'a SolverMetrics,
    values_file: String,
    mask_file: String,
}

fn encode(dimension: usize, cells: usize, spacing: f64, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(dimension as u64).to_le_bytes());
    buf.extend_from_slice(&(cells as u64).to_le_bytes());
    buf.extend_from_slice(&spacing.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<base>.bin` (values), `<base>.mask.bin` (mask as 0/1 floats) and
/// `<base>.json` (solver config and metrics). Returns the three paths.
pub fn write_snapshot(solution: &GridSolution, base: &Path) -> Result<[PathBuf; 3]> {
    let grid = solution.grid();
    let values = with_suffix(base, ".bin");
    let mask = with_suffix(base, ".mask.bin");
    let sidecar = with_suffix(base, ".json");
    let (n, m, h) = (grid.dim(), grid.cells(), grid.spacing());
    fs::write(&values, encode(n, m, h, solution.values().iter().copied()))?;
    fs::write(
        &mask,
        encode(n, m, h, solution.mask().iter().map(|b| if *b { 1.0 } else { 0.0 })),
    )?;
    let file_name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let doc = Sidecar {
        solver: &solution.config,
        metrics: &solution.metrics,
        values_file: file_name(&values),
        mask_file: file_name(&mask),
    };
    let mut f = fs::File::create(&sidecar)?;
    serde_json::to_writer_pretty(&mut f, &doc).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok([values, mask, sidecar])
}

/// Reads a flat binary grid file written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 || (bytes.len() - 24) % 8 != 0 {
        return Err(Error::Data(format!("{}: truncated snapshot", path.display())));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8-byte slice") };
    let dimension = u64::from_le_bytes(word(0)) as usize;
    let cells = u64::from_le_bytes(word(1)) as usize;
    let spacing = f64::from_le_bytes(word(2));
    let count = (bytes.len() - 24) / 8;
    let expected = (cells + 1).checked_pow(dimension as u32);
    if expected != Some(count) {
        return Err(Error::Data(format!(
            "{}: header promises {dimension}-d grid with {cells} cells, payload has {count} values",
            path.display()
        )));
    }
    let values = (0..count).map(|i| f64::from_le_bytes(word(3 + i))).collect();
    Ok(Snapshot {
        dimension,
        cells,
        spacing,
        values,
    })
}
