//! Binary 8-bit PGM (P5) export for frame dumps and action strips.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Writes `values` (row-major, [0, 1]) as a binary P5 graymap.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), width * height, "pixel count mismatch");
    let mut bytes = Vec::with_capacity(values.len() + 32);
    write!(bytes, "P5\n{width} {height}\n255\n")?;
    bytes.extend(
        values
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes raw gray bytes as a binary P5 graymap.
pub fn write_pgm_bytes(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    assert_eq!(gray.len(), width * height, "pixel count mismatch");
    let mut bytes = Vec::with_capacity(gray.len() + 32);
    write!(bytes, "P5\n{width} {height}\n255\n")?;
    bytes.extend_from_slice(gray);
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Minimal P5 reader used by the test suite.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header_end = data
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .context("truncated PGM header")?;
    let header = std::str::from_utf8(&data[..header_end]).context("non-UTF8 PGM header")?;
    let mut parts = header.split_ascii_whitespace();
    anyhow::ensure!(parts.next() == Some("P5"), "not a P5 graymap");
    let width: usize = parts.next().context("missing width")?.parse()?;
    let height: usize = parts.next().context("missing height")?.parse()?;
    let maxval: usize = parts.next().context("missing maxval")?.parse()?;
    anyhow::ensure!(maxval == 255, "expected 8-bit graymap");
    let pixels = data[header_end + 1..].to_vec();
    anyhow::ensure!(pixels.len() == width * height, "pixel payload size mismatch");
    Ok((width, height, pixels))
}
