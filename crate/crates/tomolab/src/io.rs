//! File formats.
//!
//! Sinograms and images are stored as a JSON header plus a companion raw
//! file of little-endian 32-bit floats, row-major. The header's `data`
//! field names the raw file relative to the header. Rendered outputs are
//! 16-bit binary PGM (P5) with the affine value-to-gray mapping recorded
//! in a comment line.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{Image, ImageGrid, Sinogram, SinogramGrid};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SinogramHeader {
    n_phi: usize,
    n_p: usize,
    p_max: f64,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageHeader {
    n: usize,
    extent: f64,
    data: String,
}

fn raw_name(json_path: &Path) -> Result<(String, PathBuf)> {
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::config(format!("bad path {}", json_path.display())))?;
    let name = format!("{stem}.raw");
    let full = json_path.with_file_name(&name);
    Ok((name, full))
}

fn write_f32_raw(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f32_raw(path: &Path, expect: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expect * 4 {
        return Err(Error::config(format!(
            "{}: expected {} samples, found {} bytes",
            path.display(),
            expect,
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(expect);
    for ch in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]) as f64;
        if !v.is_finite() {
            return Err(Error::config(format!("{}: non-finite sample", path.display())));
        }
        out.push(v);
    }
    Ok(out)
}

/// Write `name.json` + `name.raw` next to each other.
pub fn write_sinogram(json_path: &Path, s: &Sinogram) -> Result<()> {
    let (name, raw_path) = raw_name(json_path)?;
    let header = SinogramHeader {
        n_phi: s.grid.n_phi,
        n_p: s.grid.n_p,
        p_max: s.grid.p_max,
        data: name,
    };
    fs::write(json_path, serde_json::to_string_pretty(&header)?)?;
    write_f32_raw(&raw_path, &s.values)
}

pub fn read_sinogram(json_path: &Path) -> Result<Sinogram> {
    let header: SinogramHeader = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let grid = SinogramGrid::new(header.n_phi, header.n_p, header.p_max)?;
    let raw_path = json_path.with_file_name(&header.data);
    let values = read_f32_raw(&raw_path, grid.n_phi * grid.n_p)?;
    Ok(Sinogram { grid, values })
}

pub fn write_image(json_path: &Path, img: &Image) -> Result<()> {
    let (name, raw_path) = raw_name(json_path)?;
    let header = ImageHeader { n: img.grid.n, extent: img.grid.extent, data: name };
    fs::write(json_path, serde_json::to_string_pretty(&header)?)?;
    write_f32_raw(&raw_path, &img.values)
}

pub fn read_image(json_path: &Path) -> Result<Image> {
    let header: ImageHeader = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let grid = ImageGrid::new(header.n, header.extent)?;
    let values = read_f32_raw(&json_path.with_file_name(&header.data), grid.n * grid.n)?;
    Ok(Image { grid, values })
}

/// Render a value grid as 16-bit binary PGM. Values map affinely:
/// `gray = round((v - vmin) / (vmax - vmin) * 65535)`, with `vmin`/`vmax`
/// recorded in a comment. Rows are written top-to-bottom (positive y up).
pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut out = Vec::with_capacity(values.len() * 2 + 128);
    write!(
        out,
        "P5\n# tomolab gray mapping: vmin={vmin:.9e} vmax={vmax:.9e}\n{width} {height}\n65535\n"
    )?;
    for row in (0..height).rev() {
        for col in 0..width {
            let v = values[row * width + col];
            let g = ((v - vmin) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&g.to_be_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_image_pgm(path: &Path, img: &Image) -> Result<()> {
    write_pgm(path, &img.values, img.grid.n, img.grid.n)
}

pub fn write_sinogram_pgm(path: &Path, s: &Sinogram) -> Result<()> {
    // one row per view; p runs left to right
    write_pgm(path, &s.values, s.grid.n_p, s.grid.n_phi)
}

/// Write a CSV of points with a header line.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Phantom;

    #[test]
    fn sinogram_roundtrip_through_f32() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SinogramGrid::standard(16, 33).unwrap();
        let s = Phantom::skullish().simulate(&grid);
        let path = dir.path().join("sino.json");
        write_sinogram(&path, &s).unwrap();
        let back = read_sinogram(&path).unwrap();
        assert_eq!(back.grid, s.grid);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn image_roundtrip_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let img = Phantom::skullish().rasterize(&ImageGrid::new(32, 1.0).unwrap(), 1);
        let path = dir.path().join("img.json");
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.grid, img.grid);

        let pgm = dir.path().join("img.pgm");
        write_image_pgm(&pgm, &img).unwrap();
        let bytes = fs::read(&pgm).unwrap();
        assert!(bytes.starts_with(b"P5\n"));
        // header + 2 bytes per pixel
        assert!(bytes.len() > 32 * 32 * 2);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SinogramGrid::standard(4, 8).unwrap();
        let s = Sinogram::zeros(grid);
        let path = dir.path().join("sino.json");
        write_sinogram(&path, &s).unwrap();
        fs::write(dir.path().join("sino.raw"), [0u8; 7]).unwrap();
        assert!(read_sinogram(&path).is_err());
    }
}
