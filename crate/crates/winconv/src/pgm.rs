//! 16-bit binary PGM (P5) image output with a text sidecar carrying the
//! scale and grid metadata, plus position-set CSV files.
//!
//! Pixel values are `round(65535 * pixel / max)`; the sidecar records
//! `max`, the resolution, the window width and sigma so reports can map
//! gray levels back to intensities.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use winconv_core::{GridSignal, PositionSet, RasterConfig, Shape};

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad image file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid image: {0}")]
    Image(#[from] winconv_core::Error),
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write a single-channel 2D image as P5 plus `<path>.meta`. Negative
/// pixels clamp to zero in the gray mapping.
pub fn write_pgm16(img: &GridSignal, rc: &RasterConfig, path: &Path) -> Result<(), PgmError> {
    let (rows, cols) = match img.shape() {
        Shape::Two { rows, cols } => (rows, cols),
        Shape::One { .. } => {
            return Err(PgmError::Format {
                path: path.to_path_buf(),
                message: "only 2D images can be written as PGM".into(),
            })
        }
    };
    if img.channels() != 1 {
        return Err(PgmError::Format {
            path: path.to_path_buf(),
            message: "only single-channel images can be written as PGM".into(),
        });
    }
    let max = img.values().iter().cloned().fold(0.0f32, f32::max).max(0.0);
    let mut bytes = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for v in img.values() {
        let g = if max > 0.0 && *v > 0.0 {
            (f64::from(*v) / f64::from(max) * 65535.0).round() as u16
        } else {
            0
        };
        bytes.extend_from_slice(&g.to_be_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    let meta = format!(
        "max {}\nresolution {}\nwindow_width {}\nsigma {}\n",
        max,
        img.resolution(),
        rc.window_width,
        rc.sigma_meters()
    );
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

/// Read a P5 file written by [`write_pgm16`] back into a `GridSignal`,
/// using the sidecar to undo the gray-level scaling.
pub fn read_pgm16(path: &Path) -> Result<(GridSignal, RasterConfig), PgmError> {
    let bytes = fs::read(path)?;
    let bad = |message: &str| PgmError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };
    // Header: three whitespace-separated tokens then a single byte of
    // whitespace before the raster.
    let header_str = std::str::from_utf8(&bytes[..bytes.len().min(64)]).unwrap_or("");
    let mut tok = header_str.split_ascii_whitespace();
    if tok.next() != Some("P5") {
        return Err(bad("missing P5 magic"));
    }
    let cols: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad width"))?;
    let rows: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad height"))?;
    let maxval: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad maxval"))?;
    if maxval != 65535 {
        return Err(bad("expected a 16-bit image"));
    }
    // Locate the start of the raster: after the 4th token plus one byte.
    let mut seen = 0;
    let mut pos = 0;
    let mut in_tok = false;
    for (i, b) in bytes.iter().enumerate() {
        if b.is_ascii_whitespace() {
            if in_tok {
                seen += 1;
                in_tok = false;
                if seen == 4 {
                    pos = i + 1;
                    break;
                }
            }
        } else {
            in_tok = true;
        }
    }
    let raster = &bytes[pos..];
    if raster.len() != rows * cols * 2 {
        return Err(bad("raster size does not match the header"));
    }

    let meta = fs::read_to_string(sidecar_path(path))?;
    let mut max = None;
    let mut resolution = None;
    let mut window_width = None;
    let mut sigma = None;
    for line in meta.lines() {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("max"), Some(v)) => max = v.parse::<f64>().ok(),
            (Some("resolution"), Some(v)) => resolution = v.parse::<f64>().ok(),
            (Some("window_width"), Some(v)) => window_width = v.parse::<f64>().ok(),
            (Some("sigma"), Some(v)) => sigma = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (max, resolution, window_width, sigma) = match (max, resolution, window_width, sigma) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(bad("incomplete sidecar")),
    };
    let values: Vec<f32> = raster
        .chunks_exact(2)
        .map(|c| {
            let g = u16::from_be_bytes([c[0], c[1]]);
            (f64::from(g) / 65535.0 * max) as f32
        })
        .collect();
    let origin = resolution * 0.5 - window_width / 2.0;
    let img = GridSignal::new(
        values,
        Shape::Two { rows, cols },
        1,
        resolution,
        (origin, origin),
    )?;
    let rc = RasterConfig { window_width, resolution, sigma, sigma_in_pixels: false };
    Ok((img, rc))
}

/// Position-set CSV with an `x_m,y_m` header; values use the shortest
/// round-trippable decimal form.
pub fn write_positions_csv(ps: &PositionSet, path: &Path) -> Result<(), PgmError> {
    let mut out = String::from("x_m,y_m\n");
    for &(x, y) in ps.points() {
        out.push_str(&format!("{x},{y}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_positions_csv(path: &Path) -> Result<PositionSet, PgmError> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.trim() == "x_m,y_m" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |t: Option<&str>| t.and_then(|v| v.trim().parse::<f64>().ok());
        match (parse(parts.next()), parse(parts.next())) {
            (Some(x), Some(y)) => points.push((x, y)),
            _ => {
                return Err(PgmError::Format {
                    path: path.to_path_buf(),
                    message: format!("bad position at line {}", lineno + 1),
                })
            }
        }
    }
    Ok(PositionSet::new(points)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_preserves_grid_and_scale() {
        let rc = RasterConfig::new(80.0).unwrap();
        let ps = PositionSet::new(vec![(0.0, 0.0), (-20.0, 15.0)]).unwrap();
        let img = winconv_core::rasterize(&ps, &rc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        write_pgm16(&img, &rc, &path).unwrap();
        let (back, rc2) = read_pgm16(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert_eq!(back.resolution(), img.resolution());
        assert_eq!(rc2.window_width, rc.window_width);
        let max = img.values().iter().cloned().fold(0.0f32, f32::max);
        for (a, b) in back.values().iter().zip(img.values()) {
            // Quantized to 16 bits of the max.
            assert!((a - b).abs() <= max / 65535.0, "{a} vs {b}");
        }
    }

    #[test]
    fn positions_csv_round_trip() {
        let ps = PositionSet::new(vec![(1.25, -3.5), (0.1, 0.2)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        write_positions_csv(&ps, &path).unwrap();
        let back = read_positions_csv(&path).unwrap();
        assert_eq!(back, ps);
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n0 0 0 0\n").unwrap();
        assert!(matches!(read_pgm16(&path), Err(PgmError::Format { .. })));
        let csv = dir.path().join("bad.csv");
        std::fs::write(&csv, "x_m,y_m\n1.0,not-a-number\n").unwrap();
        assert!(read_positions_csv(&csv).is_err());
    }
}
