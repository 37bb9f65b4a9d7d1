//! Plain-text and PGM map artifacts.
//!
//! Photoelectron and correlation maps are written twice: a lossless
//! whitespace-separated text matrix (full f64 precision, reloadable), and a
//! 16-bit PGM preview for quick visual inspection. The PGM is linearly
//! rescaled to the 0–65535 range; the applied (min, max) window is recorded
//! in a `.scale` sidecar so the preview remains quantitatively
//! interpretable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SimError};

/// Write a matrix as text: one line per x index, y values separated by
/// single spaces, full round-trip precision. NaN cells (e.g. undefined
/// correlation entries) are written as `NaN`.
pub fn write_matrix_text(path: &Path, data: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let (w, h) = data.dim();
    for i in 0..w {
        let mut line = String::new();
        for j in 0..h {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{}", data[[i, j]]));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_text`]. All rows must have the
/// same length and every token must parse as f64.
pub fn read_matrix_text(path: &Path) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| {
            SimError::Config(format!(
                "matrix file {}: line {}: {e}",
                path.display(),
                line_no + 1
            ))
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(SimError::Config(format!(
                    "matrix file {}: line {} has {} values, expected {}",
                    path.display(),
                    line_no + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(SimError::Config(format!(
            "matrix file {} is empty",
            path.display()
        )));
    }
    let (w, h) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_fn((w, h), |(i, j)| rows[i][j]))
}

/// Write a 16-bit binary PGM preview (magic `P5`, maxval 65535, big-endian
/// samples). The raster is width = nx columns by height = ny rows with y
/// increasing upward (raster row r holds y index ny−1−r). Values are mapped
/// linearly from [min, max] onto [0, 65535]; NaN cells render as 0. The
/// window is recorded in `<path>.scale` as two lines, `min` and `max`.
pub fn write_pgm16(path: &Path, data: &Array2<f64>) -> Result<()> {
    let (w, h) = data.dim();
    let finite: Vec<f64> = data.iter().copied().filter(|v| v.is_finite()).collect();
    let (min, max) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (min, max) = if finite.is_empty() { (0.0, 0.0) } else { (min, max) };
    let span = max - min;

    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n65535\n")?;
    let mut raster = Vec::with_capacity(w * h * 2);
    for r in 0..h {
        let j = h - 1 - r;
        for i in 0..w {
            let v = data[[i, j]];
            let level = if !v.is_finite() || span <= 0.0 {
                0u16
            } else {
                ((v - min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            };
            raster.extend_from_slice(&level.to_be_bytes());
        }
    }
    out.write_all(&raster)?;
    out.flush()?;

    let scale_path = path.with_extension(format!(
        "{}.scale",
        path.extension().and_then(|e| e.to_str()).unwrap_or("pgm")
    ));
    let mut scale = BufWriter::new(File::create(scale_path)?);
    write!(scale, "{min}\n{max}\n")?;
    scale.flush()?;
    Ok(())
}
