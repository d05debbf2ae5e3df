//! Height images: the universal value type of the crate.
//!
//! A [`HeightField`] is a row-major grid of heights in µm with a square
//! physical pixel spacing in µm. Heights are relative values; the file
//! format (`.hfld`) stores them as little-endian `f32` behind an ASCII
//! header `HFLD v1 <width> <height> <spacing_um>\n`.

use crate::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Rectangular grid of surface heights (µm) with physical pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    width: usize,
    height: usize,
    spacing_um: f64,
    data: Vec<f64>,
}

/// Mean, biased variance and range of a height field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Biased (divide-by-N) sample variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl HeightField {
    /// Build a field from row-major data. Validates the invariants:
    /// the data length, a positive spacing and finite heights.
    pub fn new(width: usize, height: usize, spacing_um: f64, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("zero-sized field".into()));
        }
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if !(spacing_um > 0.0) || !spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing_um}"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            spacing_um,
            data,
        })
    }

    /// Constant-valued field.
    pub fn constant(width: usize, height: usize, spacing_um: f64, value: f64) -> Result<Self> {
        Self::new(width, height, spacing_um, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Replace the spacing, keeping the data. Spacing must stay positive.
    pub fn with_spacing(mut self, spacing_um: f64) -> Result<Self> {
        if !(spacing_um > 0.0) || !spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing_um}"
            )));
        }
        self.spacing_um = spacing_um;
        Ok(self)
    }

    /// Mean, biased variance, min and max in one pass.
    pub fn stats(&self) -> SummaryStats {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let variance = self
            .data
            .iter()
            .map(|v| {
                let d = v - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let min = self.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        SummaryStats {
            mean,
            variance,
            min,
            max,
        }
    }

    /// Crop the window `[x0, x0+w) x [y0, y0+h)`. Spacing is preserved.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<HeightField> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::OutOfBounds(format!(
                "crop ({x0},{y0})+{w}x{h} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        HeightField::new(w, h, self.spacing_um, data)
    }

    /// Nearest-neighbor down-sampling by a real factor >= 1.
    ///
    /// Output size is `ceil(size / factor)` per axis, output spacing is
    /// `spacing * factor`. Factors below 1 (super-resolution) are
    /// rejected.
    pub fn downsample_nn(&self, factor: f64) -> Result<HeightField> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "down-sampling factor must be >= 1, got {factor}"
            )));
        }
        let out_w = (self.width as f64 / factor).ceil() as usize;
        let out_h = (self.height as f64 / factor).ceil() as usize;
        let mut data = Vec::with_capacity(out_w * out_h);
        for j in 0..out_h {
            let sy = ((j as f64 * factor).round() as usize).min(self.height - 1);
            for i in 0..out_w {
                let sx = ((i as f64 * factor).round() as usize).min(self.width - 1);
                data.push(self.data[sy * self.width + sx]);
            }
        }
        HeightField::new(out_w, out_h, self.spacing_um * factor, data)
    }

    /// Write as `.hfld`: ASCII header line, then little-endian `f32`s.
    pub fn write_hfld<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(
            f,
            "HFLD v1 {} {} {}\n",
            self.width, self.height, self.spacing_um
        )?;
        for &v in &self.data {
            f.write_all(&(v as f32).to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Read a `.hfld` file. Fails with distinct errors on a wrong
    /// magic, a malformed header, a truncated payload, or non-finite
    /// payload values.
    pub fn read_hfld<P: AsRef<Path>>(path: P) -> Result<HeightField> {
        let mut f = BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        f.read_line(&mut header)?;
        let header = header.trim_end_matches('\n');
        if !header.starts_with("HFLD ") {
            return Err(Error::BadMagic);
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[1] != "v1" {
            return Err(Error::BadHeader(format!("unexpected header '{header}'")));
        }
        let width: usize = parts[2]
            .parse()
            .map_err(|_| Error::BadHeader(format!("bad width '{}'", parts[2])))?;
        let height: usize = parts[3]
            .parse()
            .map_err(|_| Error::BadHeader(format!("bad height '{}'", parts[3])))?;
        let spacing: f64 = parts[4]
            .parse()
            .map_err(|_| Error::BadHeader(format!("bad spacing '{}'", parts[4])))?;
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::BadHeader("size overflow".into()))?;
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;
        if payload.len() < expected * 4 {
            return Err(Error::Truncated {
                expected,
                got: payload.len() / 4,
            });
        }
        let data: Vec<f64> = payload[..expected * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        HeightField::new(width, height, spacing, data)
    }

    /// Import a whitespace-separated ASCII matrix (one row per line).
    pub fn read_ascii_matrix<P: AsRef<Path>>(path: P, spacing_um: f64) -> Result<HeightField> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_ascii_matrix(&text, spacing_um)
    }

    pub fn parse_ascii_matrix(text: &str, spacing_um: f64) -> Result<HeightField> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse).collect();
            rows.push(row.map_err(|e| Error::BadHeader(format!("bad matrix entry: {e}")))?);
        }
        let height = rows.len();
        if height == 0 {
            return Err(Error::BadHeader("empty matrix".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::SizeMismatch("ragged matrix rows".into()));
        }
        HeightField::new(width, height, spacing_um, rows.concat())
    }

    /// Apply `f` to every height value.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<HeightField> {
        HeightField::new(
            self.width,
            self.height,
            self.spacing_um,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}
