//! Per-pixel depth (or score) maps and their on-disk raster format.
//!
//! Raster layout: 16-byte header (`b"ODDEPTH1"`, `u32` height, `u32` width,
//! little-endian) followed by `height × width` little-endian `f32` values in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RASTER_MAGIC: &[u8; 8] = b"ODDEPTH1";

/// Pixel location, 0-based row and column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn distance(self, other: Pixel) -> f64 {
        let dy = self.row as f64 - other.row as f64;
        let dx = self.col as f64 - other.col as f64;
        (dy * dy + dx * dx).sqrt()
    }
}

/// H×W grid of depth values or network scores.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn from_f64(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("depth map must be non-empty".into()));
        }
        if data.len() != height * width {
            return Err(Error::InvalidShape {
                op: "depth map",
                shape: vec![height, width],
                reason: format!("{} values supplied", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "depth map" });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::from_f64(height, width, data)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_f64(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row < self.height && p.col < self.width
    }

    /// Value at `p`. Panics when out of bounds; use [`DepthMap::get`] to check.
    pub fn at(&self, p: Pixel) -> f64 {
        assert!(self.contains(p), "pixel {p:?} outside {}x{}", self.height, self.width);
        self.data[p.row * self.width + p.col]
    }

    pub fn get(&self, p: Pixel) -> Option<f64> {
        self.contains(p).then(|| self.data[p.row * self.width + p.col])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_f64(self.height, self.width, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation (divides by N).
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_raster<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(RASTER_MAGIC)?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        for v in &self.data {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_raster<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[..8] != RASTER_MAGIC {
            return Err(Error::Format("not a depth raster (bad magic)".into()));
        }
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; height * width * 4];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::from_f64(height, width, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_raster(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_raster(BufReader::new(File::open(path)?))
    }

    /// Rounds every value through `f32`, matching what a raster round trip stores.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| *v as f32 as f64).collect(),
        }
    }
}
