//! Domain types shared by every stage of the pipeline.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};

/// Which model (or stage) produced a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceTag {
    Dino,
    Sd,
    Fused,
    Other,
}

impl SourceTag {
    pub fn code(self) -> u8 {
        match self {
            SourceTag::Dino => 0,
            SourceTag::Sd => 1,
            SourceTag::Fused => 2,
            SourceTag::Other => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SourceTag::Dino),
            1 => Some(SourceTag::Sd),
            2 => Some(SourceTag::Fused),
            3 => Some(SourceTag::Other),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceTag::Dino => "dino",
            SourceTag::Sd => "sd",
            SourceTag::Fused => "fused",
            SourceTag::Other => "other",
        }
    }
}

/// Pixel size of the image a feature grid was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageGeometry {
    pub height: u32,
    pub width: u32,
}

impl ImageGeometry {
    pub fn new(height: u32, width: u32) -> Self {
        Self { height, width }
    }

    /// A feature grid may never be finer than the pixels it describes.
    pub fn check_grid(&self, grid_h: usize, grid_w: usize) -> Result<()> {
        if (self.height as usize) < grid_h || (self.width as usize) < grid_w {
            bail!(
                Geometry,
                "image {}x{} is smaller than feature grid {}x{}",
                self.height,
                self.width,
                grid_h,
                grid_w
            );
        }
        Ok(())
    }
}

/// Dense `height × width × channels` feature tensor, row-major `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    source: SourceTag,
    geometry: ImageGeometry,
}

impl FeatureMap {
    /// Builds a map after checking every shape and finiteness invariant.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        source: SourceTag,
        geometry: ImageGeometry,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            bail!(
                Geometry,
                "feature map dims must be >= 1, got {height}x{width}x{channels}"
            );
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Geometry("feature map size overflows".into()))?;
        if data.len() != expected {
            bail!(
                Geometry,
                "feature data has {} values, expected {height}x{width}x{channels} = {expected}",
                data.len()
            );
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data { index });
        }
        geometry.check_grid(height, width)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
            source,
            geometry,
        })
    }

    /// Map filled with a single value.
    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
        source: SourceTag,
        geometry: ImageGeometry,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
            source,
            geometry,
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn with_source(mut self, source: SourceTag) -> Self {
        self.source = source;
        self
    }

    /// Channel vector at grid cell `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel vector at flat row-major cell index.
    pub fn cell(&self, index: usize) -> &[f32] {
        let start = index * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Iterates cell vectors in row-major order.
    pub fn cell_vectors(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels)
    }
}

/// Binary mask, `0` background and `1` foreground, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            bail!(
                Geometry,
                "mask data has {} values, expected {height}x{width}",
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            bail!(Format, "mask value {} at index {i} is not 0 or 1", data[i]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    /// Builds a mask by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c) as u8);
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn matches_geometry(&self, geometry: ImageGeometry) -> bool {
        self.height == geometry.height as usize && self.width == geometry.width as usize
    }
}

/// One point prompt in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrompt {
    /// Pixel column.
    pub x: u32,
    /// Pixel row.
    pub y: u32,
    pub score: f64,
}

/// Positive and negative point prompts handed to a promptable segmenter.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPromptSet {
    pub k: usize,
    pub c: usize,
    pub positives: Vec<PointPrompt>,
    pub negatives: Vec<PointPrompt>,
}

impl PointPromptSet {
    /// Checks parameter ranges and that both polarities carry exactly `c` points.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.c == 0 {
            bail!(Param, "k and c must be >= 1, got k={} c={}", self.k, self.c);
        }
        if self.c > self.k {
            bail!(Param, "c={} exceeds k={}", self.c, self.k);
        }
        if self.positives.len() != self.c {
            bail!(
                Format,
                "positives length {} ≠ c={}",
                self.positives.len(),
                self.c
            );
        }
        if self.negatives.len() != self.c {
            bail!(
                Format,
                "negatives length {} ≠ c={}",
                self.negatives.len(),
                self.c
            );
        }
        Ok(())
    }

    /// Every prompt must fall inside the image.
    pub fn check_bounds(&self, geometry: ImageGeometry) -> Result<()> {
        for p in self.positives.iter().chain(&self.negatives) {
            if p.x >= geometry.width || p.y >= geometry.height {
                bail!(
                    Geometry,
                    "prompt ({}, {}) outside image {}x{}",
                    p.x,
                    p.y,
                    geometry.width,
                    geometry.height
                );
            }
        }
        Ok(())
    }
}
