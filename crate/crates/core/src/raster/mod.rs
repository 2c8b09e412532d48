//! Pixel grids, label maps and the small geometry types shared by every stage
//! of the pipeline.

mod io;
pub mod rle;
mod se;

pub use io::{decode_raster, encode_raster, load_raster, peek_dimensions, save_raster, RasterError, RasterFormat};
pub use se::{Shape, StructuringElement};

use serde::{Deserialize, Serialize};

/// Sample bit depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Depth {
    Eight,
    Sixteen,
}

impl Depth {
    pub fn max_value(self) -> u16 {
        match self {
            Depth::Eight => u8::MAX as u16,
            Depth::Sixteen => u16::MAX,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Depth::Eight => 8,
            Depth::Sixteen => 16,
        }
    }
}

/// Row-major image with 1 or 3 interleaved channels of 8- or 16-bit samples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    depth: Depth,
    data: Vec<u16>,
}

impl Raster {
    /// Builds a raster after checking the length and depth invariants.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        depth: Depth,
        data: Vec<u16>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::Unsupported(format!("{channels} channels")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or(RasterError::TooLarge)?;
        if data.len() != expected {
            return Err(RasterError::Corrupt(format!(
                "expected {expected} samples, got {}",
                data.len()
            )));
        }
        let max = depth.max_value();
        if data.iter().any(|&v| v > max) {
            return Err(RasterError::Corrupt(format!(
                "sample exceeds {}-bit range",
                depth.bits()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            depth,
            data,
        })
    }

    /// Single-channel raster filled with `value`.
    pub fn filled(width: usize, height: usize, depth: Depth, value: u16) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        assert!(value <= depth.max_value());
        Self {
            width,
            height,
            channels: 1,
            depth,
            data: vec![value; width * height],
        }
    }

    /// Single-channel raster from a per-pixel closure.
    pub fn from_fn(width: usize, height: usize, depth: Depth, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        let max = depth.max_value();
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).min(max));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            depth,
            data,
        }
    }

    /// Single-channel raster sharing this raster's geometry and depth.
    pub(crate) fn with_plane(&self, data: Vec<u16>) -> Self {
        debug_assert_eq!(data.len(), self.width * self.height);
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            depth: self.depth,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> Depth {
        self.depth
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_size<T: Dimensions + ?Sized>(&self, other: &T) -> bool {
        self.width == other.width() && self.height == other.height()
    }

    /// Sample at (x, y, channel).
    pub fn get(&self, x: usize, y: usize, c: usize) -> u16 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Luma conversion with 0.299/0.587/0.114 weights, rounded half-up.
    /// Single-channel rasters are returned unchanged.
    pub fn to_grayscale(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        // Integer weights (per mille) keep the rounding exact.
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let acc = 299 * px[0] as u64 + 587 * px[1] as u64 + 114 * px[2] as u64;
                ((acc + 500) / 1000) as u16
            })
            .collect();
        self.with_plane(data)
    }

    /// Per-pixel RGB colors in [0, 255] for the color model. Grayscale is
    /// replicated across the three channels; 16-bit samples are min-max
    /// rescaled over the whole image.
    pub fn colors(&self) -> Vec<[f64; 3]> {
        let (scale, offset) = match self.depth {
            Depth::Eight => (1.0, 0.0),
            Depth::Sixteen => {
                let lo = self.data.iter().copied().min().unwrap_or(0) as f64;
                let hi = self.data.iter().copied().max().unwrap_or(0) as f64;
                if hi > lo {
                    (255.0 / (hi - lo), lo)
                } else {
                    (0.0, lo)
                }
            }
        };
        let map = |v: u16| (v as f64 - offset) * scale;
        match self.channels {
            1 => self
                .data
                .iter()
                .map(|&v| {
                    let g = map(v);
                    [g, g, g]
                })
                .collect(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|px| [map(px[0]), map(px[1]), map(px[2])])
                .collect(),
        }
    }

    /// Pointwise complement against the depth's maximum value.
    pub fn complement(&self) -> Raster {
        let max = self.depth.max_value();
        Raster {
            data: self.data.iter().map(|&v| max - v).collect(),
            ..self.clone()
        }
    }

    /// Three-channel raster with the given per-pixel RGB samples.
    pub fn from_rgb(width: usize, height: usize, depth: Depth, mut f: impl FnMut(usize, usize) -> [u16; 3]) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        let max = depth.max_value();
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|&v| v.min(max)));
            }
        }
        Self {
            width,
            height,
            channels: 3,
            depth,
            data,
        }
    }
}

/// Anything with a pixel grid size.
pub trait Dimensions {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
}

impl Dimensions for Raster {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask length mismatch");
        Self { width, height, bits }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Nonzero samples of a single-channel raster are set.
    pub fn from_raster(raster: &Raster) -> Self {
        let gray = raster.to_grayscale();
        Self {
            width: gray.width,
            height: gray.height,
            bits: gray.data.iter().map(|&v| v != 0).collect(),
        }
    }

    /// 8-bit raster with set pixels at 255.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            depth: Depth::Eight,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Restricts the mask to the inside of `bbox`.
    pub fn within(&self, bbox: &BoundingBox) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y) && bbox.contains(x, y))
    }
}

impl Dimensions for BinaryMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Four-state GrabCut label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    HardBackground = 0,
    HardForeground = 1,
    ProbBackground = 2,
    ProbForeground = 3,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::HardBackground),
            1 => Some(Label::HardForeground),
            2 => Some(Label::ProbBackground),
            3 => Some(Label::ProbForeground),
            _ => None,
        }
    }

    pub fn is_foreground(self) -> bool {
        matches!(self, Label::HardForeground | Label::ProbForeground)
    }

    pub fn is_hard(self) -> bool {
        matches!(self, Label::HardForeground | Label::HardBackground)
    }
}

/// Per-pixel four-state labeling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl Trimap {
    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<Label>) -> Self {
        assert_eq!(labels.len(), width * height, "trimap length mismatch");
        Self { width, height, labels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    /// Foreground projection: hard or probable foreground.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|l| l.is_foreground()).collect(),
        }
    }

    /// Trimap as an 8-bit single-channel raster with values 0..=3.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            depth: Depth::Eight,
            data: self.labels.iter().map(|&l| l as u16).collect(),
        }
    }

    /// Inverse of [`Trimap::to_raster`]; any sample outside 0..=3 is rejected.
    pub fn from_raster(raster: &Raster) -> Result<Self, RasterError> {
        if raster.channels != 1 {
            return Err(RasterError::Unsupported("trimap must be single-channel".into()));
        }
        let labels = raster
            .data
            .iter()
            .map(|&v| {
                u8::try_from(v)
                    .ok()
                    .and_then(Label::from_u8)
                    .ok_or_else(|| RasterError::Corrupt(format!("invalid trimap label {v}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            width: raster.width,
            height: raster.height,
            labels,
        })
    }
}

impl Dimensions for Trimap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    /// Validates ordering and bounds against an image of the given size.
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize, width: usize, height: usize) -> Result<Self, RasterError> {
        if x0 > x1 || y0 > y1 || x1 >= width || y1 >= height {
            return Err(RasterError::InvalidBoundingBox {
                bbox: [x0, y0, x1, y1],
                width,
                height,
            });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width - 1,
            y1: height - 1,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && self.x1 < width && self.y1 < height
    }
}
