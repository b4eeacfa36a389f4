//! Object masks at pixel and patch granularity.

use std::path::Path;

use super::decode::{decode_png, decode_pnm, is_png, is_pnm, read_file};
use super::{GridCoord, ImageError, GRID_SIDE, INPUT_SIZE, NUM_PATCHES, PATCH_SIZE};

/// Per-pixel object mask, row-major; `true` marks the object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "{} mask bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }
}

/// Object flag per patch, indexed like [`super::PatchGrid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMask {
    bits: Vec<bool>,
}

impl PatchMask {
    pub fn new(bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != NUM_PATCHES {
            return Err(ImageError::Invalid(format!(
                "patch mask has {} entries, expected {NUM_PATCHES}",
                bits.len()
            )));
        }
        Ok(Self { bits })
    }

    /// Builds a mask of arbitrary length. Only for graphs smaller than the
    /// full patch grid (toy fixtures and oracles).
    pub fn from_bits_unchecked(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn is_object(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count_object(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Swaps object and background.
    pub fn inverted(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// Loads a mask from a single-channel PNG, a P5 graymap (or a P6 pixmap
/// whose channels agree), or a plaintext grid of `0`/`1` tokens. Any
/// nonzero pixel is object.
pub fn load_mask(path: impl AsRef<Path>) -> Result<PixelMask, ImageError> {
    load_mask_bytes(&read_file(path.as_ref())?)
}

pub fn load_mask_bytes(bytes: &[u8]) -> Result<PixelMask, ImageError> {
    let raster = if is_png(bytes) {
        decode_png(bytes)?
    } else if is_pnm(bytes) {
        decode_pnm(bytes)?
    } else {
        return parse_text_mask(bytes);
    };
    let gray: Vec<u8> = match raster.channels {
        1 => raster.data,
        2 => raster.data.chunks_exact(2).map(|p| p[0]).collect(),
        3 | 4 => {
            let n = raster.channels;
            let mut out = Vec::with_capacity(raster.width * raster.height);
            for p in raster.data.chunks_exact(n) {
                if p[0] != p[1] || p[1] != p[2] {
                    return Err(ImageError::AmbiguousMask("color mask with differing channels".into()));
                }
                out.push(p[0]);
            }
            out
        }
        n => return Err(ImageError::Unsupported(format!("{n}-channel mask"))),
    };
    PixelMask::new(raster.width, raster.height, gray.into_iter().map(|v| v != 0).collect())
}

fn parse_text_mask(bytes: &[u8]) -> Result<PixelMask, ImageError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| ImageError::Unsupported("mask is neither an image nor UTF-8 text".into()))?;
    let bits = text
        .split_whitespace()
        .map(|tok| match tok {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(ImageError::AmbiguousMask(format!("token {other:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let side = match bits.len() {
        n if n == GRID_SIDE * GRID_SIDE => GRID_SIDE,
        n if n == INPUT_SIZE * INPUT_SIZE => INPUT_SIZE,
        n => {
            return Err(ImageError::AmbiguousMask(format!(
                "{n} tokens; expected 196 (14x14) or 50176 (224x224)"
            )))
        }
    };
    PixelMask::new(side, side, bits)
}

/// Reduces a 224×224 pixel mask to patches: a patch is object when the
/// fraction of object pixels in its 16×16 footprint is at least
/// `threshold`. A 14×14 mask is taken as already patch-level.
pub fn downsample_mask(mask: &PixelMask, threshold: f64) -> Result<PatchMask, ImageError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ImageError::Invalid(format!(
            "mask threshold {threshold} outside [0, 1]"
        )));
    }
    match (mask.width, mask.height) {
        (GRID_SIDE, GRID_SIDE) => PatchMask::new(mask.bits.clone()),
        (INPUT_SIZE, INPUT_SIZE) => {
            let area = (PATCH_SIZE * PATCH_SIZE) as f64;
            let bits = (0..NUM_PATCHES)
                .map(|i| {
                    let GridCoord { row, col } = GridCoord::of_index(i);
                    let mut count = 0usize;
                    for y in row * PATCH_SIZE..(row + 1) * PATCH_SIZE {
                        for x in col * PATCH_SIZE..(col + 1) * PATCH_SIZE {
                            count += mask.get(x, y) as usize;
                        }
                    }
                    count as f64 / area >= threshold
                })
                .collect();
            PatchMask::new(bits)
        }
        (w, h) => Err(ImageError::MaskDimensions { w, h }),
    }
}
