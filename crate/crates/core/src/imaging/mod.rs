//! Images, the 14×14 patch grid, and object masks.

mod decode;
mod mask;

pub use decode::{encode_png, load_image, load_image_bytes, save_png};
pub use mask::{downsample_mask, load_mask, load_mask_bytes, PatchMask, PixelMask};

use thiserror::Error;

use crate::scalar::Scalar;

/// Side length of the resized model input.
pub const INPUT_SIZE: usize = 224;
/// Side length of one square patch in pixels.
pub const PATCH_SIZE: usize = 16;
/// Patches per grid row/column.
pub const GRID_SIDE: usize = INPUT_SIZE / PATCH_SIZE;
/// Number of patches (graph nodes).
pub const NUM_PATCHES: usize = GRID_SIDE * GRID_SIDE;
/// Samples in one flattened RGB patch.
pub const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE * 3;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("corrupt image stream: {0}")]
    Corrupt(String),
    #[error("ambiguous mask: {0}")]
    AmbiguousMask(String),
    #[error("expected {expected_w}x{expected_h} image, got {w}x{h}")]
    Dimensions {
        expected_w: usize,
        expected_h: usize,
        w: usize,
        h: usize,
    },
    #[error("mask of size {w}x{h} is neither 224x224 nor 14x14")]
    MaskDimensions { w: usize, h: usize },
    #[error("patch index {0} out of range (0..196)")]
    PatchIndex(usize),
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("failed to write {path}: {reason}")]
    Write { path: String, reason: String },
}

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!("zero-sized image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(ImageError::Invalid(format!(
                "{} samples for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

/// Bilinear resize with half-pixel-center sampling. Source coordinates are
/// clamped to the image, so edges replicate. Results are rounded to the
/// nearest integer, which keeps every channel within the input's range.
pub fn resize_bilinear(img: &ImageRgb, out_w: usize, out_h: usize) -> Result<ImageRgb, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::Invalid(format!(
            "resize target {out_w}x{out_h} must be at least 1x1"
        )));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / out_w as f64;
    let sy = img.height as f64 / out_h as f64;
    let axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, src - lo as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, sx, img.width)).collect();
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, img.height);
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb::new(out_w, out_h, data)
}

/// One 16×16 RGB patch, row-major with interleaved channels.
pub type Patch = [u8; PATCH_LEN];

/// The resized image cut into 196 non-overlapping patches.
///
/// Patch `i` sits at grid row `i / 14`, column `i % 14`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patches: Vec<Patch>,
}

impl PatchGrid {
    pub fn from_patches(patches: Vec<Patch>) -> Result<Self, ImageError> {
        if patches.len() != NUM_PATCHES {
            return Err(ImageError::Invalid(format!(
                "{} patches, expected {NUM_PATCHES}",
                patches.len()
            )));
        }
        Ok(Self { patches })
    }

    #[inline]
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    #[inline]
    pub fn patch(&self, i: usize) -> &Patch {
        &self.patches[i]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn source_size(&self) -> (usize, usize) {
        (INPUT_SIZE, INPUT_SIZE)
    }

    /// Grid coordinates of every patch in index order.
    pub fn coords(&self) -> Vec<GridCoord> {
        (0..NUM_PATCHES).map(GridCoord::of_index).collect()
    }

    /// Stitches the patches back into a 224×224 image.
    pub fn reassemble(&self) -> ImageRgb {
        let mut data = vec![0u8; INPUT_SIZE * INPUT_SIZE * 3];
        let row_bytes = PATCH_SIZE * 3;
        for (i, patch) in self.patches.iter().enumerate() {
            let GridCoord { row, col } = GridCoord::of_index(i);
            for py in 0..PATCH_SIZE {
                let y = row * PATCH_SIZE + py;
                let dst = (y * INPUT_SIZE + col * PATCH_SIZE) * 3;
                data[dst..dst + row_bytes].copy_from_slice(&patch[py * row_bytes..(py + 1) * row_bytes]);
            }
        }
        ImageRgb {
            width: INPUT_SIZE,
            height: INPUT_SIZE,
            data,
        }
    }
}

/// Position of a patch on the 14×14 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridCoord {
    pub row: usize,
    pub col: usize,
}

impl GridCoord {
    #[inline]
    pub fn of_index(i: usize) -> Self {
        Self {
            row: i / GRID_SIDE,
            col: i % GRID_SIDE,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.row * GRID_SIDE + self.col
    }

    #[inline]
    pub fn manhattan(self, other: GridCoord) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// Splits a 224×224 image into its patch grid.
pub fn partition(img: &ImageRgb) -> Result<PatchGrid, ImageError> {
    if img.width != INPUT_SIZE || img.height != INPUT_SIZE {
        return Err(ImageError::Dimensions {
            expected_w: INPUT_SIZE,
            expected_h: INPUT_SIZE,
            w: img.width,
            h: img.height,
        });
    }
    let row_bytes = PATCH_SIZE * 3;
    let patches = (0..NUM_PATCHES)
        .map(|i| {
            let GridCoord { row, col } = GridCoord::of_index(i);
            let mut patch = [0u8; PATCH_LEN];
            for py in 0..PATCH_SIZE {
                let y = row * PATCH_SIZE + py;
                let src = (y * INPUT_SIZE + col * PATCH_SIZE) * 3;
                patch[py * row_bytes..(py + 1) * row_bytes].copy_from_slice(&img.data[src..src + row_bytes]);
            }
            patch
        })
        .collect();
    Ok(PatchGrid { patches })
}

/// Resizes any image to 224×224 and partitions it.
pub fn to_patch_grid(img: &ImageRgb) -> Result<(ImageRgb, PatchGrid), ImageError> {
    let resized = resize_bilinear(img, INPUT_SIZE, INPUT_SIZE)?;
    let grid = partition(&resized)?;
    Ok((resized, grid))
}

/// Flattens patch `i` to 768 values in [0, 1].
///
/// Layout: pixel rows top to bottom, pixels left to right, then R, G, B,
/// so element `(py·16 + px)·3 + ch`. Each sample is divided by 255.
pub fn flatten_patch<T: Scalar>(grid: &PatchGrid, i: usize) -> Result<Vec<T>, ImageError> {
    if i >= grid.patches.len() {
        return Err(ImageError::PatchIndex(i));
    }
    Ok(flatten(&grid.patches[i]))
}

pub(crate) fn flatten<T: Scalar>(patch: &Patch) -> Vec<T> {
    let scale = T::lit(255.0);
    patch.iter().map(|&v| T::lit(v as f64) / scale).collect()
}
