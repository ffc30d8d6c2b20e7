//! Patch-grid geometry and instance pooling.
//!
//! An encoder produces a [`PatchFeatureMap`]: one embedding per cell of a
//! `grid_h x grid_w` patch grid laid over the source image. Objects arrive in
//! pixel space, either as a [`PixelMask`] from a segmenter or as a
//! [`BoundingBox`] from a proposal detector. Both are reduced to a
//! [`PatchSelection`] with the same coverage rule and then averaged into a
//! unit-norm [`InstanceEmbedding`].
//!
//! Pixel `(y, x)` belongs to patch `(floor(y * grid_h / H), floor(x * grid_w / W))`,
//! so image sizes that are not multiples of the grid are handled without
//! padding or cropping.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of a patch footprint that must be covered for the patch to be selected.
pub const COVERAGE_THRESHOLD: f64 = 0.5;

/// Norm tolerance for vectors flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("empty mask")]
    EmptyMask,
    #[error("empty patch selection")]
    EmptySelection,
    #[error("degenerate embedding: pooled vector has zero norm")]
    DegenerateEmbedding,
    #[error("zero-area bounding box {0}")]
    ZeroAreaBox(BoundingBox),
    #[error("bounding box {bbox} outside image of {width}x{height}")]
    BoxOutOfBounds {
        bbox: BoundingBox,
        width: usize,
        height: usize,
    },
    #[error("patch ({row}, {col}) outside {grid_h}x{grid_w} grid")]
    PatchOutOfGrid {
        row: usize,
        col: usize,
        grid_h: usize,
        grid_w: usize,
    },
    #[error("mask of {mask_h}x{mask_w} is smaller than the {grid_h}x{grid_w} patch grid")]
    MaskSmallerThanGrid {
        mask_h: usize,
        mask_w: usize,
        grid_h: usize,
        grid_w: usize,
    },
    #[error("invalid feature map: {0}")]
    InvalidFeatureMap(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("embedding is not unit-norm (norm {0})")]
    NotNormalized(f64),
}

/// Per-patch embeddings for one image, stored row-major as `[grid_h][grid_w][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatureMap {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    image_h: usize,
    image_w: usize,
    data: Vec<f32>,
}

impl PatchFeatureMap {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        dim: usize,
        image_h: usize,
        image_w: usize,
        data: Vec<f32>,
    ) -> Result<Self, FeatureError> {
        if grid_h == 0 || grid_w == 0 || dim == 0 {
            return Err(FeatureError::InvalidFeatureMap(format!(
                "grid {grid_h}x{grid_w} with dim {dim} has an empty axis"
            )));
        }
        if image_h < grid_h || image_w < grid_w {
            return Err(FeatureError::InvalidFeatureMap(format!(
                "image {image_h}x{image_w} is smaller than grid {grid_h}x{grid_w}"
            )));
        }
        let expected = grid_h * grid_w * dim;
        if data.len() != expected {
            return Err(FeatureError::InvalidFeatureMap(format!(
                "expected {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            image_h,
            image_w,
            data,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image_h(&self) -> usize {
        self.image_h
    }

    pub fn image_w(&self) -> usize {
        self.image_w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Embedding of patch `(row, col)`.
    pub fn patch(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.grid_w + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Multiplies every value by `factor`, e.g. to exercise scale invariance.
    pub fn scaled(&self, factor: f32) -> Result<Self, FeatureError> {
        Self::new(
            self.grid_h,
            self.grid_w,
            self.dim,
            self.image_h,
            self.image_w,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Binary object mask in pixel space, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, FeatureError> {
        if height == 0 || width == 0 {
            return Err(FeatureError::InvalidMask(format!(
                "mask dimensions {height}x{width} have an empty axis"
            )));
        }
        if bits.len() != height * width {
            return Err(FeatureError::InvalidMask(format!(
                "expected {} pixels, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Checks non-zero area and containment in a `width x height` image.
    pub fn validate(&self, width: usize, height: usize) -> Result<(), FeatureError> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(FeatureError::ZeroAreaBox(*self));
        }
        if self.x1 > width || self.y1 > height {
            return Err(FeatureError::BoxOutOfBounds {
                bbox: *self,
                width,
                height,
            });
        }
        Ok(())
    }

    /// Rasterizes the box into a `height x width` mask.
    pub fn to_mask(&self, height: usize, width: usize) -> Result<PixelMask, FeatureError> {
        self.validate(width, height)?;
        Ok(PixelMask::from_fn(height, width, |y, x| self.contains(y, x)))
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Sorted, duplicate-free set of `(row, col)` patch indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatchSelection(Vec<(usize, usize)>);

impl PatchSelection {
    pub fn new(mut patches: Vec<(usize, usize)>) -> Self {
        patches.sort_unstable();
        patches.dedup();
        Self(patches)
    }

    pub fn patches(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.0.binary_search(&(row, col)).is_ok()
    }
}

impl FromIterator<(usize, usize)> for PatchSelection {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// A pooled object embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceEmbedding {
    values: Vec<f32>,
    normalized: bool,
}

impl InstanceEmbedding {
    /// Wraps raw values without normalizing them.
    pub fn new(values: Vec<f32>) -> Result<Self, FeatureError> {
        if values.is_empty() {
            return Err(FeatureError::InvalidFeatureMap("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Wraps values that are already unit-norm, checking the norm.
    pub fn from_unit(values: Vec<f32>) -> Result<Self, FeatureError> {
        let mut e = Self::new(values)?;
        let norm = e.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(FeatureError::NotNormalized(norm));
        }
        e.normalized = true;
        Ok(e)
    }

    /// L2-normalizes `values`; the norm is computed in f64.
    pub fn normalize(values: &[f32]) -> Result<Self, FeatureError> {
        let wide: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        normalize_wide(&wide)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

fn normalize_wide(values: &[f64]) -> Result<InstanceEmbedding, FeatureError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(FeatureError::DegenerateEmbedding);
    }
    Ok(InstanceEmbedding {
        values: values.iter().map(|v| (v / norm) as f32).collect(),
        normalized: true,
    })
}

/// Maps a pixel coordinate onto its patch index along one axis.
#[inline]
fn patch_of(pixel: usize, grid: usize, extent: usize) -> usize {
    pixel * grid / extent
}

/// Selects every patch whose footprint is at least half covered by `mask`.
///
/// If no patch reaches the threshold, the single patch with the highest
/// coverage is returned (ties go to the smallest `(row, col)`), so a
/// non-empty mask never produces an empty selection.
pub fn downsample_mask(
    mask: &PixelMask,
    grid: (usize, usize),
) -> Result<PatchSelection, FeatureError> {
    let (grid_h, grid_w) = grid;
    if grid_h == 0 || grid_w == 0 || mask.height < grid_h || mask.width < grid_w {
        return Err(FeatureError::MaskSmallerThanGrid {
            mask_h: mask.height,
            mask_w: mask.width,
            grid_h,
            grid_w,
        });
    }

    let mut covered = vec![0usize; grid_h * grid_w];
    let mut footprint = vec![0usize; grid_h * grid_w];
    let col_of: Vec<usize> = (0..mask.width)
        .map(|x| patch_of(x, grid_w, mask.width))
        .collect();
    let mut any = false;
    for y in 0..mask.height {
        let row = patch_of(y, grid_h, mask.height);
        let line = &mask.bits[y * mask.width..(y + 1) * mask.width];
        for (x, &bit) in line.iter().enumerate() {
            let slot = row * grid_w + col_of[x];
            footprint[slot] += 1;
            if bit {
                covered[slot] += 1;
                any = true;
            }
        }
    }
    if !any {
        return Err(FeatureError::EmptyMask);
    }

    // covered / footprint >= 0.5, in integers
    let selected: Vec<(usize, usize)> = (0..grid_h * grid_w)
        .filter(|&s| 2 * covered[s] >= footprint[s] && covered[s] > 0)
        .map(|s| (s / grid_w, s % grid_w))
        .collect();
    if !selected.is_empty() {
        return Ok(PatchSelection(selected));
    }

    // Max-coverage fallback. Ratios are compared by cross-multiplication;
    // strict '>' keeps the first (lexicographically smallest) patch on ties.
    let mut best = 0usize;
    for s in 1..grid_h * grid_w {
        if covered[s] * footprint[best] > covered[best] * footprint[s] {
            best = s;
        }
    }
    Ok(PatchSelection(vec![(best / grid_w, best % grid_w)]))
}

/// Averages the selected patch vectors and L2-normalizes the mean.
pub fn pool_over_selection(
    fmap: &PatchFeatureMap,
    sel: &PatchSelection,
) -> Result<InstanceEmbedding, FeatureError> {
    if sel.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    let mut sum = vec![0f64; fmap.dim];
    for &(row, col) in sel.patches() {
        if row >= fmap.grid_h || col >= fmap.grid_w {
            return Err(FeatureError::PatchOutOfGrid {
                row,
                col,
                grid_h: fmap.grid_h,
                grid_w: fmap.grid_w,
            });
        }
        for (acc, &v) in sum.iter_mut().zip(fmap.patch(row, col)) {
            *acc += v as f64;
        }
    }
    let count = sel.len() as f64;
    for acc in &mut sum {
        *acc /= count;
    }
    normalize_wide(&sum)
}

/// Patches covered by a proposal box, using the mask coverage rule.
pub fn bbox_to_selection(
    bbox: &BoundingBox,
    fmap: &PatchFeatureMap,
) -> Result<PatchSelection, FeatureError> {
    let mask = bbox.to_mask(fmap.image_h, fmap.image_w)?;
    downsample_mask(&mask, fmap.grid())
}

/// Pools a mask region of `fmap`. Mask and feature map must describe the same image.
pub fn pool_mask(fmap: &PatchFeatureMap, mask: &PixelMask) -> Result<InstanceEmbedding, FeatureError> {
    let sel = downsample_mask(mask, fmap.grid())?;
    pool_over_selection(fmap, &sel)
}

/// Pools a box region of `fmap`.
pub fn pool_bbox(fmap: &PatchFeatureMap, bbox: &BoundingBox) -> Result<InstanceEmbedding, FeatureError> {
    let sel = bbox_to_selection(bbox, fmap)?;
    pool_over_selection(fmap, &sel)
}

/// Dot product accumulated in f64.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64) * (y as f64))
        .sum()
}

/// Cosine similarity; for normalized inputs this is the dot product.
pub fn cosine_similarity(a: &InstanceEmbedding, b: &InstanceEmbedding) -> Result<f64, FeatureError> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(FeatureError::ZeroNorm);
    }
    let s = dot(&a.values, &b.values) / (na * nb);
    Ok(s.clamp(-1.0, 1.0))
}
