//! Request and response bodies of the tool protocol, plus payload codecs.
//!
//! | endpoint       | request                                   | response |
//! |----------------|-------------------------------------------|----------|
//! | `/v1/segment`  | `image_b64`, `text_query`                 | `masks[{size:[H,W], counts}]`, `scores` |
//! | `/v1/propose`  | `image_b64`                               | `boxes[[x0,y0,x1,y1]]`, `scores` |
//! | `/v1/embed`    | `image_b64`                               | `grid_h`, `grid_w`, `dim`, `image_h`, `image_w`, `data_b64` |
//! | `/v1/generate` | `image_b64`, `prompt`, `max_tokens`       | `text`, `truncated` |
//!
//! Errors come back as `{"error": "..."}` with a non-2xx status.
//!
//! Masks use uncompressed COCO run-length counts: pixels are visited in
//! column-major order and the first run counts zeros. Feature maps are
//! base64 of little-endian f32 in `[grid_h][grid_w][dim]` order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureError, PatchFeatureMap, PixelMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_b64: String,
    pub text_query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image_b64: String,
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<Rle>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeResponse {
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub image_h: usize,
    pub image_w: usize,
    pub data_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

pub fn encode_image(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_image(b64: &str) -> Result<Vec<u8>, String> {
    STANDARD.decode(b64).map_err(|e| e.to_string())
}

/// Column-major run-length counts of `mask`, starting with a zero run.
pub fn mask_to_rle(mask: &PixelMask) -> Rle {
    let (h, w) = (mask.height(), mask.width());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let bit = mask.get(y, x);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h, w],
        counts,
    }
}

pub fn rle_to_mask(rle: &Rle) -> Result<PixelMask, String> {
    let [h, w] = rle.size;
    let total: u64 = rle.counts.iter().sum();
    if total != (h * w) as u64 {
        return Err(format!(
            "run lengths sum to {total}, mask of {h}x{w} has {} pixels",
            h * w
        ));
    }
    let mut bits = vec![false; h * w];
    let mut pos = 0usize;
    for (i, &run) in rle.counts.iter().enumerate() {
        let value = i % 2 == 1;
        for p in pos..pos + run as usize {
            if value {
                // column-major position -> row-major storage
                let (x, y) = (p / h, p % h);
                bits[y * w + x] = true;
            }
        }
        pos += run as usize;
    }
    PixelMask::new(h, w, bits).map_err(|e| e.to_string())
}

pub fn encode_f32_le(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn encode_feature_map(fmap: &PatchFeatureMap) -> EmbedResponse {
    EmbedResponse {
        grid_h: fmap.grid_h(),
        grid_w: fmap.grid_w(),
        dim: fmap.dim(),
        image_h: fmap.image_h(),
        image_w: fmap.image_w(),
        data_b64: encode_f32_le(fmap.data()),
    }
}

#[derive(Debug, PartialEq)]
pub enum EmbedDecodeError {
    Base64(String),
    Shape { declared: usize, actual_bytes: usize },
    Invalid(FeatureError),
}

pub fn decode_feature_map(resp: &EmbedResponse) -> Result<PatchFeatureMap, EmbedDecodeError> {
    let bytes = STANDARD
        .decode(&resp.data_b64)
        .map_err(|e| EmbedDecodeError::Base64(e.to_string()))?;
    let declared = resp
        .grid_h
        .checked_mul(resp.grid_w)
        .and_then(|n| n.checked_mul(resp.dim))
        .unwrap_or(usize::MAX);
    if bytes.len() % 4 != 0 || bytes.len() / 4 != declared {
        return Err(EmbedDecodeError::Shape {
            declared,
            actual_bytes: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    PatchFeatureMap::new(resp.grid_h, resp.grid_w, resp.dim, resp.image_h, resp.image_w, data)
        .map_err(EmbedDecodeError::Invalid)
}
