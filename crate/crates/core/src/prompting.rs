//! Visual prompts: colored box outlines on the query image plus an
//! instruction naming the object inside each box.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::BoundingBox;
use crate::retrieval::DetectedInstance;

/// Default per-detection clause. Placeholders: `{color_name}`, `{name}`, `{context}`.
pub const DEFAULT_TEMPLATE: &str =
    "The object inside the {color_name} bounding box is \"{name}\". {context}";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("bounding box {bbox} outside {width}x{height} image")]
    BoxOutOfBounds {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error("detection {0} has no color slot")]
    MissingColor(usize),
    #[error("palette is empty")]
    EmptyPalette,
    #[error("palette colors must be pairwise distinct ({0} repeats)")]
    DuplicateColor(String),
    #[error("unknown placeholder {{{0}}} in template")]
    UnknownPlaceholder(String),
    #[error("unterminated placeholder in template")]
    UnterminatedPlaceholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteColor {
    pub name: String,
    pub rgb: [u8; 3],
}

impl PaletteColor {
    pub fn new(name: &str, rgb: [u8; 3]) -> Self {
        Self {
            name: name.to_string(),
            rgb,
        }
    }
}

pub fn default_palette() -> Vec<PaletteColor> {
    vec![
        PaletteColor::new("red", [255, 0, 0]),
        PaletteColor::new("green", [0, 200, 0]),
        PaletteColor::new("blue", [0, 90, 255]),
        PaletteColor::new("orange", [255, 140, 0]),
        PaletteColor::new("purple", [160, 32, 240]),
    ]
}

pub fn validate_palette(palette: &[PaletteColor]) -> Result<(), PromptError> {
    if palette.is_empty() {
        return Err(PromptError::EmptyPalette);
    }
    for (i, a) in palette.iter().enumerate() {
        if palette[..i].iter().any(|b| b.rgb == a.rgb || b.name == a.name) {
            return Err(PromptError::DuplicateColor(a.name.clone()));
        }
    }
    Ok(())
}

/// Color assigned to slot `i` of a detection list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorAssignment {
    pub slot: usize,
    pub rgb: [u8; 3],
    pub color_name: String,
}

pub fn color_for_slot(palette: &[PaletteColor], slot: usize) -> ColorAssignment {
    let c = &palette[slot % palette.len()];
    ColorAssignment {
        slot,
        rgb: c.rgb,
        color_name: c.name.clone(),
    }
}

/// Sets `color_slot` to each detection's position; colors cycle through the palette.
pub fn assign_colors(mut detections: Vec<DetectedInstance>) -> Vec<DetectedInstance> {
    for (i, d) in detections.iter_mut().enumerate() {
        d.color_slot = Some(i);
    }
    detections
}

/// Outline thickness for an image: `max(3, round(0.006 * min(w, h)))`.
pub fn stroke_width(width: u32, height: u32) -> u32 {
    let s = (0.006 * width.min(height) as f64).round() as u32;
    s.max(3)
}

/// True when pixel `(x, y)` lies in the outline band of `bbox`.
pub fn in_stroke_band(bbox: &BoundingBox, stroke: usize, x: usize, y: usize) -> bool {
    bbox.contains(y, x)
        && (x < bbox.x0 + stroke
            || x + stroke >= bbox.x1
            || y < bbox.y0 + stroke
            || y + stroke >= bbox.y1)
}

/// Draws every detection's box as an inward outline in its slot color.
/// Pixels outside the outline bands are left untouched.
pub fn annotate_image(
    image: &RgbImage,
    detections: &[DetectedInstance],
    palette: &[PaletteColor],
) -> Result<RgbImage, PromptError> {
    validate_palette(palette)?;
    let (width, height) = image.dimensions();
    let stroke = stroke_width(width, height) as usize;
    let mut out = image.clone();
    for (i, d) in detections.iter().enumerate() {
        let slot = d.color_slot.ok_or(PromptError::MissingColor(i))?;
        let b = d.bbox;
        if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > width as usize || b.y1 > height as usize {
            return Err(PromptError::BoxOutOfBounds {
                bbox: b,
                width,
                height,
            });
        }
        let color = Rgb(color_for_slot(palette, slot).rgb);
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                if in_stroke_band(&b, stroke, x, y) {
                    out.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    ColorName,
    Name,
    Context,
}

/// Parsed clause template.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseTemplate {
    pieces: Vec<Piece>,
}

impl ClauseTemplate {
    pub fn parse(template: &str) -> Result<Self, PromptError> {
        let mut pieces = Vec::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or(PromptError::UnterminatedPlaceholder)?
                + open;
            pieces.push(match &rest[open + 1..close] {
                "color_name" => Piece::ColorName,
                "name" => Piece::Name,
                "context" => Piece::Context,
                other => return Err(PromptError::UnknownPlaceholder(other.to_string())),
            });
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Self { pieces })
    }

    fn render(&self, color_name: &str, name: &str, context: &str) -> String {
        let mut s = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => s.push_str(t),
                Piece::ColorName => s.push_str(color_name),
                Piece::Name => s.push_str(name),
                Piece::Context => s.push_str(context.trim()),
            }
        }
        s.trim_end().to_string()
    }
}

impl Default for ClauseTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("default template parses")
    }
}

/// One clause per detection in order, then the user query verbatim. With no
/// detections the query is returned unchanged.
pub fn build_instruction(
    detections: &[DetectedInstance],
    user_query: &str,
    template: &ClauseTemplate,
    palette: &[PaletteColor],
) -> Result<String, PromptError> {
    validate_palette(palette)?;
    if detections.is_empty() {
        return Ok(user_query.to_string());
    }
    let mut parts = Vec::with_capacity(detections.len() + 1);
    for (i, d) in detections.iter().enumerate() {
        let slot = d.color_slot.ok_or(PromptError::MissingColor(i))?;
        let color = color_for_slot(palette, slot);
        parts.push(template.render(&color.color_name, &d.name, &d.context));
    }
    parts.push(user_query.to_string());
    Ok(parts.join(" "))
}

/// Annotated image and instruction for one query.
#[derive(Debug, Clone)]
pub struct VisualPrompt {
    pub annotated_image: RgbImage,
    pub instruction: String,
    pub detections: Vec<DetectedInstance>,
}

/// Assigns colors, draws boxes and builds the instruction in one step.
pub fn compose(
    image: &RgbImage,
    detections: Vec<DetectedInstance>,
    user_query: &str,
    template: &ClauseTemplate,
    palette: &[PaletteColor],
) -> Result<VisualPrompt, PromptError> {
    let detections = assign_colors(detections);
    let annotated_image = annotate_image(image, &detections, palette)?;
    let instruction = build_instruction(&detections, user_query, template, palette)?;
    Ok(VisualPrompt {
        annotated_image,
        instruction,
        detections,
    })
}
