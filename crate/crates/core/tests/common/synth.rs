//! Deterministic stand-in for the four vision tools.
//!
//! Images are registered as scenes of labelled rectangles. The embedder
//! returns, for each 16-pixel patch, the prototype vector of the label
//! covering the patch centre (or a per-scene background vector) plus
//! seeded Gaussian noise, so pooling over an object's box recovers its
//! prototype. Masks and proposals come straight from the scene geometry.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use image::{Rgb, RgbImage};
use pekit::adapters::wire::{encode_feature_map, mask_to_rle, EmbedResponse, ProposeResponse, SegmentResponse};
use pekit::adapters::{
    wire, Endpoint, FixtureStore, FnTransport, RawResponse, RecordingTransport, ToolClient, Transport,
};
use pekit::features::{BoundingBox, PatchFeatureMap, PixelMask};
use pekit::pipeline::encode_png;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const PATCH: usize = 16;
pub const DIM: usize = 32;

#[derive(Debug, Clone)]
pub struct Thing {
    pub label: String,
    pub category: String,
    pub color: [u8; 3],
    pub bbox: BoundingBox,
}

impl Thing {
    pub fn new(label: &str, category: &str, color: [u8; 3], bbox: [usize; 4]) -> Self {
        Self {
            label: label.into(),
            category: category.into(),
            color,
            bbox: BoundingBox::new(bbox[0], bbox[1], bbox[2], bbox[3]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub things: Vec<Thing>,
    /// Proposals beyond one per thing, e.g. background boxes or duplicates.
    pub extra_proposals: Vec<BoundingBox>,
    pub seed: u64,
}

impl Scene {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            things: Vec::new(),
            extra_proposals: Vec::new(),
            seed,
        }
    }

    pub fn with(mut self, thing: Thing) -> Self {
        self.things.push(thing);
        self
    }

    pub fn render(&self) -> RgbImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let tint = (self.seed % 40) as u8;
        let mut img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([
                60 + (x * 80 / w) as u8,
                90 + (y * 60 / h) as u8,
                120 + tint,
            ])
        });
        for t in &self.things {
            let b = t.bbox;
            let lighter = t.color.map(|c| c.saturating_add(40));
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    let inner = x >= b.x0 + b.width() / 4
                        && x < b.x1 - b.width() / 4
                        && y >= b.y0 + b.height() / 4
                        && y < b.y1 - b.height() / 4;
                    img.put_pixel(x as u32, y as u32, Rgb(if inner { lighter } else { t.color }));
                }
            }
        }
        img
    }

    pub fn png(&self) -> Vec<u8> {
        encode_png(&self.render()).unwrap()
    }
}

fn seeded(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0]);
    }
    let d = h.finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(d[..8].try_into().unwrap()))
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let n = Normal::new(0.0f32, 1.0).unwrap();
    let v: Vec<f32> = (0..dim).map(|_| n.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Unit prototype shared by every appearance of `label`.
pub fn prototype(label: &str) -> Vec<f32> {
    unit_gaussian(&mut seeded(&[b"prototype", label.as_bytes()]), DIM)
}

static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]+)""#).unwrap());

pub struct SynthBackend {
    scenes: HashMap<Vec<u8>, Scene>,
    /// Per-coordinate noise standard deviation.
    pub noise: f32,
}

impl Default for SynthBackend {
    fn default() -> Self {
        Self {
            scenes: HashMap::new(),
            noise: 0.04,
        }
    }
}

impl SynthBackend {
    pub fn with_noise(noise: f32) -> Self {
        Self {
            noise,
            ..Self::default()
        }
    }

    /// Registers a scene and returns its PNG bytes.
    pub fn register(&mut self, scene: Scene) -> Vec<u8> {
        let png = scene.png();
        self.scenes.insert(png.clone(), scene);
        png
    }

    fn scene(&self, body: &Value) -> Result<&Scene, RawResponse> {
        let bytes = body["image_b64"]
            .as_str()
            .and_then(|s| wire::decode_image(s).ok())
            .ok_or_else(|| error(400, "image_b64 missing or invalid"))?;
        self.scenes.get(&bytes).ok_or_else(|| error(422, "unknown image"))
    }

    pub fn feature_map(&self, scene: &Scene) -> PatchFeatureMap {
        let (gh, gw) = (scene.height / PATCH, scene.width / PATCH);
        let background = unit_gaussian(&mut seeded(&[b"background", &scene.seed.to_le_bytes()]), DIM);
        let mut rng = seeded(&[b"noise", &scene.seed.to_le_bytes()]);
        let noise = Normal::new(0.0f32, self.noise).unwrap();
        let mut data = Vec::with_capacity(gh * gw * DIM);
        for r in 0..gh {
            for c in 0..gw {
                let (cy, cx) = (r * PATCH + PATCH / 2, c * PATCH + PATCH / 2);
                // the last thing drawn is on top
                let base = match scene.things.iter().rev().find(|t| t.bbox.contains(cy, cx)) {
                    Some(t) => prototype(&t.label),
                    None => background.clone(),
                };
                data.extend(base.iter().map(|v| v + noise.sample(&mut rng)));
            }
        }
        PatchFeatureMap::new(gh, gw, DIM, scene.height, scene.width, data).unwrap()
    }

    pub fn respond(&self, endpoint: Endpoint, body: &Value) -> RawResponse {
        match self.try_respond(endpoint, body) {
            Ok(v) => RawResponse::ok(v.to_string()),
            Err(e) => e,
        }
    }

    fn try_respond(&self, endpoint: Endpoint, body: &Value) -> Result<Value, RawResponse> {
        Ok(match endpoint {
            Endpoint::Segment => {
                let scene = self.scene(body)?;
                let query = body["text_query"].as_str().unwrap_or_default();
                let hits: Vec<&Thing> = scene.things.iter().filter(|t| t.category == query).collect();
                let resp = SegmentResponse {
                    masks: hits
                        .iter()
                        .map(|t| mask_to_rle(&PixelMask::from_fn(scene.height, scene.width, |y, x| t.bbox.contains(y, x))))
                        .collect(),
                    scores: (0..hits.len()).map(|i| 0.95 - 0.1 * i as f64).collect(),
                };
                serde_json::to_value(resp).unwrap()
            }
            Endpoint::Propose => {
                let scene = self.scene(body)?;
                let boxes: Vec<[f64; 4]> = scene
                    .things
                    .iter()
                    .map(|t| t.bbox)
                    .chain(scene.extra_proposals.iter().copied())
                    .map(|b| [b.x0 as f64, b.y0 as f64, b.x1 as f64, b.y1 as f64])
                    .collect();
                let scores = (0..boxes.len()).map(|i| (0.9 - 0.05 * i as f64).max(0.1)).collect();
                serde_json::to_value(ProposeResponse { boxes, scores }).unwrap()
            }
            Endpoint::Embed => {
                let scene = self.scene(body)?;
                let resp: EmbedResponse = encode_feature_map(&self.feature_map(scene));
                serde_json::to_value(resp).unwrap()
            }
            Endpoint::Generate => {
                let prompt = body["prompt"].as_str().ok_or_else(|| error(400, "prompt missing"))?;
                json!({"text": canned_answer(prompt), "truncated": false})
            }
        })
    }

    pub fn into_transport(self) -> Arc<dyn Transport> {
        let backend = Arc::new(self);
        Arc::new(FnTransport(move |e: Endpoint, b: &Value| backend.respond(e, b)))
    }

    pub fn into_tools(self) -> ToolClient {
        ToolClient::uniform(self.into_transport())
    }

    /// Tools that also write every exchange as a replay fixture under `dir`.
    pub fn into_recording_tools(self, dir: &Path) -> ToolClient {
        let inner = self.into_transport();
        ToolClient::uniform(Arc::new(RecordingTransport::new(inner, FixtureStore::new(dir))))
    }
}

fn error(status: u16, message: &str) -> RawResponse {
    RawResponse {
        status,
        body: json!({ "error": message }).to_string(),
    }
}

/// Mentions every quoted name in the prompt. For an A/B question it picks the
/// option that names one of them, else "A".
pub fn canned_answer(prompt: &str) -> String {
    let names: Vec<&str> = QUOTED.captures_iter(prompt).map(|c| c.get(1).unwrap().as_str()).collect();
    if prompt.contains("Answer with the option's letter") {
        let option = |letter: &str| {
            prompt
                .lines()
                .find(|l| l.starts_with(&format!("{letter}. ")))
                .map(|l| l.to_lowercase())
                .unwrap_or_default()
        };
        let names_in = |l: &str| names.iter().any(|n| l.contains(&n.to_lowercase()));
        let pick = if !names_in(&option("A")) && names_in(&option("B")) { "b" } else { "a" };
        return format!("The answer is ({pick}).");
    }
    if names.is_empty() {
        return "The image shows a few everyday objects on a plain background.".into();
    }
    let listed = match names.split_last() {
        Some((last, [])) => format!("the {last}"),
        Some((last, rest)) => format!("the {} and the {last}", rest.join(", the ")),
        None => unreachable!(),
    };
    format!("The image shows {listed}.")
}

/// Random box aligned to the patch grid inside a `w x h` image.
pub fn random_box(rng: &mut impl Rng, w: usize, h: usize) -> BoundingBox {
    let (gw, gh) = (w / PATCH, h / PATCH);
    let bw = rng.random_range(2..=gw.min(6));
    let bh = rng.random_range(2..=gh.min(6));
    let x = rng.random_range(0..=gw - bw);
    let y = rng.random_range(0..=gh - bh);
    BoundingBox::new(x * PATCH, y * PATCH, (x + bw) * PATCH, (y + bh) * PATCH)
}
