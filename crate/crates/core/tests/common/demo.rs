//! The shipped three-object fixture set: reference images, a toy scene,
//! replay fixtures for every tool call the CLI makes on them, and the
//! resulting memory store.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use pekit::memory::{self, MemoryStore};
use pekit::pipeline::{self, ImagePayload, IntroductionRequest, PipelineConfig};

use super::synth::{Scene, SynthBackend, Thing};

pub struct FigObject {
    pub name: &'static str,
    pub slug: &'static str,
    pub context: &'static str,
    pub category: &'static str,
    pub color: [u8; 3],
    /// Box in the scene.
    pub scene_box: [usize; 4],
}

pub const OBJECTS: [FigObject; 3] = [
    FigObject {
        name: "gengar toy",
        slug: "gengar-toy",
        context: "It is a modern item and a favorite among Pokemon fans.",
        category: "toy",
        color: [112, 64, 168],
        scene_box: [32, 48, 112, 144],
    },
    FigObject {
        name: "small penguin",
        slug: "small-penguin",
        context: "It brings comfort and joy to a child during the winter months.",
        category: "plush toy",
        color: [36, 36, 48],
        scene_box: [144, 64, 208, 176],
    },
    FigObject {
        name: "red piggy bank",
        slug: "red-piggy-bank",
        context: "It is a vintage item, cherished by someone saving money for a long time.",
        category: "piggy bank",
        color: [204, 44, 72],
        scene_box: [224, 96, 304, 192],
    },
];

pub const SCENE_FILE: &str = "scene.png";
pub const CONFIG_FILE: &str = "config.json";
pub const QUESTIONS: [&str; 2] = ["Describe the image.", "What are these objects and who might own them?"];
pub const REFS_PER_OBJECT: usize = 5;
pub const SCENE_SEED: u64 = 2;

const MUG: [u8; 3] = [216, 200, 96];
const BOOK: [u8; 3] = [64, 144, 96];

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("demo")
}

pub fn reference_path(root: &Path, slug: &str, i: usize) -> PathBuf {
    root.join("refs").join(slug).join(format!("{i}.png"))
}

pub fn scene() -> Scene {
    let mut s = Scene::new(320, 240, SCENE_SEED);
    for o in &OBJECTS {
        s = s.with(Thing::new(o.name, o.category, o.color, o.scene_box));
    }
    s = s
        .with(Thing::new("mug", "cup", MUG, [16, 176, 96, 224]))
        .with(Thing::new("book", "book", BOOK, [240, 16, 304, 64]));
    // a second, looser box around the first object and one on bare background
    s.extra_proposals.push(pekit::features::BoundingBox::new(16, 48, 112, 160));
    s.extra_proposals.push(pekit::features::BoundingBox::new(112, 0, 208, 48));
    s
}

fn reference_scene(o: &FigObject, k: usize, index: usize) -> Scene {
    let (w, h) = (160, 128);
    let bw = 48 + 16 * (k % 3);
    let bh = 48 + 16 * ((k + 1) % 3);
    let x = 16 * (1 + (k * 2 + index) % 4);
    let y = 16 * (1 + (k + index) % 2);
    let mut s = Scene::new(w, h, 100 + 10 * index as u64 + k as u64).with(Thing::new(
        o.name,
        o.category,
        o.color,
        [x, y, (x + bw).min(w), (y + bh).min(h)],
    ));
    if k % 2 == 1 {
        s = s.with(Thing::new("mug", "cup", MUG, [w - 32, h - 48, w, h]));
    }
    s
}

pub fn config_json() -> String {
    let endpoint = r#"{"mode": "replay", "fixture_dir": "replay"}"#;
    format!(
        "{{\n  \"store_path\": \"store\",\n  \"adapters\": {{\n    \"segment\": {endpoint},\n    \"propose\": {endpoint},\n    \"embed\": {endpoint},\n    \"generate\": {endpoint}\n  }},\n  \"retrieval\": {{\"tau\": 0.75}}\n}}\n"
    )
}

/// Backend knowing every fixture image, the scene bytes, and one
/// introduction request per object labelled with paths under `root`.
pub fn backend(root: &Path) -> (SynthBackend, Vec<u8>, Vec<IntroductionRequest>) {
    let mut backend = SynthBackend::default();
    let scene_png = backend.register(scene());
    let requests = OBJECTS
        .iter()
        .enumerate()
        .map(|(index, o)| IntroductionRequest {
            name: o.name.into(),
            context: o.context.into(),
            category: o.category.into(),
            reference_images: (0..REFS_PER_OBJECT)
                .map(|k| {
                    let png = backend.register(reference_scene(o, k, index));
                    ImagePayload::new(reference_path(root, o.slug, k + 1).display().to_string(), png)
                })
                .collect(),
        })
        .collect();
    (backend, scene_png, requests)
}

/// Writes the whole fixture set under `root`, recording every tool call.
pub fn build(root: &Path) {
    let (backend, scene_png, requests) = backend(root);
    fs::create_dir_all(root).unwrap();
    fs::write(root.join(SCENE_FILE), &scene_png).unwrap();
    for req in &requests {
        for image in &req.reference_images {
            let path = Path::new(&image.label);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, &image.bytes).unwrap();
        }
    }

    let tools = backend.into_recording_tools(&root.join("replay"));
    let mut store = MemoryStore::new();
    for req in &requests {
        pipeline::introduce_object(req, &mut store, &tools).unwrap();
    }
    memory::save(&store, &root.join("store")).unwrap();

    let cfg = PipelineConfig::default();
    for q in QUESTIONS {
        pipeline::personalized_inference(&scene_png, q, &store, &cfg, &tools).unwrap();
        pipeline::personalized_inference(&scene_png, q, &MemoryStore::new(), &cfg, &tools).unwrap();
    }
    fs::write(root.join(CONFIG_FILE), config_json()).unwrap();
}
