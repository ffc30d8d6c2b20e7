//! A two-object benchmark dataset whose outcomes are known by construction.
//!
//! "blue mug": 4 positives, one showing a different-looking side (missed);
//! 3 hard negatives, one of which does contain the mug (false alarm);
//! 2 "other" images showing the plant; 1 fake showing a look-alike.
//! "office plant": 2 positives, 2 empty hard negatives.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use super::synth::{Scene, SynthBackend, Thing};

pub const MUG: &str = "blue mug";
pub const PLANT: &str = "office plant";

fn write(backend: &mut SynthBackend, root: &Path, rel: &str, scene: Scene) {
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, backend.register(scene)).unwrap();
}

fn with(seed: u64, label: &str, category: &str) -> Scene {
    let color = [(seed * 37 % 200) as u8 + 30, 180, 60];
    let mut s = Scene::new(64, 64, seed).with(Thing::new(label, category, color, [16, 16, 48, 48]));
    s.extra_proposals.push(pekit::features::BoundingBox::new(0, 0, 16, 64));
    s
}

fn empty(seed: u64) -> Scene {
    let mut s = Scene::new(64, 64, seed);
    s.extra_proposals.push(pekit::features::BoundingBox::new(16, 16, 48, 48));
    s
}

/// Writes the dataset under `root` and returns a backend that knows every image.
pub fn build(root: &Path) -> SynthBackend {
    let mut b = SynthBackend::default();
    fs::write(
        root.join("objects.json"),
        r#"[
  {"id": "mug", "name": "blue mug", "context": "Coffee only.", "category": "cup"},
  {"id": "plant", "name": "office plant", "category": "plant"}
]
"#,
    )
    .unwrap();
    let mut seed = 1000;
    let mut next = || {
        seed += 1;
        seed
    };

    for i in 0..2 {
        write(&mut b, root, &format!("mug/train/{i}.png"), with(next(), MUG, "cup"));
        write(&mut b, root, &format!("plant/train/{i}.png"), with(next(), PLANT, "plant"));
    }
    for i in 0..3 {
        write(&mut b, root, &format!("mug/val/positive/{i}.png"), with(next(), MUG, "cup"));
    }
    write(&mut b, root, "mug/val/positive/3.png", with(next(), "blue mug, back side", "cup"));
    write(&mut b, root, "mug/val/hard_negative/0.png", empty(next()));
    write(&mut b, root, "mug/val/hard_negative/1.png", with(next(), "desk lamp", "lamp"));
    write(&mut b, root, "mug/val/hard_negative/2.png", with(next(), MUG, "cup"));
    for i in 0..2 {
        write(&mut b, root, &format!("mug/val/other/{i}.png"), with(next(), PLANT, "plant"));
    }
    write(&mut b, root, "mug/val/fake/0.png", with(next(), "generated blue mug", "cup"));

    for i in 0..2 {
        write(&mut b, root, &format!("plant/val/positive/{i}.png"), with(next(), PLANT, "plant"));
        write(&mut b, root, &format!("plant/val/hard_negative/{i}.png"), empty(next()));
    }

    let vqa = [
        ("mug/val/positive/0.png", "No, it is not.", "Yes, the blue mug is on the table.", "B"),
        ("mug/val/hard_negative/0.png", "No, it is not.", "Yes, the blue mug is on the table.", "A"),
        ("mug/val/positive/3.png", "No, it is not.", "Yes, the blue mug is on the table.", "B"),
    ];
    let lines: Vec<String> = vqa
        .iter()
        .map(|(img, a, bb, gold)| {
            serde_json::json!({
                "image": img, "object_id": "mug", "question": "Is the blue mug in this picture?",
                "option_a": a, "option_b": bb, "answer": gold
            })
            .to_string()
        })
        .collect();
    fs::write(root.join("vqa.jsonl"), lines.join("\n") + "\n").unwrap();
    b
}

/// Expected macro-averaged values, worked out by hand from the layout above.
pub mod expected {
    pub const PRECISION: f64 = (75.0 + 100.0) / 2.0;
    pub const POSITIVE: f64 = (75.0 + 100.0) / 2.0;
    pub const HARD: f64 = (200.0 / 3.0 + 100.0) / 2.0;
    pub const OTHER: f64 = 100.0;
    pub const FAKE: f64 = 100.0;
    pub const POOLED: f64 = (500.0 / 6.0 + 100.0) / 2.0;
    pub const WEIGHTED: f64 = (POSITIVE + POOLED) / 2.0;
    pub const AVG: f64 = (PRECISION + POSITIVE + OTHER + HARD + FAKE) / 5.0;
    pub const RECALL: f64 = (75.0 + 100.0) / 2.0;
    pub const VQA: f64 = 200.0 / 3.0;
}
