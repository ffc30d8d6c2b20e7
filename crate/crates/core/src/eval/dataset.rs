//! Benchmark dataset layout:
//!
//! ```text
//! root/objects.json                 [{"id", "name", "context", "category"}]
//! root/<id>/train/*.{png,jpg,jpeg}
//! root/<id>/val/positive/*          required
//! root/<id>/val/hard_negative/*     required
//! root/<id>/val/other/*             optional
//! root/<id>/val/fake/*              optional
//! root/vqa.jsonl                    optional, one item per line
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const OBJECTS_FILE: &str = "objects.json";
pub const VQA_FILE: &str = "vqa.jsonl";
pub const FRAME_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "a" => Some(Self::A),
            "B" | "b" => Some(Self::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ObjectRecord {
    id: String,
    name: String,
    #[serde(default)]
    context: String,
    category: String,
}

#[derive(Debug, Clone, Deserialize)]
struct VqaRecord {
    image: String,
    object_id: String,
    question: String,
    option_a: String,
    option_b: String,
    answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetObject {
    pub id: String,
    pub name: String,
    pub context: String,
    pub category: String,
    pub train: Vec<PathBuf>,
    pub positive: Vec<PathBuf>,
    pub hard_negative: Vec<PathBuf>,
    pub other: Vec<PathBuf>,
    pub fake: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VqaItem {
    /// 1-based line in `vqa.jsonl`.
    pub line: usize,
    pub image: PathBuf,
    pub object_id: String,
    pub question: String,
    pub option_a: String,
    pub option_b: String,
    pub answer: Choice,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkDataset {
    pub root: PathBuf,
    pub objects: Vec<DatasetObject>,
    pub vqa: Vec<VqaItem>,
}

/// Keeps frames at indices 0, 10, 20, ...
pub fn sample_validation_frames<T: Clone>(frames: &[T]) -> Vec<T> {
    frames.iter().step_by(FRAME_STRIDE).cloned().collect()
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Image files directly inside `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn required_split(object: &str, dir: PathBuf) -> Result<Vec<PathBuf>, EvalError> {
    if !dir.is_dir() {
        return Err(EvalError::MissingSplit {
            object: object.to_string(),
            path: dir,
        });
    }
    list_images(&dir)
}

fn optional_split(dir: PathBuf) -> Result<Vec<PathBuf>, EvalError> {
    if dir.is_dir() {
        list_images(&dir)
    } else {
        Ok(Vec::new())
    }
}

fn valid_dir_name(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\'])
}

pub fn load_dataset(root: &Path) -> Result<BenchmarkDataset, EvalError> {
    let objects_path = root.join(OBJECTS_FILE);
    let text = fs::read_to_string(&objects_path).map_err(|source| EvalError::Io {
        path: objects_path.clone(),
        source,
    })?;
    let records: Vec<ObjectRecord> =
        serde_json::from_str(&text).map_err(|e| EvalError::MalformedObjects(e.to_string()))?;
    if records.is_empty() {
        return Err(EvalError::MalformedObjects("no objects listed".into()));
    }

    let mut seen = HashSet::new();
    let mut objects = Vec::with_capacity(records.len());
    for r in records {
        if !valid_dir_name(&r.id) {
            return Err(EvalError::MalformedObjects(format!("invalid object id {:?}", r.id)));
        }
        if r.name.trim().is_empty() || r.category.trim().is_empty() {
            return Err(EvalError::MalformedObjects(format!(
                "object {} needs a name and a category",
                r.id
            )));
        }
        if !seen.insert(r.id.clone()) {
            return Err(EvalError::MalformedObjects(format!("duplicate object id {}", r.id)));
        }
        let base = root.join(&r.id);
        let val = base.join("val");
        let train = required_split(&r.id, base.join("train"))?;
        if train.is_empty() {
            return Err(EvalError::EmptyTrain { object: r.id });
        }
        objects.push(DatasetObject {
            train,
            positive: required_split(&r.id, val.join("positive"))?,
            hard_negative: required_split(&r.id, val.join("hard_negative"))?,
            other: optional_split(val.join("other"))?,
            fake: optional_split(val.join("fake"))?,
            id: r.id,
            name: r.name,
            context: r.context,
            category: r.category,
        });
    }

    let vqa = load_vqa(root, &seen)?;
    Ok(BenchmarkDataset {
        root: root.to_path_buf(),
        objects,
        vqa,
    })
}

fn load_vqa(root: &Path, ids: &HashSet<String>) -> Result<Vec<VqaItem>, EvalError> {
    let path = root.join(VQA_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|source| EvalError::Io { path, source })?;
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Vqa { line, message };
        let rec: VqaRecord = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let answer = Choice::parse(&rec.answer).ok_or_else(|| bad(format!("answer {:?} is not A or B", rec.answer)))?;
        if !ids.contains(&rec.object_id) {
            return Err(bad(format!("unknown object_id {}", rec.object_id)));
        }
        let image = root.join(&rec.image);
        if !image.is_file() {
            return Err(EvalError::DanglingImage { line, path: image });
        }
        items.push(VqaItem {
            line,
            image,
            object_id: rec.object_id,
            question: rec.question,
            option_a: rec.option_a,
            option_b: rec.option_b,
            answer,
        });
    }
    Ok(items)
}
