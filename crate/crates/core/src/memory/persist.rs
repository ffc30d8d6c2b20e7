//! On-disk layout of a memory store.
//!
//! ```text
//! <dir>/manifest.json     { "version": 1, "dim": D, "objects": [ ... ] }
//! <dir>/emb_<id>.f32      little-endian f32, row-major num_views x D, no header
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MemoryError, MemoryStore, ObjectEntry, ObjectId};
use crate::features::UNIT_NORM_TOLERANCE;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub dim: Option<usize>,
    pub objects: Vec<ManifestObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestObject {
    pub id: ObjectId,
    pub name: String,
    pub context: String,
    pub category: String,
    pub num_views: usize,
    pub file: String,
    pub sha256: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MemoryError + '_ {
    move |source| MemoryError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn embedding_file_name(id: &ObjectId) -> String {
    format!("emb_{id}.f32")
}

fn encode_rows(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes `store` into `dir`, creating it if needed. Embedding files of
/// objects that are no longer present are deleted.
pub fn save(store: &MemoryStore, dir: &Path) -> Result<(), MemoryError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut objects = Vec::with_capacity(store.len());
    for entry in store.entries() {
        let file = embedding_file_name(&entry.id);
        let bytes = encode_rows(entry.embedding_matrix());
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        objects.push(ManifestObject {
            id: entry.id.clone(),
            name: entry.name.clone(),
            context: entry.context.clone(),
            category: entry.category.clone(),
            num_views: entry.num_views(),
            file,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        dim: store.dim(),
        objects,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| MemoryError::CorruptManifest(e.to_string()))?;
    text.push('\n');

    let tmp = dir.join(".manifest.json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    let target = dir.join(MANIFEST_FILE);
    fs::rename(&tmp, &target).map_err(io_err(&target))?;

    let keep: std::collections::HashSet<String> =
        manifest.objects.iter().map(|o| o.file.clone()).collect();
    for item in fs::read_dir(dir).map_err(io_err(dir))? {
        let item = item.map_err(io_err(dir))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if name.starts_with("emb_") && name.ends_with(".f32") && !keep.contains(&name) {
            fs::remove_file(item.path()).map_err(io_err(&item.path()))?;
        }
    }
    Ok(())
}

/// Reads a store written by [`save`]. A missing directory or manifest yields
/// an empty store.
pub fn load(dir: &Path) -> Result<MemoryStore, MemoryError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Ok(MemoryStore::new());
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| MemoryError::CorruptManifest(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(MemoryError::CorruptManifest(format!(
            "unsupported version {}",
            manifest.version
        )));
    }
    let mut store = MemoryStore::new();
    let dim = match manifest.dim {
        Some(0) => return Err(MemoryError::CorruptManifest("dim must be positive".into())),
        Some(d) => d,
        None if manifest.objects.is_empty() => return Ok(store),
        None => return Err(MemoryError::CorruptManifest("objects present but dim is null".into())),
    };
    store.set_dim(dim);

    for obj in manifest.objects {
        if obj.file != embedding_file_name(&obj.id) {
            return Err(MemoryError::CorruptManifest(format!(
                "object {} points at unexpected file {:?}",
                obj.id, obj.file
            )));
        }
        if obj.num_views == 0 {
            return Err(MemoryError::CorruptManifest(format!("object {} has no views", obj.id)));
        }
        if obj.name.trim().is_empty() {
            return Err(MemoryError::CorruptManifest(format!("object {} has no name", obj.id)));
        }
        let path = dir.join(&obj.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let expected = obj.num_views * dim * 4;
        if bytes.len() != expected {
            return Err(MemoryError::ShapeMismatch {
                file: obj.file,
                expected,
                actual: bytes.len(),
            });
        }
        if hex::encode(Sha256::digest(&bytes)) != obj.sha256 {
            return Err(MemoryError::ChecksumMismatch(obj.file));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        for (view, row) in values.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(MemoryError::CorruptManifest(format!(
                    "object {} view {view} is not unit-norm",
                    obj.id
                )));
            }
        }
        store.insert_loaded(ObjectEntry::from_parts(
            obj.id,
            obj.name,
            obj.context,
            obj.category,
            values,
            dim,
        ))?;
    }
    Ok(store)
}
