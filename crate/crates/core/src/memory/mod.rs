//! Object memory: per-object view-embedding matrices plus name, context and
//! category, with exact (and optionally approximate) similarity search.

mod hnsw;
mod persist;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{dot, InstanceEmbedding, UNIT_NORM_TOLERANCE};

pub use hnsw::{Hnsw, HnswParams};
pub use persist::{load, save, Manifest, ManifestObject, MANIFEST_FILE, MANIFEST_VERSION};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("dimension mismatch: store holds {expected}-d embeddings, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("an object needs at least one view embedding")]
    NoEmbeddings,
    #[error("view {0} is not unit-norm")]
    NotNormalized(usize),
    #[error("object name must not be empty")]
    EmptyName,
    #[error("duplicate object id {0}")]
    DuplicateId(ObjectId),
    #[error("unknown object id {0}")]
    UnknownId(ObjectId),
    #[error("invalid object id {0:?}")]
    InvalidId(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("shape mismatch for {file}: manifest implies {expected} bytes, found {actual}")]
    ShapeMismatch {
        file: String,
        expected: usize,
        actual: usize,
    },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Opaque object identifier; restricted to `[A-Za-z0-9_-]` so it can name files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Result<Self, MemoryError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id.len() <= 64
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if ok {
            Ok(Self(id))
        } else {
            Err(MemoryError::InvalidId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ObjectId {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// One personalized object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEntry {
    pub id: ObjectId,
    pub name: String,
    /// Empty when the user gave no context.
    pub context: String,
    pub category: String,
    /// Row-major `num_views x dim`, rows in reference-image order.
    embeddings: Vec<f32>,
    dim: usize,
}

impl ObjectEntry {
    pub fn num_views(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn view(&self, index: usize) -> &[f32] {
        &self.embeddings[index * self.dim..(index + 1) * self.dim]
    }

    pub fn views(&self) -> impl Iterator<Item = &[f32]> {
        self.embeddings.chunks_exact(self.dim)
    }

    pub fn embedding_matrix(&self) -> &[f32] {
        &self.embeddings
    }
}

/// Listing row for an object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectSummary {
    pub id: ObjectId,
    pub name: String,
    pub context: String,
    pub category: String,
    pub num_views: usize,
}

/// Best view of one object for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryHit {
    pub object_id: ObjectId,
    pub view_index: usize,
    pub score: f64,
}

/// What to store for a new object.
#[derive(Debug, Clone)]
pub struct NewObject {
    /// Explicit id; derived from the content when `None`.
    pub id: Option<ObjectId>,
    pub name: String,
    pub context: String,
    pub category: String,
    pub embeddings: Vec<InstanceEmbedding>,
}

impl NewObject {
    pub fn new(
        name: impl Into<String>,
        context: impl Into<String>,
        category: impl Into<String>,
        embeddings: Vec<InstanceEmbedding>,
    ) -> Self {
        Self {
            id: None,
            name: name.into(),
            context: context.into(),
            category: category.into(),
            embeddings,
        }
    }

    pub fn with_id(mut self, id: ObjectId) -> Self {
        self.id = Some(id);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SearchBackend {
    #[default]
    Exact,
    Approximate(HnswParams),
}

/// Flat matrix of every stored view plus the owner of each row.
#[derive(Debug, Clone, Default)]
struct FlatIndex {
    rows: Vec<f32>,
    owners: Vec<(ObjectId, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    dim: Option<usize>,
    entries: BTreeMap<ObjectId, ObjectEntry>,
    index: FlatIndex,
    backend: SearchBackend,
    ann: Option<Hnsw>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_backend(backend: SearchBackend) -> Self {
        let mut store = Self::default();
        store.set_backend(backend);
        store
    }

    pub fn set_backend(&mut self, backend: SearchBackend) {
        self.backend = backend;
        self.rebuild_ann();
    }

    pub fn backend(&self) -> SearchBackend {
        self.backend
    }

    /// Embedding dimensionality, fixed by the first insert.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of indexed view rows.
    pub fn row_count(&self) -> usize {
        self.index.owners.len()
    }

    pub fn get(&self, id: &ObjectId) -> Option<&ObjectEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ObjectEntry> {
        self.entries.values()
    }

    pub fn list_objects(&self) -> Vec<ObjectSummary> {
        self.entries
            .values()
            .map(|e| ObjectSummary {
                id: e.id.clone(),
                name: e.name.clone(),
                context: e.context.clone(),
                category: e.category.clone(),
                num_views: e.num_views(),
            })
            .collect()
    }

    pub fn insert_object(&mut self, obj: NewObject) -> Result<ObjectId, MemoryError> {
        if obj.name.trim().is_empty() {
            return Err(MemoryError::EmptyName);
        }
        let Some(first) = obj.embeddings.first() else {
            return Err(MemoryError::NoEmbeddings);
        };
        let dim = self.dim.unwrap_or(first.dim());
        let mut matrix = Vec::with_capacity(dim * obj.embeddings.len());
        for (i, e) in obj.embeddings.iter().enumerate() {
            if e.dim() != dim {
                return Err(MemoryError::DimMismatch {
                    expected: dim,
                    actual: e.dim(),
                });
            }
            if !e.is_normalized() || (e.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(MemoryError::NotNormalized(i));
            }
            matrix.extend_from_slice(e.values());
        }
        let id = match obj.id {
            Some(id) => {
                if self.entries.contains_key(&id) {
                    return Err(MemoryError::DuplicateId(id));
                }
                id
            }
            None => self.fresh_id(&obj.name, &obj.context, &obj.category, &matrix),
        };
        self.insert_entry(ObjectEntry {
            id: id.clone(),
            name: obj.name,
            context: obj.context,
            category: obj.category,
            embeddings: matrix,
            dim,
        });
        Ok(id)
    }

    /// Content-derived id: identical introductions get identical ids across runs.
    fn fresh_id(&self, name: &str, context: &str, category: &str, matrix: &[f32]) -> ObjectId {
        let mut h = Sha256::new();
        for part in [name, context, category] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        for v in matrix {
            h.update(v.to_le_bytes());
        }
        let digest = hex::encode(h.finalize());
        let base = format!("obj-{}", &digest[..12]);
        let mut candidate = base.clone();
        let mut n = 2;
        while self.entries.contains_key(candidate.as_str()) {
            candidate = format!("{base}-{n}");
            n += 1;
        }
        ObjectId(candidate)
    }

    fn insert_entry(&mut self, entry: ObjectEntry) {
        self.dim = Some(entry.dim);
        let first_row = self.index.owners.len();
        for (view, row) in entry.views().enumerate() {
            self.index.rows.extend_from_slice(row);
            self.index.owners.push((entry.id.clone(), view));
        }
        if let Some(ann) = self.ann.as_mut() {
            for _ in first_row..self.index.owners.len() {
                ann.insert_next(&self.index.rows);
            }
        } else if matches!(self.backend, SearchBackend::Approximate(_)) {
            self.rebuild_ann();
        }
        self.entries.insert(entry.id.clone(), entry);
    }

    pub fn remove_object(&mut self, id: &ObjectId) -> Result<ObjectEntry, MemoryError> {
        let entry = self
            .entries
            .remove(id)
            .ok_or_else(|| MemoryError::UnknownId(id.clone()))?;
        self.rebuild_index();
        Ok(entry)
    }

    fn rebuild_index(&mut self) {
        let mut index = FlatIndex::default();
        for e in self.entries.values() {
            for (view, row) in e.views().enumerate() {
                index.rows.extend_from_slice(row);
                index.owners.push((e.id.clone(), view));
            }
        }
        self.index = index;
        self.rebuild_ann();
    }

    fn rebuild_ann(&mut self) {
        self.ann = match (self.backend, self.dim) {
            (SearchBackend::Approximate(params), Some(dim)) => {
                Some(Hnsw::build(&self.index.rows, dim, params))
            }
            _ => None,
        };
    }

    fn check_query(&self, e: &InstanceEmbedding) -> Result<(), MemoryError> {
        match self.dim {
            Some(dim) if dim != e.dim() => Err(MemoryError::DimMismatch {
                expected: dim,
                actual: e.dim(),
            }),
            _ => Ok(()),
        }
    }

    /// Best view score for every stored object, sorted by descending score
    /// with ties broken by ascending id. Always exhaustive.
    pub fn query_all_objects(&self, e: &InstanceEmbedding) -> Result<Vec<QueryHit>, MemoryError> {
        self.check_query(e)?;
        let mut hits: Vec<QueryHit> = self
            .entries
            .values()
            .map(|entry| {
                let mut best = QueryHit {
                    object_id: entry.id.clone(),
                    view_index: 0,
                    score: f64::NEG_INFINITY,
                };
                for (k, view) in entry.views().enumerate() {
                    let s = dot(view, e.values());
                    if s > best.score {
                        best.score = s;
                        best.view_index = k;
                    }
                }
                best.score = best.score.clamp(-1.0, 1.0);
                best
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.object_id.cmp(&b.object_id))
        });
        Ok(hits)
    }

    /// Top-scoring object, answered by the configured backend.
    pub fn best_match(&self, e: &InstanceEmbedding) -> Result<Option<QueryHit>, MemoryError> {
        self.check_query(e)?;
        match &self.ann {
            Some(ann) => Ok(ann
                .search(&self.index.rows, e.values(), 1)
                .into_iter()
                .next()
                .map(|(row, score)| {
                    let (object_id, view_index) = self.index.owners[row].clone();
                    QueryHit {
                        object_id,
                        view_index,
                        score: score.clamp(-1.0, 1.0),
                    }
                })),
            None => Ok(self.query_all_objects(e)?.into_iter().next()),
        }
    }

    pub(crate) fn insert_loaded(&mut self, entry: ObjectEntry) -> Result<(), MemoryError> {
        if self.entries.contains_key(&entry.id) {
            return Err(MemoryError::DuplicateId(entry.id));
        }
        self.insert_entry(entry);
        Ok(())
    }

    pub(crate) fn set_dim(&mut self, dim: usize) {
        self.dim = Some(dim);
    }
}

impl ObjectEntry {
    pub(crate) fn from_parts(
        id: ObjectId,
        name: String,
        context: String,
        category: String,
        embeddings: Vec<f32>,
        dim: usize,
    ) -> Self {
        Self {
            id,
            name,
            context,
            category,
            embeddings,
            dim,
        }
    }
}

impl std::borrow::Borrow<str> for ObjectId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Reader-writer handle: many concurrent queries or one mutation at a time.
#[derive(Debug, Clone, Default)]
pub struct SharedMemory(Arc<RwLock<MemoryStore>>);

impl SharedMemory {
    pub fn new(store: MemoryStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, MemoryStore> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, MemoryStore> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }
}
