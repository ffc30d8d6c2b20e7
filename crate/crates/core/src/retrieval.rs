//! Thresholded matching of proposal embeddings against the memory.
//!
//! A proposal matches object `j` when `j` is the best-scoring object and its
//! best view similarity is strictly greater than `j`'s threshold. Proposals
//! without a match are dropped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{BoundingBox, InstanceEmbedding};
use crate::memory::{MemoryError, MemoryStore, ObjectId};

pub const DEFAULT_TAU: f64 = 0.75;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("threshold {0} outside (-1, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub tau: f64,
    pub per_object_tau: HashMap<ObjectId, f64>,
    pub dedupe_per_object: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            per_object_tau: HashMap::new(),
            dedupe_per_object: true,
        }
    }
}

impl RetrievalConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let valid = |t: f64| t > -1.0 && t <= 1.0;
        if !valid(self.tau) {
            return Err(RetrievalError::InvalidThreshold(self.tau));
        }
        if let Some(&bad) = self.per_object_tau.values().find(|&&t| !valid(t)) {
            return Err(RetrievalError::InvalidThreshold(bad));
        }
        Ok(())
    }

    pub fn threshold(&self, id: &ObjectId) -> f64 {
        self.per_object_tau.get(id).copied().unwrap_or(self.tau)
    }
}

/// A proposal that matched a stored object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectedInstance {
    pub bbox: BoundingBox,
    pub object_id: ObjectId,
    pub name: String,
    pub context: String,
    pub score: f64,
    /// Palette slot, filled in by [`crate::prompting::assign_colors`].
    pub color_slot: Option<usize>,
    /// Position of the proposal in the input list.
    pub proposal_index: usize,
}

/// Returns the best object for `e` if its score clears that object's threshold.
pub fn match_proposal(
    e: &InstanceEmbedding,
    store: &MemoryStore,
    cfg: &RetrievalConfig,
) -> Result<Option<(ObjectId, f64)>, RetrievalError> {
    let Some(top) = store.best_match(e)? else {
        return Ok(None);
    };
    if top.score > cfg.threshold(&top.object_id) {
        Ok(Some((top.object_id, top.score)))
    } else {
        Ok(None)
    }
}

/// Matches every proposal and assembles the detections for one image,
/// sorted by descending score (ties: smaller proposal index first).
pub fn retrieve_instances(
    proposals: &[(BoundingBox, InstanceEmbedding)],
    store: &MemoryStore,
    cfg: &RetrievalConfig,
) -> Result<Vec<DetectedInstance>, RetrievalError> {
    cfg.validate()?;
    let mut found = Vec::new();
    for (index, (bbox, e)) in proposals.iter().enumerate() {
        let Some((object_id, score)) = match_proposal(e, store, cfg)? else {
            continue;
        };
        let entry = store
            .get(&object_id)
            .ok_or_else(|| MemoryError::UnknownId(object_id.clone()))?;
        found.push(DetectedInstance {
            bbox: *bbox,
            name: entry.name.clone(),
            context: entry.context.clone(),
            object_id,
            score,
            color_slot: None,
            proposal_index: index,
        });
    }
    found.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.proposal_index.cmp(&b.proposal_index))
    });
    if cfg.dedupe_per_object {
        let mut seen = std::collections::HashSet::new();
        found.retain(|d| seen.insert(d.object_id.clone()));
    }
    Ok(found)
}
