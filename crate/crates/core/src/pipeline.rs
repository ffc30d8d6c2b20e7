//! The two user-facing flows: introducing an object from reference images,
//! and answering a question about a query image with personalized prompts.

use std::fmt;
use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::adapters::{AdapterError, Proposal, VisionTools};
use crate::features::{self, BoundingBox, FeatureError, InstanceEmbedding};
use crate::memory::{MemoryError, MemoryStore, NewObject, ObjectId, SharedMemory};
use crate::prompting::{self, ClauseTemplate, PaletteColor, PromptError};
use crate::retrieval::{self, DetectedInstance, RetrievalConfig, RetrievalError};

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Segment,
    Propose,
    Embed,
    Pool,
    Retrieve,
    Annotate,
    Generate,
    Memory,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Segment => "segment",
            Stage::Propose => "propose",
            Stage::Embed => "embed",
            Stage::Pool => "pool",
            Stage::Retrieve => "retrieve",
            Stage::Annotate => "annotate",
            Stage::Generate => "generate",
            Stage::Memory => "memory",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{stage}: reference image {index} ({label}): {source}")]
    Reference {
        stage: Stage,
        index: usize,
        label: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("segment: object not found in reference image {index} ({label})")]
    NotFoundInReference { index: usize, label: String },
    #[error("{stage}: {source}")]
    Adapter {
        stage: Stage,
        #[source]
        source: AdapterError,
    },
    #[error("{stage}: {source}")]
    Feature {
        stage: Stage,
        #[source]
        source: FeatureError,
    },
    #[error("memory: {0}")]
    Memory(#[from] MemoryError),
    #[error("retrieve: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("annotate: {0}")]
    Prompt(#[from] PromptError),
    #[error("annotate: cannot decode query image: {0}")]
    Image(String),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            Self::Reference { stage, .. } | Self::Adapter { stage, .. } | Self::Feature { stage, .. } => *stage,
            Self::NotFoundInReference { .. } => Stage::Segment,
            Self::Memory(_) | Self::InvalidRequest(_) => Stage::Memory,
            Self::Retrieval(_) => Stage::Retrieve,
            Self::Prompt(_) | Self::Image(_) => Stage::Annotate,
        }
    }
}

fn adapter(stage: Stage) -> impl FnOnce(AdapterError) -> PipelineError {
    move |source| PipelineError::Adapter { stage, source }
}

/// An encoded image file plus a label used in error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub label: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn new(label: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            label: label.into(),
            bytes,
        }
    }

    pub fn from_path(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(Self::new(path.display().to_string(), std::fs::read(path)?))
    }
}

#[derive(Debug, Clone)]
pub struct IntroductionRequest {
    pub name: String,
    pub context: String,
    pub category: String,
    pub reference_images: Vec<ImagePayload>,
}

/// Settings shared by inference calls.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub template: ClauseTemplate,
    pub palette: Vec<PaletteColor>,
    pub max_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            template: ClauseTemplate::default(),
            palette: prompting::default_palette(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub answer: String,
    pub truncated: bool,
    pub detections: Vec<DetectedInstance>,
    pub prompt_used: String,
    /// PNG of the annotated query image; `None` when nothing was detected.
    pub annotated_png: Option<Vec<u8>>,
}

/// Segments and pools every reference image. Fails on the first image that
/// yields no mask, naming it (1-based).
pub fn reference_embeddings(
    req: &IntroductionRequest,
    tools: &dyn VisionTools,
) -> Result<Vec<InstanceEmbedding>, PipelineError> {
    if req.name.trim().is_empty() {
        return Err(PipelineError::InvalidRequest("name must not be empty".into()));
    }
    if req.category.trim().is_empty() {
        return Err(PipelineError::InvalidRequest("category must not be empty".into()));
    }
    if req.reference_images.is_empty() {
        return Err(PipelineError::InvalidRequest("at least one reference image is required".into()));
    }
    let mut out = Vec::with_capacity(req.reference_images.len());
    for (i, image) in req.reference_images.iter().enumerate() {
        let index = i + 1;
        let reference = |stage: Stage, source: Box<dyn std::error::Error + Send + Sync>| {
            PipelineError::Reference {
                stage,
                index,
                label: image.label.clone(),
                source,
            }
        };
        let masks = match tools.segment(&image.bytes, &req.category) {
            Ok(m) => m,
            Err(AdapterError::NothingFound { .. }) => {
                return Err(PipelineError::NotFoundInReference {
                    index,
                    label: image.label.clone(),
                })
            }
            Err(e) => return Err(reference(Stage::Segment, Box::new(e))),
        };
        // masks arrive sorted by score; keep the best one
        let top = &masks[0].mask;
        let fmap = tools
            .embed(&image.bytes)
            .map_err(|e| reference(Stage::Embed, Box::new(e)))?;
        let e = features::pool_mask(&fmap, top).map_err(|e| reference(Stage::Pool, Box::new(e)))?;
        out.push(e);
    }
    Ok(out)
}

/// Introduces one object. The store is only touched once every reference
/// image has been processed, so a failure leaves it unchanged.
pub fn introduce_object(
    req: &IntroductionRequest,
    store: &mut MemoryStore,
    tools: &dyn VisionTools,
) -> Result<ObjectId, PipelineError> {
    let embeddings = reference_embeddings(req, tools)?;
    Ok(store.insert_object(NewObject::new(
        req.name.trim(),
        req.context.trim(),
        req.category.trim(),
        embeddings,
    ))?)
}

/// Like [`introduce_object`] but holds the write lock only for the insert.
pub fn introduce_shared(
    req: &IntroductionRequest,
    memory: &SharedMemory,
    tools: &dyn VisionTools,
) -> Result<ObjectId, PipelineError> {
    let embeddings = reference_embeddings(req, tools)?;
    Ok(memory.write().insert_object(NewObject::new(
        req.name.trim(),
        req.context.trim(),
        req.category.trim(),
        embeddings,
    ))?)
}

/// Clamps a proposal to the image; `None` if nothing is left.
fn clamp_box(b: BoundingBox, width: usize, height: usize) -> Option<BoundingBox> {
    let c = BoundingBox::new(b.x0.min(width), b.y0.min(height), b.x1.min(width), b.y1.min(height));
    (c.area() > 0).then_some(c)
}

/// Pools each proposal box over the feature map.
pub fn pool_proposals(
    proposals: &[Proposal],
    fmap: &features::PatchFeatureMap,
) -> Result<Vec<(BoundingBox, InstanceEmbedding)>, PipelineError> {
    let mut out = Vec::with_capacity(proposals.len());
    for p in proposals {
        let Some(bbox) = clamp_box(p.bbox, fmap.image_w(), fmap.image_h()) else {
            continue;
        };
        let e = features::pool_bbox(fmap, &bbox).map_err(|source| PipelineError::Feature {
            stage: Stage::Pool,
            source,
        })?;
        out.push((bbox, e));
    }
    Ok(out)
}

/// Proposal, pooling and retrieval for one image, without generation.
pub fn detect(
    image: &[u8],
    store: &MemoryStore,
    cfg: &RetrievalConfig,
    tools: &dyn VisionTools,
) -> Result<Vec<DetectedInstance>, PipelineError> {
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let proposals = tools.propose(image).map_err(adapter(Stage::Propose))?;
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let fmap = tools.embed(image).map_err(adapter(Stage::Embed))?;
    let pooled = pool_proposals(&proposals, &fmap)?;
    Ok(retrieval::retrieve_instances(&pooled, store, cfg)?)
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| PipelineError::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Answers `question` about `image`. Without detections the untouched image
/// and the raw question go to the LVLM.
pub fn personalized_inference(
    image: &[u8],
    question: &str,
    store: &MemoryStore,
    cfg: &PipelineConfig,
    tools: &dyn VisionTools,
) -> Result<InferenceResult, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::InvalidRequest("question must not be empty".into()));
    }
    let detections = detect(image, store, &cfg.retrieval, tools)?;
    if detections.is_empty() {
        let out = tools
            .generate(image, question, cfg.max_tokens)
            .map_err(adapter(Stage::Generate))?;
        return Ok(InferenceResult {
            answer: out.text,
            truncated: out.truncated,
            detections,
            prompt_used: question.to_string(),
            annotated_png: None,
        });
    }
    let decoded = image::load_from_memory(image)
        .map_err(|e| PipelineError::Image(e.to_string()))?
        .to_rgb8();
    let prompt = prompting::compose(&decoded, detections, question, &cfg.template, &cfg.palette)?;
    let png = encode_png(&prompt.annotated_image)?;
    let out = tools
        .generate(&png, &prompt.instruction, cfg.max_tokens)
        .map_err(adapter(Stage::Generate))?;
    Ok(InferenceResult {
        answer: out.text,
        truncated: out.truncated,
        detections: prompt.detections,
        prompt_used: prompt.instruction,
        annotated_png: Some(png),
    })
}
