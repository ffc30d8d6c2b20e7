//! Benchmark harness: dataset loading, recognition/VQA/captioning metrics
//! and the end-to-end runner.

mod bench;
mod dataset;
mod metrics;

use std::path::PathBuf;

use thiserror::Error;

use crate::memory::MemoryError;
use crate::pipeline::PipelineError;

pub use bench::{run_benchmark, vqa_prompt, BenchmarkOptions, CAPTION_PROMPT};
pub use dataset::{
    list_images, load_dataset, sample_validation_frames, BenchmarkDataset, Choice, DatasetObject, VqaItem,
    FRAME_STRIDE, OBJECTS_FILE, VQA_FILE,
};
pub use metrics::{
    average_visual_recognition, caption_mentions, normalize_text, object_personalization_recall, parse_choice,
    personalization_recall, recognition_metrics, render_table, round_half_up, vqa_accuracy, weighted_accuracy,
    MetricsReport, NegativeAccuracy, ObjectMetrics, ObjectOutcomes, RecognitionOutcome, Split,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed objects.json: {0}")]
    MalformedObjects(String),
    #[error("object {object}: missing split directory {}", path.display())]
    MissingSplit { object: String, path: PathBuf },
    #[error("object {object}: train split has no images")]
    EmptyTrain { object: String },
    #[error("vqa.jsonl line {line}: {message}")]
    Vqa { line: usize, message: String },
    #[error("vqa.jsonl line {line}: image {} does not exist", path.display())]
    DanglingImage { line: usize, path: PathBuf },
    #[error("{answers} answers for {gold} gold labels")]
    LengthMismatch { answers: usize, gold: usize },
    #[error("no VQA items")]
    NoVqaItems,
    #[error("no objects to evaluate")]
    NoObjects,
    #[error("object {0} has no positive outcomes")]
    NoPositives(String),
    #[error("object {0} has no negative outcomes")]
    NoNegatives(String),
    #[error("object {object}: {source}")]
    Introduce {
        object: String,
        #[source]
        source: PipelineError,
    },
    #[error("{}: {source}", image.display())]
    Inference {
        image: PathBuf,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}
