use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use crate::adapters::VisionTools;
use crate::memory::{MemoryStore, ObjectId};
use crate::pipeline::{self, ImagePayload, IntroductionRequest, PipelineConfig};

use super::dataset::{BenchmarkDataset, VqaItem};
use super::metrics::{
    object_personalization_recall, vqa_accuracy, recognition_metrics, MetricsReport, ObjectOutcomes,
    RecognitionOutcome, Split,
};
use super::EvalError;

pub const CAPTION_PROMPT: &str = "Describe the image.";

#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkOptions {
    /// Skip VQA and captioning so the LVLM is never called.
    pub recognition_only: bool,
    /// Worker threads for the detection pass; 0 picks the CPU count.
    pub workers: usize,
}

pub fn vqa_prompt(item: &VqaItem) -> String {
    format!(
        "{}\nA. {}\nB. {}\nAnswer with the option's letter.",
        item.question.trim_end(),
        item.option_a,
        item.option_b
    )
}

fn read_image(path: &Path) -> Result<Vec<u8>, EvalError> {
    fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn relative(ds: &BenchmarkDataset, path: &Path) -> String {
    path.strip_prefix(&ds.root).unwrap_or(path).display().to_string()
}

/// Objects detected in each image, computed once per distinct path.
fn detect_all(
    paths: &[PathBuf],
    store: &MemoryStore,
    cfg: &PipelineConfig,
    tools: &dyn VisionTools,
    workers: usize,
) -> Result<HashMap<PathBuf, BTreeSet<ObjectId>>, EvalError> {
    let workers = match workers {
        0 => thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        n => n,
    }
    .min(paths.len().max(1));
    let chunk = paths.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<(PathBuf, BTreeSet<ObjectId>)>, EvalError>> = thread::scope(|s| {
        let handles: Vec<_> = paths
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| {
                            let bytes = read_image(p)?;
                            let dets = pipeline::detect(&bytes, store, &cfg.retrieval, tools).map_err(|source| {
                                EvalError::Inference {
                                    image: p.clone(),
                                    source,
                                }
                            })?;
                            Ok((p.clone(), dets.into_iter().map(|d| d.object_id).collect()))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("detection worker panicked")).collect()
    });
    let mut out = HashMap::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Introduces every object from its train split into a fresh store, then
/// scores recognition on the validation splits and, unless
/// `recognition_only`, VQA accuracy and personalization recall.
pub fn run_benchmark(
    ds: &BenchmarkDataset,
    tools: &dyn VisionTools,
    cfg: &PipelineConfig,
    opts: BenchmarkOptions,
) -> Result<MetricsReport, EvalError> {
    let mut store = MemoryStore::new();
    let mut ids = BTreeMap::new();
    for o in &ds.objects {
        let refs = o
            .train
            .iter()
            .map(|p| Ok(ImagePayload::new(relative(ds, p), read_image(p)?)))
            .collect::<Result<Vec<_>, EvalError>>()?;
        let req = IntroductionRequest {
            name: o.name.clone(),
            context: o.context.clone(),
            category: o.category.clone(),
            reference_images: refs,
        };
        let id = pipeline::introduce_object(&req, &mut store, tools).map_err(|source| EvalError::Introduce {
            object: o.id.clone(),
            source,
        })?;
        ids.insert(o.id.clone(), id);
    }

    let splits = |o: &super::DatasetObject| {
        [
            (Split::Positive, o.positive.clone()),
            (Split::Other, o.other.clone()),
            (Split::HardNegative, o.hard_negative.clone()),
            (Split::Fake, o.fake.clone()),
        ]
    };
    let paths: Vec<PathBuf> = ds
        .objects
        .iter()
        .flat_map(|o| splits(o).into_iter().flat_map(|(_, v)| v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let detected = detect_all(&paths, &store, cfg, tools, opts.workers)?;

    let outcomes: Vec<ObjectOutcomes> = ds
        .objects
        .iter()
        .map(|o| {
            let id = &ids[&o.id];
            let outcomes = splits(o)
                .into_iter()
                .flat_map(|(split, images)| images.into_iter().map(move |p| (split, p)))
                .map(|(split, p)| RecognitionOutcome::new(relative(ds, &p), split, detected[&p].contains(id)))
                .collect();
            ObjectOutcomes {
                object_id: o.id.clone(),
                outcomes,
            }
        })
        .collect();
    let mut report = recognition_metrics(&outcomes)?;
    if opts.recognition_only {
        return Ok(report);
    }

    let infer = |path: &Path, prompt: &str| -> Result<String, EvalError> {
        let bytes = read_image(path)?;
        pipeline::personalized_inference(&bytes, prompt, &store, cfg, tools)
            .map(|r| r.answer)
            .map_err(|source| EvalError::Inference {
                image: path.to_path_buf(),
                source,
            })
    };

    let mut recalls = Vec::new();
    for (o, m) in ds.objects.iter().zip(report.per_object.iter_mut()) {
        let captions = o
            .positive
            .iter()
            .map(|p| infer(p, CAPTION_PROMPT))
            .collect::<Result<Vec<_>, _>>()?;
        m.personalization_recall = object_personalization_recall(&o.name, &captions);
        recalls.extend(m.personalization_recall);
    }
    if !recalls.is_empty() {
        report.personalization_recall = Some(recalls.iter().sum::<f64>() / recalls.len() as f64);
    }

    if !ds.vqa.is_empty() {
        let answers = ds
            .vqa
            .iter()
            .map(|item| infer(&item.image, &vqa_prompt(item)))
            .collect::<Result<Vec<_>, _>>()?;
        let gold: Vec<_> = ds.vqa.iter().map(|item| item.answer).collect();
        report.vqa_acc = Some(vqa_accuracy(&answers, &gold)?);
    }
    Ok(report)
}
