//! Command-line interface.
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::AppConfig;
use crate::eval::{self, BenchmarkOptions};
use crate::memory::{self, MemoryStore, ObjectId};
use crate::pipeline::{self, ImagePayload, IntroductionRequest};
use crate::retrieval::DetectedInstance;

#[derive(Debug, Parser)]
#[command(name = "pekit", version, about = "Personalize a vision-language assistant with your own objects")]
pub struct Cli {
    /// Config file; falls back to $PEKIT_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Memory store directory, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub store: Option<PathBuf>,
    /// Similarity threshold, overriding the config.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add an object to memory from reference images; prints its id.
    Introduce {
        #[arg(long)]
        name: String,
        /// Generic class used to segment the object, e.g. "toy".
        #[arg(long)]
        category: String,
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
        images: Vec<PathBuf>,
    },
    /// Ask a question about an image; prints the answer.
    Infer {
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        #[arg(long)]
        question: String,
        /// Write the annotated image (PNG) here when something was detected.
        #[arg(long, value_name = "PATH")]
        save_annotated: Option<PathBuf>,
        /// Print answer, prompt and detections as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the benchmark over a dataset and write a metrics report.
    Eval {
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        /// JSON report path; a text table is printed to stdout.
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
        /// Recognition metrics only; the language model is never called.
        #[arg(long)]
        recognition_only: bool,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Inspect or edit the memory store.
    Memory {
        #[command(subcommand)]
        action: MemoryAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum MemoryAction {
    List {
        #[arg(long)]
        json: bool,
    },
    Remove { id: String },
    /// Copy the store to another directory.
    Export { path: PathBuf },
}

#[derive(Serialize)]
struct InferOutput<'a> {
    answer: &'a str,
    truncated: bool,
    prompt: &'a str,
    detections: &'a [DetectedInstance],
}

struct Session {
    cfg: AppConfig,
    store_path: PathBuf,
}

fn setup(cli: &Cli) -> Result<Session> {
    let mut cfg = AppConfig::discover(cli.config.as_deref())?;
    if let Some(tau) = cli.tau {
        cfg.retrieval.tau = tau;
    }
    let store_path = cli.store.clone().unwrap_or_else(|| cfg.store_path.clone());
    Ok(Session { cfg, store_path })
}

fn load_store(path: &Path) -> Result<MemoryStore> {
    memory::load(path).with_context(|| format!("loading memory store {}", path.display()))
}

fn save_store(store: &MemoryStore, path: &Path) -> Result<()> {
    memory::save(store, path).with_context(|| format!("saving memory store {}", path.display()))
}

fn list_table(store: &MemoryStore) -> String {
    let mut s = format!("{:<20} {:<24} {:<16} {:>5}  {}\n", "ID", "NAME", "CATEGORY", "VIEWS", "CONTEXT");
    for o in store.list_objects() {
        s.push_str(&format!(
            "{:<20} {:<24} {:<16} {:>5}  {}\n",
            o.id.as_str(), o.name, o.category, o.num_views, o.context
        ));
    }
    s
}

/// Executes one parsed command, writing normal output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let ctx = setup(cli)?;
    match &cli.command {
        Command::Introduce {
            name,
            category,
            context,
            images,
        } => {
            let reference_images = images
                .iter()
                .map(|p| ImagePayload::from_path(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let req = IntroductionRequest {
                name: name.clone(),
                context: context.clone(),
                category: category.clone(),
                reference_images,
            };
            let tools = ctx.cfg.tools()?;
            let mut store = load_store(&ctx.store_path)?;
            let id = pipeline::introduce_object(&req, &mut store, &tools)?;
            save_store(&store, &ctx.store_path)?;
            writeln!(out, "{id}")?;
        }
        Command::Infer {
            image,
            question,
            save_annotated,
            json,
        } => {
            let pcfg = ctx.cfg.pipeline_config()?;
            let tools = ctx.cfg.tools()?;
            let store = load_store(&ctx.store_path)?;
            let bytes = fs::read(image).with_context(|| format!("reading {}", image.display()))?;
            let result = pipeline::personalized_inference(&bytes, question, &store, &pcfg, &tools)?;
            if let (Some(path), Some(png)) = (save_annotated, &result.annotated_png) {
                fs::write(path, png).with_context(|| format!("writing {}", path.display()))?;
            }
            if *json {
                let o = InferOutput {
                    answer: &result.answer,
                    truncated: result.truncated,
                    prompt: &result.prompt_used,
                    detections: &result.detections,
                };
                writeln!(out, "{}", serde_json::to_string_pretty(&o)?)?;
            } else {
                writeln!(out, "{}", result.answer)?;
            }
        }
        Command::Eval {
            dataset,
            report,
            recognition_only,
            workers,
        } => {
            let pcfg = ctx.cfg.pipeline_config()?;
            let tools = ctx.cfg.tools()?;
            let ds = eval::load_dataset(dataset)?;
            let opts = BenchmarkOptions {
                recognition_only: *recognition_only,
                workers: *workers,
            };
            let metrics = eval::run_benchmark(&ds, &tools, &pcfg, opts)?;
            let mut text = serde_json::to_string_pretty(&metrics)?;
            text.push('\n');
            fs::write(report, text).with_context(|| format!("writing {}", report.display()))?;
            write!(out, "{}", eval::render_table(&metrics))?;
        }
        Command::Memory { action } => {
            let mut store = load_store(&ctx.store_path)?;
            match action {
                MemoryAction::List { json } => {
                    if *json {
                        writeln!(out, "{}", serde_json::to_string_pretty(&store.list_objects())?)?;
                    } else {
                        write!(out, "{}", list_table(&store))?;
                    }
                }
                MemoryAction::Remove { id } => {
                    let id = ObjectId::new(id.as_str())?;
                    let removed = store.remove_object(&id)?;
                    save_store(&store, &ctx.store_path)?;
                    writeln!(out, "removed {} ({})", removed.id, removed.name)?;
                }
                MemoryAction::Export { path } => {
                    save_store(&store, path)?;
                    writeln!(out, "exported {} objects to {}", store.len(), path.display())?;
                }
            }
        }
    }
    Ok(())
}

/// Parses the process arguments, runs the command and maps the outcome to
/// an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
