pub mod adapters;
pub mod cli;
pub mod config;
pub mod eval;
pub mod features;
pub mod memory;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
