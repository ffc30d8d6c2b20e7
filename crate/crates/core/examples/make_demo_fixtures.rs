//! Regenerates the shipped three-object fixture set.
//!
//!     cargo run --example make_demo_fixtures [-- <output dir>]

#[path = "../tests/common/demo.rs"]
mod demo;
#[path = "../tests/common/synth.rs"]
mod synth;

use std::path::PathBuf;

fn main() {
    let root = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(demo::fixture_root);
    if root.exists() {
        std::fs::remove_dir_all(&root).expect("clearing old fixtures");
    }
    demo::build(&root);
    println!("wrote {}", root.display());
}
