#![allow(dead_code)]

pub mod dataset;
pub mod demo;
pub mod synth;

use std::path::Path;
use std::process::{Command, Output};

pub fn pekit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pekit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PEKIT_CONFIG")
        .output()
        .expect("pekit binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
