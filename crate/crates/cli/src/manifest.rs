//! Run manifest written beside every command's outputs. Fields are limited
//! to reproducibility inputs (no timestamps), so identical runs write
//! identical manifests.

use std::path::Path;

use anyhow::{Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub inputs: Vec<&'a str>,
    pub config: Option<&'a str>,
    pub seed: Option<u64>,
    pub out: &'a str,
}

pub fn write(dir: &Path, m: &Manifest) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("command = {}\n", m.command));
    for input in &m.inputs {
        text.push_str(&format!("input = {input}\n"));
    }
    if let Some(config) = m.config {
        text.push_str(&format!("config = {config}\n"));
    }
    if let Some(seed) = m.seed {
        text.push_str(&format!("seed = {seed}\n"));
    }
    text.push_str(&format!("out = {}\n", m.out));
    text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    let path = dir.join("manifest.txt");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
