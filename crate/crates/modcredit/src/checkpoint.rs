//! Checkpoints as JSON files.

use std::fs;
use std::path::Path;

use anyhow::Context;
use modcredit_core::harness::{Checkpoint, Run};

pub fn save(path: &Path, cp: &Checkpoint) -> anyhow::Result<()> {
    let text = serde_json::to_string(cp)?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn load(path: &Path) -> anyhow::Result<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed checkpoint {}", path.display()))
}

pub fn resume(path: &Path) -> anyhow::Result<Run> {
    Ok(Run::restore(load(path)?)?)
}
