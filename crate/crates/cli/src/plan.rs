//! The invocation record written next to every artifact, and output paths.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Only environment variable the tool reads: a directory that relative
/// output paths are placed under.
pub const OUT_DIR_ENV: &str = "SAAM_OUT_DIR";

/// What was run, with every flag after defaults and the config file are
/// applied. Paths are recorded as given, so a run relocated with the output
/// directory override yields the same plan.
#[derive(Debug, Clone, Serialize)]
pub struct CommandPlan {
    pub subcommand: &'static str,
    pub version: &'static str,
    pub flags: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl CommandPlan {
    pub fn new<F: Serialize>(subcommand: &'static str, flags: &F) -> Result<Self> {
        Ok(Self {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            flags: serde_json::to_value(flags)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(mut self, path: Option<&Path>) -> Self {
        self.inputs.extend(path.map(Path::to_path_buf));
        self
    }

    pub fn output(mut self, path: Option<&Path>) -> Self {
        self.outputs.extend(path.map(Path::to_path_buf));
        self
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("plan is plain data")
    }
}

/// Resolve an output path against the override directory and create its
/// parent.
pub fn output_path(path: &Path) -> Result<PathBuf> {
    let resolved = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = resolved.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(resolved)
}

pub fn write_output(path: &Path, contents: &[u8]) -> Result<PathBuf> {
    let resolved = output_path(path)?;
    fs::write(&resolved, contents).with_context(|| format!("writing {}", resolved.display()))?;
    Ok(resolved)
}

/// Write `<artifact>.plan.json` holding the plan and an optional summary.
pub fn write_sidecar(artifact: &Path, plan: &CommandPlan, summary: Option<Value>) -> Result<()> {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".plan.json");
    let mut doc = serde_json::Map::new();
    doc.insert("plan".into(), plan.to_value());
    if let Some(s) = summary {
        doc.insert("summary".into(), s);
    }
    let text = saam::eval::report::to_json_string(&Value::Object(doc))?;
    write_output(Path::new(&name), text.as_bytes())?;
    Ok(())
}
