//! Run manifests: every subcommand records its configuration, the tool
//! version, and the seed next to its outputs, so any run can be reproduced
//! from the manifest alone.

use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

use echoface::error::{Error, Result};

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            tool: "echoface",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Refuse to clobber existing output unless `force` is set.
pub fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::data(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

/// Create the output directory, refusing to reuse a non-empty one without
/// `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::data(format!(
                "{} exists and is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Expand a list of feature-file arguments, accepting directories of
/// `.eeds` files.
pub fn collect_feature_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|x| x == "eeds").unwrap_or(false))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::data("no feature files found"));
    }
    Ok(files)
}
