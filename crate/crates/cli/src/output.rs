//! Hash-stamped output files and their manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

const HASH_PREFIX: &str = "# config_hash=";

/// Output directory whose files all start with the run's config hash.
pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    experiment: &'a str,
    config_hash: &'a str,
    seed: u64,
    library_version: &'a str,
    files: &'a [String],
}

impl OutputDir {
    pub fn create(dir: &Path, hash: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes `body` after a hash comment line.
    pub fn write(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        let text = format!("{HASH_PREFIX}{}\n{body}", self.hash);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<command>.manifest.json` listing everything written so far.
    pub fn finish(self, command: &str, experiment: &str, seed: u64) -> CliResult<PathBuf> {
        let manifest = Manifest {
            command,
            experiment,
            config_hash: &self.hash,
            seed,
            library_version: lrd_deconv::VERSION,
            files: &self.files,
        };
        let path = self.dir.join(format!("{command}.manifest.json"));
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// A hash-stamped file read back: its hash and the remaining lines.
pub struct StampedFile {
    pub path: PathBuf,
    pub hash: String,
    pub body: String,
}

pub fn read_stamped(path: &Path) -> CliResult<StampedFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let hash = first
        .strip_prefix(HASH_PREFIX)
        .ok_or_else(|| CliError::Config(format!("{}: missing `{HASH_PREFIX}` header line", path.display())))?;
    Ok(StampedFile {
        path: path.to_path_buf(),
        hash: hash.trim().to_string(),
        body: body.to_string(),
    })
}

/// Errors unless every file carries `expected`.
pub fn check_hashes(files: &[&StampedFile], expected: &str) -> CliResult<()> {
    for f in files {
        if f.hash != expected {
            return Err(CliError::Config(format!(
                "{} was written under config hash {} but this run has {}; inputs from different configs cannot be mixed",
                f.path.display(),
                f.hash,
                expected
            )));
        }
    }
    Ok(())
}

/// Two-column plot data.
pub fn two_column(x_label: &str, y_label: &str, points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = format!("# {x_label} {y_label}\n");
    for (x, y) in points {
        out.push_str(&format!("{} {}\n", lrd_deconv::stats::fmt17(x), lrd_deconv::stats::fmt17(y)));
    }
    out
}
