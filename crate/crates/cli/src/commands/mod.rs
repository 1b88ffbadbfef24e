mod bench;
mod diagnose;
mod estimate;
mod simulate;

use std::path::PathBuf;

pub use bench::bench;
pub use diagnose::{characterize, eigencheck};
pub use estimate::estimate;
pub use simulate::simulate;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

/// A validated configuration with its resolved locations.
pub struct Context {
    pub config: RunConfig,
    /// Directory of the config file; table kernels resolve against it.
    pub base_dir: PathBuf,
    pub out: PathBuf,
    pub hash: String,
    pub dry_run: bool,
}

impl Context {
    pub fn new(config: RunConfig, base_dir: PathBuf, out: Option<PathBuf>, dry_run: bool) -> CliResult<Self> {
        config.validate(&base_dir)?;
        let hash = config.hash()?;
        let out = out
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
        Ok(Self {
            config,
            base_dir,
            out,
            hash,
            dry_run,
        })
    }

    fn output(&self) -> CliResult<OutputDir> {
        OutputDir::create(&self.out, &self.hash)
    }

    fn finish(&self, out: OutputDir, command: &str) -> CliResult<()> {
        let manifest = out.finish(command, &self.config.name, self.config.seed)?;
        println!("wrote {}", manifest.display());
        Ok(())
    }

    fn truth(&self, command: &str) -> CliResult<&crate::config::TruthSpec> {
        self.config
            .truth
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("`{command}` needs a [truth] section")))
    }
}
