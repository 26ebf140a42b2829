use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cocsi_core::config::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.raw.canonical().as_bytes()))
}

/// Run record written next to the artifacts of one command.
pub struct Manifest<'a> {
    pub command: &'a str,
    pub cfg: &'a ExperimentConfig,
    pub artifacts: Vec<PathBuf>,
}

impl Manifest<'_> {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "config_sha256: {}", config_hash(self.cfg));
        let _ = writeln!(s, "dataset_seed: {}", self.cfg.dataset.seed);
        let _ = writeln!(s, "train_seed: {}", self.cfg.train.seed);
        let seeds: Vec<String> = self.cfg.eval.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "eval_seeds: {}", seeds.join(","));
        let _ = writeln!(s, "deterministic: {}", self.cfg.train.deterministic);
        s.push_str("artifacts:\n");
        for a in &self.artifacts {
            let _ = writeln!(s, "  {}", a.display());
        }
        s.push_str("config:\n");
        for line in self.cfg.raw.canonical().lines() {
            let _ = writeln!(s, "  {line}");
        }
        s
    }

    pub fn write(&self, out: &Path) -> CliResult<PathBuf> {
        let path = out.join(format!("manifest-{}.txt", self.command));
        std::fs::write(&path, self.render()).map_err(CliError::io(&path))?;
        Ok(path)
    }
}
