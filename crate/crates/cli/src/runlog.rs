use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::CliError;

/// SHA-256 over `blob <len>\0` followed by the content, as git hashes blobs.
pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(lm2d::Error::io(path, e)))?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}

/// Sorted `key=value` record of one command run.
#[derive(Debug)]
pub struct RunLog {
    entries: BTreeMap<String, String>,
    phase: Option<(String, Instant)>,
}

impl RunLog {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("command".into(), command.to_string());
        entries.insert("config.digest".into(), cfg.digest());
        entries.insert("seed".into(), cfg.text("seed").to_string());
        for (k, v) in cfg.entries() {
            entries.insert(format!("config.{k}"), v.clone());
        }
        RunLog { entries, phase: None }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.set(format!("input.{name}.path"), path.display());
        self.set(format!("input.{name}.sha256"), file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.set(format!("output.{name}.path"), path.display());
        self.set(format!("output.{name}.sha256"), file_digest(path)?);
        Ok(())
    }

    /// Ends the running phase, if any, and starts timing `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        log::info!("phase {name}");
        self.phase = Some((name.to_string(), Instant::now()));
    }

    pub fn end_phase(&mut self) {
        if let Some((name, t)) = self.phase.take() {
            self.set(format!("time.{name}_seconds"), format!("{:.3}", t.elapsed().as_secs_f64()));
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={}", v.replace('\n', " "));
        }
        out
    }

    pub fn write(&mut self, path: &Path) -> Result<(), CliError> {
        self.end_phase();
        std::fs::write(path, self.to_text()).map_err(|e| CliError::Data(lm2d::Error::io(path, e)))
    }

    /// Parses a written log back into its entries.
    pub fn parse(text: &str) -> BTreeMap<String, String> {
        text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}
