use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One line of a manifest. Relative paths are resolved against the manifest's
/// directory. `audio_path` is either a WAV file or a `.ctk` track; an empty
/// `lyric_path` means the clip has no lyrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipManifestEntry {
    pub id: String,
    pub motion_path: String,
    pub audio_path: String,
    pub lyric_path: String,
    pub fps: f64,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ClipManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ClipManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Manifest { entries, base_dir: base_dir.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() {
                return Err(Error::Invalid("manifest entry with empty id".into()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate clip id {:?}", e.id)));
            }
            if !(e.fps.is_finite() && e.fps > 0.0) {
                return Err(Error::Invalid(format!("clip {:?} has fps {}", e.id, e.fps)));
            }
        }
        Ok(())
    }

    /// Parses JSON lines; blank lines are skipped.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            if line.trim().is_empty() {
                continue;
            }
            let e: ClipManifestEntry = serde_json::from_str(line.trim())
                .map_err(|e| Error::Parse { what: "manifest", offset: at as u64, message: e.to_string() })?;
            entries.push(e);
        }
        Self::new(entries, base_dir)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, base)?;
        for e in &m.entries {
            for p in [&e.motion_path, &e.audio_path, &e.lyric_path] {
                if !p.is_empty() && !m.resolve(p).is_file() {
                    return Err(Error::Invalid(format!("clip {:?} references missing file {}", e.id, m.resolve(p).display())));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_split(&self, split: Split) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Copy with every relative path rewritten against `base_dir`, so the
    /// manifest can be saved elsewhere.
    pub fn rebased(&self, base_dir: &Path) -> Manifest {
        let abs = |p: &String| {
            if p.is_empty() {
                String::new()
            } else {
                let full = self.resolve(p);
                full.strip_prefix(base_dir).map(Path::to_path_buf).unwrap_or(full).to_string_lossy().into_owned()
            }
        };
        Manifest {
            entries: self
                .entries
                .iter()
                .map(|e| ClipManifestEntry {
                    motion_path: abs(&e.motion_path),
                    audio_path: abs(&e.audio_path),
                    lyric_path: abs(&e.lyric_path),
                    ..e.clone()
                })
                .collect(),
            base_dir: base_dir.to_path_buf(),
        }
    }
}

/// Uniform in [0, 1), from the SHA-256 of the seed and the clip id.
pub(crate) fn split_key(id: &str, seed: u64) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    (u64::from_le_bytes(d[..8].try_into().expect("32-byte digest")) >> 11) as f64 / (1u64 << 53) as f64
}

/// Assigns each clip independently by its hashed id and returns the train and
/// test halves with their `split` fields rewritten.
pub fn split_dataset(manifest: &Manifest, test_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Invalid(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut train = Manifest { entries: Vec::new(), base_dir: manifest.base_dir.clone() };
    let mut test = train.clone();
    for e in &manifest.entries {
        if split_key(&e.id, seed) < test_fraction {
            test.entries.push(ClipManifestEntry { split: Split::Test, ..e.clone() });
        } else {
            train.entries.push(ClipManifestEntry { split: Split::Train, ..e.clone() });
        }
    }
    Ok((train, test))
}
