//! Timed lyric windows and their 768-wide embeddings.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

use super::LYRIC_DIM;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"LYE1";

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// First eight bytes, little-endian, of the SHA-256 of the normalized text.
pub fn text_hash(text: &str) -> u64 {
    let digest = Sha256::digest(normalize_text(text).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub trait LyricEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Deterministic stand-in for a text model: the text hash seeds a generator
/// that draws 768 normals, scaled to unit length.
#[derive(Clone, Copy, Debug, Default)]
pub struct HashEmbedder;

impl LyricEmbedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(text_hash(text));
        let v: Vec<f64> = (0..LYRIC_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Embeddings loaded from a file, keyed by text hash.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedEmbeddings {
    table: HashMap<u64, Vec<f32>>,
}

impl PrecomputedEmbeddings {
    pub fn insert(&mut self, text: &str, v: Vec<f32>) -> Result<()> {
        if v.len() != LYRIC_DIM {
            return Err(Error::shape("lyric embedding", LYRIC_DIM, v.len()));
        }
        self.table.insert(text_hash(text), v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut keys: Vec<&u64> = self.table.keys().collect();
        keys.sort();
        let mut out = Vec::with_capacity(8 + keys.len() * (8 + 4 * LYRIC_DIM));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(keys.len() as u32).to_le_bytes());
        for k in keys {
            out.extend_from_slice(&k.to_le_bytes());
            for v in &self.table[k] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: &str| Error::Parse { what: "embedding file", offset: offset as u64, message: message.into() };
        if bytes.get(..4) != Some(EMBEDDING_MAGIC) {
            return Err(err(0, "bad magic"));
        }
        let count = u32::from_le_bytes(bytes.get(4..8).ok_or_else(|| err(4, "truncated header"))?.try_into().expect("4 bytes"));
        let entry = 8 + 4 * LYRIC_DIM;
        let mut table = HashMap::with_capacity(count as usize);
        let mut at = 8;
        for _ in 0..count {
            let chunk = bytes.get(at..at + entry).ok_or_else(|| err(at, "truncated entry"))?;
            let key = u64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
            let v: Vec<f32> = chunk[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(err(at + 8 + 4 * i, "non-finite embedding value"));
            }
            table.insert(key, v);
            at += entry;
        }
        if at != bytes.len() {
            return Err(err(at, "trailing bytes"));
        }
        Ok(PrecomputedEmbeddings { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

impl LyricEmbedder for PrecomputedEmbeddings {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.table
            .get(&text_hash(text))
            .map(|v| v.iter().map(|&x| x as f64).collect())
            .ok_or_else(|| Error::MissingEmbedding(text.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyricWindow {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedWindow {
    pub start: f64,
    pub end: f64,
    pub embedding: Vec<f64>,
}

/// Parses `start<TAB>end<TAB>text` lines; blank lines are skipped.
pub fn parse_timing(text: &str) -> Result<Vec<LyricWindow>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse { what: "lyric timing", offset: at as u64, message: m };
        let mut parts = line.splitn(3, '\t');
        let (Some(s), Some(e), Some(t)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected start<TAB>end<TAB>text".into()));
        };
        let start: f64 = s.trim().parse().map_err(|_| err(format!("bad start time {s:?}")))?;
        let end: f64 = e.trim().parse().map_err(|_| err(format!("bad end time {e:?}")))?;
        if !(start.is_finite() && end.is_finite() && start >= 0.0 && start < end) {
            return Err(err(format!("window [{start}, {end}) must satisfy 0 <= start < end")));
        }
        out.push(LyricWindow { start, end, text: t.to_string() });
    }
    Ok(out)
}

pub fn format_timing(windows: &[LyricWindow]) -> String {
    windows.iter().map(|w| format!("{}\t{}\t{}\n", w.start, w.end, w.text)).collect()
}

pub fn load_timing(path: &Path) -> Result<Vec<LyricWindow>> {
    parse_timing(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub(crate) fn check_disjoint(mut spans: Vec<(f64, f64)>) -> Result<()> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingWindows(w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    Ok(())
}

/// Maps each window to one embedding from `provider`.
pub fn embed_lyrics(windows: &[LyricWindow], provider: &dyn LyricEmbedder) -> Result<Vec<EmbeddedWindow>> {
    for w in windows {
        if !(w.start < w.end) {
            return Err(Error::Invalid(format!("lyric window [{}, {}) is empty", w.start, w.end)));
        }
    }
    check_disjoint(windows.iter().map(|w| (w.start, w.end)).collect())?;
    windows
        .iter()
        .map(|w| {
            let embedding = provider.embed(&w.text)?;
            if embedding.len() != LYRIC_DIM || embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("provider returned a bad embedding for {:?}", w.text)));
            }
            Ok(EmbeddedWindow { start: w.start, end: w.end, embedding })
        })
        .collect()
}
