use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

use super::{AUDIO_DIM, LYRIC_DIM};

/// Frame-aligned audio features and lyric embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningTrack<S> {
    audio: Matrix<S>,
    lyric: Matrix<S>,
    fps: f64,
}

impl<S: Scalar> ConditioningTrack<S> {
    pub fn new(audio: Matrix<S>, lyric: Matrix<S>, fps: f64) -> Result<Self> {
        if audio.cols() != AUDIO_DIM {
            return Err(Error::shape("audio feature width", AUDIO_DIM, audio.cols()));
        }
        if lyric.cols() != LYRIC_DIM {
            return Err(Error::shape("lyric embedding width", LYRIC_DIM, lyric.cols()));
        }
        if audio.rows() != lyric.rows() {
            return Err(Error::shape("lyric track length", audio.rows(), lyric.rows()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        if !audio.all_finite() || !lyric.all_finite() {
            return Err(Error::NonFinite("conditioning track".into()));
        }
        Ok(ConditioningTrack { audio, lyric, fps })
    }

    /// A track with zero audio and no active lyrics.
    pub fn silent(frames: usize, fps: f64) -> Self {
        ConditioningTrack { audio: Matrix::zeros(frames, AUDIO_DIM), lyric: Matrix::zeros(frames, LYRIC_DIM), fps }
    }

    pub fn len(&self) -> usize {
        self.audio.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.rows() == 0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn audio(&self) -> &Matrix<S> {
        &self.audio
    }

    pub fn lyric(&self) -> &Matrix<S> {
        &self.lyric
    }

    /// Audio and lyric columns side by side, `N × 803`.
    pub fn features(&self) -> Matrix<S> {
        Matrix::hstack(&[&self.audio, &self.lyric]).expect("track parts share a length")
    }

    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::shape("conditioning window end", self.len(), start + len));
        }
        Ok(ConditioningTrack {
            audio: self.audio.slice_rows(start..start + len),
            lyric: self.lyric.slice_rows(start..start + len),
            fps: self.fps,
        })
    }

    pub fn cast<T: Scalar>(&self) -> ConditioningTrack<T> {
        ConditioningTrack { audio: self.audio.cast(), lyric: self.lyric.cast(), fps: self.fps }
    }

    /// `CTK1`, u16 version, f32 fps, u32 frames, u16 audio width, u16 lyric
    /// width, then per frame the audio and lyric values as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + 4 * self.len() * (AUDIO_DIM + LYRIC_DIM));
        out.extend_from_slice(TRACK_MAGIC);
        out.extend_from_slice(&TRACK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.fps as f32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(AUDIO_DIM as u16).to_le_bytes());
        out.extend_from_slice(&(LYRIC_DIM as u16).to_le_bytes());
        for i in 0..self.len() {
            for v in self.audio.row(i).iter().chain(self.lyric.row(i)) {
                out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse { what: "conditioning track", offset: offset as u64, message };
        let field = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| err(at, "unexpected end of file".into()));
        if field(0, 4)? != TRACK_MAGIC {
            return Err(err(0, "bad magic".into()));
        }
        let version = u16::from_le_bytes(field(4, 2)?.try_into().expect("2 bytes"));
        if version != TRACK_VERSION {
            return Err(err(4, format!("unsupported version {version}")));
        }
        let fps = f32::from_le_bytes(field(6, 4)?.try_into().expect("4 bytes")) as f64;
        let frames = u32::from_le_bytes(field(10, 4)?.try_into().expect("4 bytes")) as usize;
        let a = u16::from_le_bytes(field(14, 2)?.try_into().expect("2 bytes")) as usize;
        let l = u16::from_le_bytes(field(16, 2)?.try_into().expect("2 bytes")) as usize;
        if a != AUDIO_DIM || l != LYRIC_DIM {
            return Err(err(14, format!("unsupported widths {a}/{l}")));
        }
        let body = field(18, frames * (a + l) * 4)?;
        if bytes.len() != 18 + body.len() {
            return Err(err(18 + body.len(), "trailing bytes".into()));
        }
        let vals: Vec<S> = body.chunks_exact(4).map(|c| S::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect();
        let audio = Matrix::from_fn(frames, a, |r, c| vals[r * (a + l) + c]);
        let lyric = Matrix::from_fn(frames, l, |r, c| vals[r * (a + l) + a + c]);
        Self::new(audio, lyric, fps).map_err(|e| err(18, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub const TRACK_MAGIC: &[u8; 4] = b"CTK1";
pub const TRACK_VERSION: u16 = 1;
