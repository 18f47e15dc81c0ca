use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

use super::lyrics::{check_disjoint, EmbeddedWindow};
use super::{ConditioningTrack, AUDIO_DIM, LYRIC_DIM};

/// How many frames the audio may fall short before alignment fails.
pub const MAX_AUDIO_PAD: usize = 2;

/// Builds an `n_frames` track. Audio is truncated, or padded by repeating its
/// last frame when it is at most two frames short. Frame `i` carries the
/// window containing `i / fps` (start inclusive, end exclusive), or zeros.
pub fn align_conditioning<S: Scalar>(
    audio: &Matrix<S>,
    lyrics: &[EmbeddedWindow],
    n_frames: usize,
    fps: f64,
) -> Result<ConditioningTrack<S>> {
    if audio.cols() != AUDIO_DIM {
        return Err(Error::shape("audio feature width", AUDIO_DIM, audio.cols()));
    }
    if audio.rows() + MAX_AUDIO_PAD < n_frames || (audio.rows() == 0 && n_frames > 0) {
        return Err(Error::Invalid(format!("audio has {} frames but {n_frames} are needed", audio.rows())));
    }
    check_disjoint(lyrics.iter().map(|w| (w.start, w.end)).collect())?;
    let mut a = Matrix::zeros(n_frames, AUDIO_DIM);
    for i in 0..n_frames {
        a.row_mut(i).copy_from_slice(audio.row(i.min(audio.rows() - 1)));
    }
    let mut l = Matrix::zeros(n_frames, LYRIC_DIM);
    for w in lyrics {
        if w.embedding.len() != LYRIC_DIM {
            return Err(Error::shape("lyric embedding", LYRIC_DIM, w.embedding.len()));
        }
        let first = (w.start * fps).ceil().max(0.0) as usize;
        for i in first..n_frames {
            let t = i as f64 / fps;
            if t >= w.end {
                break;
            }
            if t >= w.start {
                for (dst, &v) in l.row_mut(i).iter_mut().zip(&w.embedding) {
                    *dst = S::of(v);
                }
            }
        }
    }
    ConditioningTrack::new(a, l, fps)
}
