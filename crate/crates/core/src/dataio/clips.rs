use std::path::Path;

use crate::conditioning::{
    align_conditioning, embed_lyrics, extract_audio_features, load_timing, load_wav, ConditioningTrack,
    EmbeddedWindow, LyricEmbedder, LyricWindow, MAX_AUDIO_PAD,
};
use crate::conditioning::audio::features_to_matrix;
use crate::skeleton::MotionSequence;
use crate::{Error, Result};

use super::manifest::{ClipManifestEntry, Manifest};
use super::motion_file::load_motion;

/// A clip with its conditioning aligned frame for frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedClip {
    pub motion: MotionSequence<f32>,
    pub cond: ConditioningTrack<f32>,
    pub lyrics: Vec<LyricWindow>,
    pub embedded: Vec<EmbeddedWindow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindow {
    pub clip_id: String,
    pub start_frame: usize,
    pub motion: MotionSequence<f32>,
    pub cond: ConditioningTrack<f32>,
}

impl TrainingWindow {
    pub fn id(&self) -> String {
        format!("{}@{}", self.clip_id, self.start_frame)
    }
}

fn is_track(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ctk"))
}

/// Truncates, or repeats the last frame when the track is at most two frames short.
fn fit_track(track: ConditioningTrack<f32>, n: usize) -> Result<ConditioningTrack<f32>> {
    if track.len() >= n {
        return track.window(0, n);
    }
    if track.len() + MAX_AUDIO_PAD < n || track.is_empty() {
        return Err(Error::Invalid(format!("conditioning has {} frames but the motion has {n}", track.len())));
    }
    let last = track.len() - 1;
    let pick = |m: &crate::Matrix<f32>| crate::Matrix::from_fn(n, m.cols(), |r, c| m.get(r.min(last), c));
    ConditioningTrack::new(pick(track.audio()), pick(track.lyric()), track.fps())
}

pub fn load_clip(manifest: &Manifest, entry: &ClipManifestEntry, embedder: &dyn LyricEmbedder) -> Result<LoadedClip> {
    let mut motion: MotionSequence<f32> = load_motion(&manifest.resolve(&entry.motion_path))?;
    motion.clip_id = entry.id.clone();
    if (motion.fps() - entry.fps).abs() > 1e-3 * entry.fps {
        return Err(Error::Invalid(format!("clip {:?}: manifest fps {} but motion file has {}", entry.id, entry.fps, motion.fps())));
    }
    let n = motion.frame_count();
    let lyrics = if entry.lyric_path.is_empty() { Vec::new() } else { load_timing(&manifest.resolve(&entry.lyric_path))? };
    let embedded = embed_lyrics(&lyrics, embedder)?;
    let audio_path = manifest.resolve(&entry.audio_path);
    let cond = if is_track(&audio_path) {
        fit_track(ConditioningTrack::load(&audio_path)?, n)?
    } else {
        let wave = load_wav(&audio_path)?;
        let feats = features_to_matrix(&extract_audio_features(&wave.samples, wave.sample_rate, motion.fps())?);
        align_conditioning(&feats, &embedded, n, motion.fps())?.cast()
    };
    Ok(LoadedClip { motion, cond, lyrics, embedded })
}

/// `floor((n - w) / s) + 1` for `n >= w`, otherwise zero.
pub fn window_count(n: usize, window: usize, stride: usize) -> usize {
    if n < window || window == 0 || stride == 0 {
        0
    } else {
        (n - window) / stride + 1
    }
}

fn to_frames(seconds: f64, fps: f64) -> usize {
    (seconds * fps).round() as usize
}

pub fn window_clip(clip: &LoadedClip, window_seconds: f64, stride_seconds: f64) -> Result<Vec<TrainingWindow>> {
    if !(window_seconds > 0.0 && stride_seconds > 0.0) {
        return Err(Error::Invalid(format!("window {window_seconds} s and stride {stride_seconds} s must be positive")));
    }
    let fps = clip.motion.fps();
    let (w, s) = (to_frames(window_seconds, fps).max(1), to_frames(stride_seconds, fps).max(1));
    let n = clip.motion.frame_count();
    let count = window_count(n, w, s);
    if count == 0 {
        log::warn!("clip {} has {n} frames, shorter than the {w}-frame window; skipped", clip.motion.clip_id);
    }
    (0..count)
        .map(|k| {
            let start = k * s;
            Ok(TrainingWindow {
                clip_id: clip.motion.clip_id.clone(),
                start_frame: start,
                motion: clip.motion.window(start, w)?,
                cond: clip.cond.window(start, w)?,
            })
        })
        .collect()
}

/// Loads every clip and cuts it into windows, ordered by clip id then start frame.
pub fn window_clips(
    manifest: &Manifest,
    embedder: &dyn LyricEmbedder,
    window_seconds: f64,
    stride_seconds: f64,
) -> Result<Vec<TrainingWindow>> {
    let mut entries: Vec<&ClipManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for e in entries {
        out.extend(window_clip(&load_clip(manifest, e, embedder)?, window_seconds, stride_seconds)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{PoseVector, POSE_DIM};
    use crate::tensor::Matrix;

    fn clip(seconds: f64, fps: f64) -> LoadedClip {
        let n = (seconds * fps).round() as usize;
        let row = PoseVector::<f32>::rest().encode();
        let motion = MotionSequence::new(Matrix::from_fn(n, POSE_DIM, |_, c| row[c]), fps, "c").unwrap();
        LoadedClip { motion, cond: ConditioningTrack::silent(n, fps), lyrics: vec![], embedded: vec![] }
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_clip(&clip(12.0, 60.0), 6.0, 6.0).unwrap().len(), 2);
        assert_eq!(window_clip(&clip(6.0, 60.0), 6.0, 6.0).unwrap().len(), 1);
        assert_eq!(window_clip(&clip(5.0, 60.0), 6.0, 6.0).unwrap().len(), 0);
        let w = window_clip(&clip(10.0, 30.0), 4.0, 1.5).unwrap();
        assert_eq!(w.len(), ((10.0f64 - 4.0) / 1.5).floor() as usize + 1);
        assert_eq!(w.iter().map(|w| w.start_frame).collect::<Vec<_>>(), vec![0, 45, 90, 135, 180]);
        assert!(w.iter().all(|w| w.motion.frame_count() == 120 && w.cond.len() == 120));
    }

    #[test]
    fn track_fitting() {
        let t = ConditioningTrack::<f32>::silent(10, 30.0);
        assert_eq!(fit_track(t.clone(), 12).unwrap().len(), 12);
        assert_eq!(fit_track(t.clone(), 4).unwrap().len(), 4);
        assert!(fit_track(t, 13).is_err());
    }

    proptest::proptest! {
        #[test]
        fn window_count_formula(n in 0usize..2000, w in 1usize..400, s in 1usize..400) {
            let expected = if n >= w { (n - w) / s + 1 } else { 0 };
            proptest::prop_assert_eq!(window_count(n, w, s), expected);
            if expected > 0 {
                proptest::prop_assert!((expected - 1) * s + w <= n);
                proptest::prop_assert!(expected * s + w > n);
            }
        }
    }
}
