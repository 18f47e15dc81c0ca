//! Beat-locked toy dances with lyric-bound motifs and a click-track soundtrack.
//!
//! With beat period `P` and phase `t0`, every base joint angle is a multiple of
//! `cos(pi (t - t0) / P)` or of its square, so joint speed vanishes on every
//! beat. While a lyric window is active, the token's joints additionally move
//! by `A sin^2(pi (t - t0) / P)`, which is also stationary on beats.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conditioning::{format_timing, save_wav, LyricWindow, Waveform};
use crate::skeleton::rotation::{axis_angle, mat_mul, identity3, Mat3};
use crate::skeleton::{joint, matrix_to_rot6d, MotionSequence, JOINT_COUNT, POSE_DIM};
use crate::tensor::Matrix;
use crate::{Error, Result};

use super::manifest::{split_key, ClipManifestEntry, Manifest, Split};
use super::motion_file::save_motion;

type Axis = [f64; 3];
const X: Axis = [1.0, 0.0, 0.0];
const Y: Axis = [0.0, 1.0, 0.0];
const Z: Axis = [0.0, 0.0, 1.0];

/// Joint sets a lyric token can drive, as (joint, axis, amplitude in radians).
/// None of them overlaps another or the base dance.
pub const MOTIF_SLOTS: [&[(usize, Axis, f64)]; 6] = [
    &[(joint::LEFT_SHOULDER, Z, 0.9), (joint::LEFT_ELBOW, Y, 0.7)],
    &[(joint::RIGHT_SHOULDER, Z, -0.9), (joint::RIGHT_ELBOW, Y, -0.7)],
    &[(joint::NECK, Y, 0.5), (joint::HEAD, X, 0.5)],
    &[(joint::SPINE2, Y, 0.45), (joint::SPINE3, X, 0.35)],
    &[(joint::LEFT_COLLAR, Y, 0.5), (joint::LEFT_WRIST, X, 0.9)],
    &[(joint::RIGHT_COLLAR, Y, -0.5), (joint::RIGHT_WRIST, X, 0.9)],
];

/// Base dance terms: `(joint, axis, amplitude, squared)`; `squared` uses `cos^2`.
const BASE: [(usize, Axis, f64, bool); 5] = [
    (joint::SPINE1, Z, 0.12, false),
    (joint::LEFT_HIP, X, 0.25, false),
    (joint::RIGHT_HIP, X, -0.25, false),
    (joint::LEFT_KNEE, X, 0.3, true),
    (joint::RIGHT_KNEE, X, 0.3, true),
];

const BEATS_PER_WINDOW: usize = 4;
const NOISE_TERMS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_clips: usize,
    pub clip_seconds: f64,
    pub fps: f64,
    pub bpm_min: f64,
    pub bpm_max: f64,
    pub motif_vocab: Vec<String>,
    /// Amplitude in radians of the smooth per-joint wobble.
    pub noise: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub test_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_clips: 100,
            clip_seconds: 6.0,
            fps: 60.0,
            bpm_min: 90.0,
            bpm_max: 150.0,
            motif_vocab: ["sun", "rain", "fire", "wind"].map(String::from).to_vec(),
            noise: 0.01,
            seed: 0,
            sample_rate: 44_100,
            test_fraction: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.motif_vocab.is_empty() || self.motif_vocab.len() > MOTIF_SLOTS.len() {
            return bad(format!("motif vocabulary needs 1..={} tokens, got {}", MOTIF_SLOTS.len(), self.motif_vocab.len()));
        }
        let mut v = self.motif_vocab.clone();
        v.sort();
        v.dedup();
        if v.len() != self.motif_vocab.len() || v.iter().any(|t| t.trim().is_empty() || t.contains(['\t', '\n'])) {
            return bad("motif tokens must be distinct single-line words".into());
        }
        if !(60.0 <= self.bpm_min && self.bpm_min <= self.bpm_max && self.bpm_max <= 180.0) {
            return bad(format!("bpm range [{}, {}] must lie within [60, 180]", self.bpm_min, self.bpm_max));
        }
        if !(self.clip_seconds > 0.0 && self.fps > 0.0 && self.noise >= 0.0 && self.sample_rate >= 8000) {
            return bad("clip length, fps and sample rate must be positive and noise nonnegative".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.clip_seconds * self.fps).round() as usize
    }
}

/// One generated clip with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticClip {
    pub id: String,
    pub bpm: f64,
    /// Time of the first beat, in `[0, period)`.
    pub phase: f64,
    pub beat_times: Vec<f64>,
    pub lyrics: Vec<LyricWindow>,
    /// Vocabulary index of each lyric window.
    pub tokens: Vec<usize>,
    pub motion: MotionSequence<f32>,
    pub wave: Waveform,
}

impl SyntheticClip {
    pub fn period(&self) -> f64 {
        60.0 / self.bpm
    }

    pub fn beat_frames(&self) -> Vec<usize> {
        let fps = self.motion.fps();
        let n = self.motion.frame_count();
        self.beat_times.iter().map(|b| (b * fps).round() as usize).filter(|&f| f < n).collect()
    }
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:04}")
}

struct Wobble {
    terms: Vec<[(f64, f64); NOISE_TERMS]>,
}

impl Wobble {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..JOINT_COUNT * 3)
            .map(|_| std::array::from_fn(|_| (rng.random_range(0.2..1.0), rng.random_range(0.0..2.0 * PI))))
            .collect();
        Wobble { terms }
    }

    fn angle(&self, channel: usize, t: f64) -> f64 {
        self.terms[channel].iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>() / (NOISE_TERMS as f64).sqrt()
    }
}

fn rotate(m: &mut Mat3<f64>, axis: &Axis, angle: f64) {
    *m = mat_mul(m, &axis_angle(axis, angle));
}

fn click_track(beats: &[f64], seconds: f64, sample_rate: u32) -> Waveform {
    let n = (seconds * sample_rate as f64).round() as usize;
    let mut samples = vec![0f32; n];
    let sr = sample_rate as f64;
    for &b in beats {
        let start = (b * sr).round() as usize;
        for (k, s) in samples.iter_mut().skip(start).take((0.03 * sr) as usize).enumerate() {
            let tau = k as f64 / sr;
            *s += (0.8 * (2.0 * PI * 1000.0 * tau).sin() * (-tau / 0.008).exp()) as f32;
        }
    }
    Waveform { samples, sample_rate }
}

/// Builds clip `index` of `spec`; each clip has its own random stream.
pub fn synthesize_clip(spec: &SyntheticSpec, index: usize) -> Result<SyntheticClip> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let bpm = rng.random_range(spec.bpm_min..=spec.bpm_max);
    let period = 60.0 / bpm;
    let phase = rng.random_range(0.0..period);
    let scale = rng.random_range(0.8..1.2);
    let wobble = Wobble::new(&mut rng);
    let dur = spec.clip_seconds;

    let beat_times: Vec<f64> = (0..).map(|k| phase + k as f64 * period).take_while(|&b| b < dur).collect();
    let mut lyrics = Vec::new();
    let mut tokens = Vec::new();
    let beat = |k: usize| phase + k as f64 * period;
    for k in (0..beat_times.len()).step_by(BEATS_PER_WINDOW) {
        let (start, end) = (beat(k), beat(k + BEATS_PER_WINDOW).min(dur));
        if end - start < period {
            break;
        }
        let tok = rng.random_range(0..spec.motif_vocab.len());
        lyrics.push(LyricWindow { start, end, text: spec.motif_vocab[tok].clone() });
        tokens.push(tok);
    }

    let n = spec.frames();
    let mut frames = Matrix::<f32>::zeros(n, POSE_DIM);
    for i in 0..n {
        let t = i as f64 / spec.fps;
        let c = (PI * (t - phase) / period).cos();
        let s2 = 1.0 - c * c;
        let mut rot = [identity3::<f64>(); JOINT_COUNT];
        for (j, axis, amp, squared) in BASE {
            rotate(&mut rot[j], &axis, scale * amp * if squared { c * c } else { c });
        }
        if let Some(w) = lyrics.iter().position(|w| w.start <= t && t < w.end) {
            for &(j, axis, amp) in MOTIF_SLOTS[tokens[w]] {
                rotate(&mut rot[j], &axis, amp * s2);
            }
        }
        if spec.noise > 0.0 {
            for (j, r) in rot.iter_mut().enumerate() {
                for (k, axis) in [X, Y, Z].iter().enumerate() {
                    rotate(r, axis, spec.noise * wobble.angle(3 * j + k, t));
                }
            }
        }
        let row = frames.row_mut(i);
        row[0] = (0.05 * scale * c) as f32;
        row[1] = (0.02 * scale * c * c) as f32;
        for (j, m) in rot.iter().enumerate() {
            let r6 = matrix_to_rot6d(m)?;
            for (dst, v) in row[3 + 6 * j..9 + 6 * j].iter_mut().zip(r6.0) {
                *dst = v as f32;
            }
        }
    }
    let id = clip_id(index);
    let motion = MotionSequence::new(frames, spec.fps, id.clone())?;
    let wave = click_track(&beat_times, dur, spec.sample_rate);
    Ok(SyntheticClip { id, bpm, phase, beat_times, lyrics, tokens, motion, wave })
}

/// Writes `motion/`, `audio/`, `lyrics/` and `manifest.jsonl` under `out_dir`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    for sub in ["motion", "audio", "lyrics"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(spec.n_clips);
    for i in 0..spec.n_clips {
        let clip = synthesize_clip(spec, i)?;
        let motion_path = format!("motion/{}.msq", clip.id);
        let audio_path = format!("audio/{}.wav", clip.id);
        let lyric_path = format!("lyrics/{}.tsv", clip.id);
        save_motion(&clip.motion, &out_dir.join(&motion_path))?;
        save_wav(&out_dir.join(&audio_path), &clip.wave)?;
        let lp = out_dir.join(&lyric_path);
        std::fs::write(&lp, format_timing(&clip.lyrics)).map_err(|e| Error::io(&lp, e))?;
        let split = if split_key(&clip.id, spec.seed) < spec.test_fraction { Split::Test } else { Split::Train };
        entries.push(ClipManifestEntry { id: clip.id, motion_path, audio_path, lyric_path, fps: spec.fps, split });
    }
    let manifest = Manifest::new(entries, out_dir)?;
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
