//! Per-frame audio features: onset envelope, MFCC, chroma, onset peaks and beats.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::tensor::Matrix;
use crate::{Error, Result};

use super::AUDIO_DIM;

pub const FFT_SIZE: usize = 1024;
pub const MEL_BANDS: usize = 40;
pub const MFCC_COUNT: usize = 20;
pub const CHROMA_BINS: usize = 12;
/// Floor applied to mel energies before the natural logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
pub const MIN_SAMPLE_RATE: u32 = 8000;
/// DP beat tracker penalty on deviations from the estimated period.
pub const BEAT_TIGHTNESS: f64 = 100.0;

pub const ONSET_COL: usize = 0;
pub const MFCC_COLS: std::ops::Range<usize> = 1..21;
pub const CHROMA_COLS: std::ops::Range<usize> = 21..33;
pub const PEAK_COL: usize = 33;
pub const BEAT_COL: usize = 34;

#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatureFrame {
    pub onset: f64,
    pub mfcc: [f64; MFCC_COUNT],
    pub chroma: [f64; CHROMA_BINS],
    pub peak: bool,
    pub beat: bool,
}

impl AudioFeatureFrame {
    pub fn to_array(&self) -> [f64; AUDIO_DIM] {
        let mut out = [0.0; AUDIO_DIM];
        out[ONSET_COL] = self.onset;
        out[MFCC_COLS].copy_from_slice(&self.mfcc);
        out[CHROMA_COLS].copy_from_slice(&self.chroma);
        out[PEAK_COL] = if self.peak { 1.0 } else { 0.0 };
        out[BEAT_COL] = if self.beat { 1.0 } else { 0.0 };
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != AUDIO_DIM {
            return Err(Error::shape("audio feature frame", AUDIO_DIM, v.len()));
        }
        let mut mfcc = [0.0; MFCC_COUNT];
        mfcc.copy_from_slice(&v[MFCC_COLS]);
        let mut chroma = [0.0; CHROMA_BINS];
        chroma.copy_from_slice(&v[CHROMA_COLS]);
        Ok(AudioFeatureFrame { onset: v[ONSET_COL], mfcc, chroma, peak: v[PEAK_COL] > 0.5, beat: v[BEAT_COL] > 0.5 })
    }
}

/// Mono samples and their rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads 16-bit integer or 32-bit float PCM; multi-channel input is averaged to mono.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Audio(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            reader.samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<std::result::Result<_, _>>()?
        }
        (hound::SampleFormat::Float, 32) => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Audio(format!("{}: unsupported sample format {fmt:?} {bits}-bit", path.display())))
        }
    };
    let samples =
        interleaved.chunks(channels).map(|c| c.iter().sum::<f32>() / channels as f32).collect();
    Ok(Waveform { samples, sample_rate: spec.sample_rate })
}

/// Writes mono 32-bit float PCM.
pub fn save_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale between 0 Hz and Nyquist, `MEL_BANDS × (FFT_SIZE/2 + 1)`.
fn mel_filterbank(sample_rate: f64) -> Vec<Vec<f64>> {
    let bins = FFT_SIZE / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..MEL_BANDS + 2).map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64)).collect();
    (0..MEL_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / FFT_SIZE as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II rows `0..MFCC_COUNT` over `MEL_BANDS` inputs.
fn dct_matrix() -> Vec<Vec<f64>> {
    let n = MEL_BANDS as f64;
    (0..MFCC_COUNT)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..MEL_BANDS).map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n).cos()).collect()
        })
        .collect()
}

fn hann() -> Vec<f64> {
    (0..FFT_SIZE).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / FFT_SIZE as f64).cos()).collect()
}

/// Number of feature frames for a clip: `ceil(duration * fps)`.
pub fn frame_count(samples: usize, sample_rate: u32, fps: f64) -> usize {
    let frames = (samples as f64 / sample_rate as f64 * fps).ceil() as usize;
    // Guard against ceil rounding up an exact product by one ulp.
    let exact = samples as f64 * fps / sample_rate as f64;
    if (exact - exact.round()).abs() < 1e-9 {
        exact.round() as usize
    } else {
        frames
    }
}

/// Magnitude spectra of Hann-windowed frames centred at `round(i * sr / fps)`.
fn spectrogram(samples: &[f32], sample_rate: u32, fps: f64, frames: usize) -> Vec<Vec<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(FFT_SIZE);
    let window = hann();
    let hop = sample_rate as f64 / fps;
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    (0..frames)
        .map(|i| {
            let centre = (i as f64 * hop).round() as i64;
            let start = centre - (FFT_SIZE / 2) as i64;
            for (k, b) in buf.iter_mut().enumerate() {
                let idx = start + k as i64;
                let s = if idx >= 0 && (idx as usize) < samples.len() { samples[idx as usize] as f64 } else { 0.0 };
                *b = Complex::new(s * window[k], 0.0);
            }
            fft.process(&mut buf);
            buf[..FFT_SIZE / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

fn mfcc_frame(mag: &[f64], fb: &[Vec<f64>], dct: &[Vec<f64>]) -> [f64; MFCC_COUNT] {
    let logmel: Vec<f64> = fb
        .iter()
        .map(|w| {
            let e: f64 = w.iter().zip(mag).map(|(w, m)| w * m * m).sum();
            e.max(LOG_FLOOR).ln()
        })
        .collect();
    let mut out = [0.0; MFCC_COUNT];
    for (o, row) in out.iter_mut().zip(dct) {
        *o = row.iter().zip(&logmel).map(|(a, b)| a * b).sum();
    }
    out
}

/// Pitch-class profile from spectral peaks. Each local maximum of the
/// magnitude spectrum between 50 Hz and 5 kHz is refined by parabolic
/// interpolation and its power is added to the nearest pitch class
/// (C = 0, ..., A = 9). The profile is scaled so its largest entry is 1.
fn chroma_frame(mag: &[f64], sample_rate: f64) -> [f64; CHROMA_BINS] {
    let mut out = [0.0; CHROMA_BINS];
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return out;
    }
    let floor = max * 1e-3;
    let bin_hz = sample_rate / FFT_SIZE as f64;
    for k in 1..mag.len() - 1 {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        if b <= floor || b <= a || b < c {
            continue;
        }
        let (la, lb, lc) = (a.max(1e-300).ln(), b.ln(), c.max(1e-300).ln());
        let denom = la - 2.0 * lb + lc;
        let delta = if denom.abs() > 1e-12 { (0.5 * (la - lc) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let f = (k as f64 + delta) * bin_hz;
        if !(50.0..=5000.0).contains(&f) {
            continue;
        }
        let pc = (12.0 * (f / 440.0).log2()).round() as i64 + 9;
        out[pc.rem_euclid(12) as usize] += b * b;
    }
    let top = out.iter().cloned().fold(0.0, f64::max);
    if top > 0.0 {
        for v in out.iter_mut() {
            *v /= top;
        }
    }
    out
}

/// Half-wave-rectified flux of log-compressed magnitudes, averaged over bins.
fn onset_envelope(spec: &[Vec<f64>]) -> Vec<f64> {
    let mut prev = vec![0.0; FFT_SIZE / 2 + 1];
    spec.iter()
        .map(|mag| {
            let cur: Vec<f64> = mag.iter().map(|m| (1.0 + 100.0 * m).ln()).collect();
            let flux = cur.iter().zip(&prev).map(|(c, p)| (c - p).max(0.0)).sum::<f64>() / cur.len() as f64;
            prev = cur;
            flux
        })
        .collect()
}

/// Local maxima of the envelope above the mean plus one standard deviation
/// of a window of half a second on either side.
pub fn pick_peaks(onset: &[f64], fps: f64) -> Vec<bool> {
    let n = onset.len();
    let half = (fps * 0.5).round().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let v = onset[i];
            if v <= 1e-12 {
                return false;
            }
            let left = if i > 0 { onset[i - 1] } else { 0.0 };
            let right = if i + 1 < n { onset[i + 1] } else { 0.0 };
            if v <= left || v < right {
                return false;
            }
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let w = &onset[lo..hi];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
            v > mean + var.sqrt()
        })
        .collect()
}

/// Beat period in frames from the onset autocorrelation, weighted by a
/// log-normal preference centred on 120 BPM.
pub fn estimate_period(onset: &[f64], fps: f64) -> Option<f64> {
    let n = onset.len();
    let mean = onset.iter().sum::<f64>() / n.max(1) as f64;
    let centred: Vec<f64> = onset.iter().map(|v| v - mean).collect();
    if centred.iter().all(|v| v.abs() < 1e-12) {
        return None;
    }
    let min_lag = (fps * 60.0 / 240.0).floor().max(1.0) as usize;
    let max_lag = ((fps * 60.0 / 40.0).ceil() as usize).min(n.saturating_sub(1));
    if min_lag + 1 >= max_lag {
        return None;
    }
    let ac = |lag: usize| centred.iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n - lag) as f64;
    let scores: Vec<(usize, f64, f64)> = (min_lag..=max_lag)
        .map(|lag| {
            let bpm = 60.0 * fps / lag as f64;
            let prior = (-0.5 * (bpm / 120.0).log2().powi(2)).exp();
            (lag, ac(lag), prior)
        })
        .collect();
    let (best, _) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1 .1 * a.1 .2).total_cmp(&(b.1 .1 * b.1 .2)))
        .map(|(i, s)| (i, s.0))?;
    if scores[best].1 <= 0.0 {
        return None;
    }
    let lag = scores[best].0 as f64;
    // Parabolic refinement on the raw autocorrelation.
    if best > 0 && best + 1 < scores.len() {
        let (a, b, c) = (scores[best - 1].1, scores[best].1, scores[best + 1].1);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            return Some(lag + (0.5 * (a - c) / denom).clamp(-0.5, 0.5));
        }
    }
    Some(lag)
}

/// Dynamic-programming beat placement: every beat rewards onset strength and
/// pays `tightness * ln(gap / period)^2` for its distance to the previous beat.
pub fn track_beats(onset: &[f64], period: f64, tightness: f64) -> Vec<usize> {
    let n = onset.len();
    let std = {
        let mean = onset.iter().sum::<f64>() / n.max(1) as f64;
        (onset.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    if n == 0 || std <= 1e-12 || period < 1.0 {
        return Vec::new();
    }
    let o: Vec<f64> = onset.iter().map(|v| v / std).collect();
    let mut score = vec![0.0; n];
    let mut back: Vec<Option<usize>> = vec![None; n];
    let lo = (period / 2.0).round() as usize;
    let hi = (2.0 * period).round() as usize;
    for t in 0..n {
        let mut best: Option<(usize, f64)> = None;
        if t >= lo.max(1) {
            let start = t.saturating_sub(hi);
            for tau in start..=t - lo.max(1) {
                let gap = (t - tau) as f64;
                let s = score[tau] - tightness * (gap / period).ln().powi(2);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((tau, s));
                }
            }
        }
        match best {
            Some((tau, s)) if s > 0.0 => {
                score[t] = o[t] + s;
                back[t] = Some(tau);
            }
            _ => score[t] = o[t],
        }
    }
    // The last beat is the best-scoring frame within one period of the end
    // that sits on an onset.
    let tail = n.saturating_sub(period.ceil() as usize);
    let last = (tail..n).filter(|&t| o[t] > 0.0).max_by(|&a, &b| score[a].total_cmp(&score[b]));
    let Some(mut t) = last else { return Vec::new() };
    let mut beats = vec![t];
    while let Some(p) = back[t] {
        beats.push(p);
        t = p;
    }
    beats.reverse();
    beats
}

/// Extracts one 35-wide feature row per motion frame.
pub fn extract_audio_features(samples: &[f32], sample_rate: u32, fps: f64) -> Result<Vec<AudioFeatureFrame>> {
    if sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::Audio(format!("sample rate {sample_rate} below {MIN_SAMPLE_RATE}")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
    }
    if samples.len() < FFT_SIZE {
        return Err(Error::Audio(format!(
            "waveform of {} samples is shorter than one {FFT_SIZE}-sample analysis window",
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Audio(format!("non-finite sample at index {i}")));
    }
    let frames = frame_count(samples.len(), sample_rate, fps);
    let spec = spectrogram(samples, sample_rate, fps, frames);
    let fb = mel_filterbank(sample_rate as f64);
    let dct = dct_matrix();
    let onset = onset_envelope(&spec);
    let peaks = pick_peaks(&onset, fps);
    let mut beat = vec![false; frames];
    if let Some(period) = estimate_period(&onset, fps) {
        for b in track_beats(&onset, period, BEAT_TIGHTNESS) {
            beat[b] = true;
        }
    }
    Ok((0..frames)
        .map(|i| AudioFeatureFrame {
            onset: onset[i],
            mfcc: mfcc_frame(&spec[i], &fb, &dct),
            chroma: chroma_frame(&spec[i], sample_rate as f64),
            peak: peaks[i],
            beat: beat[i],
        })
        .collect())
}

pub fn features_to_matrix(frames: &[AudioFeatureFrame]) -> Matrix<f64> {
    let mut m = Matrix::zeros(frames.len(), AUDIO_DIM);
    for (i, f) in frames.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&f.to_array());
    }
    m
}
