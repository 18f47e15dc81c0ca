use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::conditioning::EmbeddedWindow;
use crate::skeleton::{MotionSequence, Skeleton};
use crate::{Error, Result};

use super::beat::{beat_alignment, default_sigma};
use super::encoder::{clip_semantic_matching, MotionEncoder};
use super::features::{geometric_features, kinetic_features};
use super::fid::{diversity, fid, FeatureSet};

/// A generated clip together with what it was conditioned on.
#[derive(Clone, Debug)]
pub struct EvaluatedClip<'a> {
    pub motion: &'a MotionSequence<f32>,
    pub music_beats: Vec<usize>,
    pub lyrics: &'a [EmbeddedWindow],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub fid_k: f64,
    pub fid_g: f64,
    pub div_k: f64,
    pub div_g: f64,
    pub div_k_real: f64,
    pub div_g_real: f64,
    pub ba: MeanStd,
    /// `None` when no encoder was supplied.
    pub sm: Option<MeanStd>,
    pub real_clips: usize,
    pub generated_clips: usize,
    pub config_digest: String,
}

#[derive(Clone, Debug)]
pub struct EvaluationSettings {
    /// Beat kernel width in frames; `None` scales 3 frames at 60 fps.
    pub sigma: Option<f64>,
    pub diversity_seed: u64,
    pub config_digest: String,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings { sigma: None, diversity_seed: 0, config_digest: String::new() }
    }
}

fn features(clips: &[&MotionSequence<f32>], skeleton: &Skeleton<f32>) -> Result<(FeatureSet, FeatureSet)> {
    let mut k = FeatureSet::default();
    let mut g = FeatureSet::default();
    for c in clips {
        k.push(c.clip_id.clone(), kinetic_features(*c, skeleton)?.0.to_vec());
        g.push(c.clip_id.clone(), geometric_features(*c, skeleton)?.0.to_vec());
    }
    Ok((k, g))
}

/// Scores generated clips against real ones. Both sides are processed in clip
/// id order so the report does not depend on input order.
pub fn evaluate(
    real: &[MotionSequence<f32>],
    generated: &[EvaluatedClip<'_>],
    skeleton: &Skeleton<f32>,
    encoder: Option<&MotionEncoder<f32>>,
    settings: &EvaluationSettings,
) -> Result<EvaluationReport> {
    if real.len() < 2 || generated.len() < 2 {
        return Err(Error::Invalid(format!(
            "evaluation needs at least 2 real and 2 generated clips, got {} and {}",
            real.len(),
            generated.len()
        )));
    }
    let mut real: Vec<&MotionSequence<f32>> = real.iter().collect();
    real.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    let mut generated: Vec<&EvaluatedClip<'_>> = generated.iter().collect();
    generated.sort_by(|a, b| a.motion.clip_id.cmp(&b.motion.clip_id));
    let (rk, rg) = features(&real, skeleton)?;
    let gen_motion: Vec<&MotionSequence<f32>> = generated.iter().map(|c| c.motion).collect();
    let (gk, gg) = features(&gen_motion, skeleton)?;
    let mut ba = Vec::with_capacity(generated.len());
    let mut sm = Vec::with_capacity(generated.len());
    for c in &generated {
        let sigma = settings.sigma.unwrap_or_else(|| default_sigma(c.motion.fps()));
        ba.push(if c.music_beats.is_empty() {
            log::warn!("clip {} has no music beats; beat alignment is 0", c.motion.clip_id);
            0.0
        } else {
            beat_alignment(c.motion, skeleton, &c.music_beats, sigma)?
        });
        if let Some(enc) = encoder {
            sm.push(clip_semantic_matching(enc, c.motion, c.lyrics)?);
        }
    }
    let seed = settings.diversity_seed;
    Ok(EvaluationReport {
        fid_k: fid(&rk, &gk)?,
        fid_g: fid(&rg, &gg)?,
        div_k: diversity(&gk, seed)?,
        div_g: diversity(&gg, seed)?,
        div_k_real: diversity(&rk, seed)?,
        div_g_real: diversity(&rg, seed)?,
        ba: MeanStd::of(&ba),
        sm: encoder.map(|_| MeanStd::of(&sm)),
        real_clips: real.len(),
        generated_clips: generated.len(),
        config_digest: settings.config_digest.clone(),
    })
}

impl EvaluationReport {
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("fid_k", format!("{:.6}", self.fid_k));
        put("fid_g", format!("{:.6}", self.fid_g));
        put("div_k", format!("{:.6}", self.div_k));
        put("div_g", format!("{:.6}", self.div_g));
        put("div_k.real", format!("{:.6}", self.div_k_real));
        put("div_g.real", format!("{:.6}", self.div_g_real));
        put("ba.mean", format!("{:.6}", self.ba.mean));
        put("ba.std", format!("{:.6}", self.ba.std));
        match &self.sm {
            Some(sm) => {
                put("sm.mean", format!("{:.6}", sm.mean));
                put("sm.std", format!("{:.6}", sm.std));
            }
            None => {
                put("sm.mean", "none".into());
                put("sm.std", "none".into());
            }
        }
        put("clips.real", self.real_clips.to_string());
        put("clips.generated", self.generated_clips.to_string());
        put("config.digest", self.config_digest.clone());
        m
    }

    /// Sorted `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut m = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("report line {} is not key=value", i + 1)))?;
            m.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| m.get(k).ok_or_else(|| Error::Invalid(format!("report is missing {k}")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Invalid(format!("report value {k} is not a number")))
        };
        let count = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Invalid(format!("report value {k} is not a count")))
        };
        let sm = if get("sm.mean")? == "none" {
            None
        } else {
            Some(MeanStd { mean: num("sm.mean")?, std: num("sm.std")? })
        };
        let report = EvaluationReport {
            fid_k: num("fid_k")?,
            fid_g: num("fid_g")?,
            div_k: num("div_k")?,
            div_g: num("div_g")?,
            div_k_real: num("div_k.real")?,
            div_g_real: num("div_g.real")?,
            ba: MeanStd { mean: num("ba.mean")?, std: num("ba.std")? },
            sm,
            real_clips: count("clips.real")?,
            generated_clips: count("clips.generated")?,
            config_digest: get("config.digest")?.clone(),
        };
        if m.len() != report.to_map().len() {
            return Err(Error::Invalid("report has unexpected keys".into()));
        }
        Ok(report)
    }
}
