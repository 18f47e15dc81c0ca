//! Motion encoder trained to agree with frozen lyric embeddings.

use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::conditioning::{EmbeddedWindow, LYRIC_DIM};
use crate::nn::{AdamConfig, AdamState, Bound, Init, ParamLayout};
use crate::scalar::Scalar;
use crate::skeleton::{MotionSequence, POSE_DIM};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const ENCODER_MAGIC: &[u8; 4] = b"LME1";
/// Frames on each side of the centre frame seen by the first layer.
const CONTEXT: usize = 1;
const INPUT_DIM: usize = (2 * CONTEXT + 1) * POSE_DIM;
/// Shortest motion slice used as a training pair.
pub const MIN_PAIR_FRAMES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub width: usize,
    pub temperature: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            width: 128,
            temperature: 0.07,
            batch_size: 32,
            steps: 400,
            adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
            seed: 0,
        }
    }
}

/// One motion slice and the lyric embedding active over it.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair<S> {
    pub id: String,
    pub motion: Matrix<S>,
    pub lyric: Vec<f64>,
}

/// Frame-stacked input: each row holds the previous, current and next pose,
/// clamped at the ends, with the root translation centred on the clip mean.
fn encoder_input<S: Scalar>(frames: &Matrix<S>) -> Matrix<S> {
    let n = frames.rows();
    let inv = S::one() / S::of(n as f64);
    let mut centre = [S::zero(); 3];
    for r in 0..n {
        for k in 0..3 {
            centre[k] = centre[k] + frames.get(r, k) * inv;
        }
    }
    let mut out = Matrix::zeros(n, INPUT_DIM);
    for r in 0..n {
        for (slot, d) in (-(CONTEXT as isize)..=CONTEXT as isize).enumerate() {
            let src = (r as isize + d).clamp(0, n as isize - 1) as usize;
            let dst = &mut out.row_mut(r)[slot * POSE_DIM..(slot + 1) * POSE_DIM];
            dst.copy_from_slice(frames.row(src));
            for k in 0..3 {
                dst[k] = dst[k] - centre[k];
            }
        }
    }
    out
}

/// Stacked temporal layer, a per-frame hidden layer, mean pooling over the
/// clip and a linear head onto the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionEncoder<S> {
    width: usize,
    layout: ParamLayout,
    params: Vec<S>,
}

fn layout(width: usize) -> ParamLayout {
    let mut l = ParamLayout::default();
    l.add("conv.w", INPUT_DIM, width, Init::FanIn(1.0));
    l.add("conv.b", 1, width, Init::Zeros);
    l.add("hidden.w", width, width, Init::FanIn(1.0));
    l.add("hidden.b", 1, width, Init::Zeros);
    l.add("head.w", width, LYRIC_DIM, Init::FanIn(1.0));
    l.add("head.b", 1, LYRIC_DIM, Init::Zeros);
    l
}

impl<S: Scalar> MotionEncoder<S> {
    pub fn new(width: usize, seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::Invalid("encoder width must be positive".into()));
        }
        let layout = layout(width);
        let params = layout.init(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(MotionEncoder { width, layout, params })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    fn graph(&self, g: &mut Graph<S>, p: &Bound<'_>, clips: &[&Matrix<S>]) -> Result<Var> {
        let mut segments: Vec<Range<usize>> = Vec::with_capacity(clips.len());
        let mut inputs = Vec::with_capacity(clips.len());
        let mut at = 0;
        for c in clips {
            if c.cols() != POSE_DIM {
                return Err(Error::shape("encoder input", POSE_DIM, c.cols()));
            }
            if c.rows() == 0 {
                return Err(Error::Invalid("encoder input has no frames".into()));
            }
            inputs.push(encoder_input(c));
            segments.push(at..at + c.rows());
            at += c.rows();
        }
        let x = g.constant(Matrix::vstack(&inputs.iter().collect::<Vec<_>>())?);
        let h = g.matmul(x, p.get("conv.w"));
        let h = g.add_row(h, p.get("conv.b"));
        let h = g.silu(h);
        let h2 = g.matmul(h, p.get("hidden.w"));
        let h2 = g.add_row(h2, p.get("hidden.b"));
        let h2 = g.silu(h2);
        let h = g.add(h, h2);
        let pooled = g.segment_mean(h, segments);
        let e = g.matmul(pooled, p.get("head.w"));
        let e = g.add_row(e, p.get("head.b"));
        Ok(g.normalize_rows(e))
    }

    /// Unit-norm embeddings, one per clip.
    pub fn embed_batch(&self, clips: &[&Matrix<S>]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let p = self.layout.bind(&mut g, &self.params, false);
        let e = self.graph(&mut g, &p, clips)?;
        let v = g.value(e);
        (0..v.rows())
            .map(|r| {
                let row: Vec<f64> = v.row(r).iter().map(|x| x.to_f64_lossy()).collect();
                unit(&row).ok_or_else(|| Error::Numeric("motion embedding vanished".into()))
            })
            .collect()
    }

    pub fn embed(&self, motion: &Matrix<S>) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&[motion])?.remove(0))
    }

    /// `LME1`, u32 width, u64 parameter count, parameters as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.params.len());
        out.extend_from_slice(ENCODER_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse { what: "encoder file", offset: offset as u64, message };
        if bytes.len() < 16 {
            return Err(err(bytes.len(), "truncated header".into()));
        }
        if &bytes[..4] != ENCODER_MAGIC {
            return Err(err(0, "bad magic".into()));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let layout = layout(width);
        if width == 0 || count != layout.len() {
            return Err(err(8, format!("width {width} needs {} parameters, header says {count}", layout.len())));
        }
        if bytes.len() != 16 + 4 * count {
            return Err(err(bytes.len().min(16 + 4 * count), format!("expected {} bytes, found {}", 16 + 4 * count, bytes.len())));
        }
        let params = bytes[16..].chunks_exact(4).map(|c| S::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect();
        Ok(MotionEncoder { width, layout, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    match (unit(a), unit(b)) {
        (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0),
        _ => 0.0,
    }
}

/// Slices the motion over every lyric window. Frame `i` belongs to a window
/// when `start <= i / fps < end`; slices under [`MIN_PAIR_FRAMES`] are dropped.
pub fn lyric_pairs<S: Scalar>(motion: &MotionSequence<S>, windows: &[EmbeddedWindow]) -> Vec<EncoderPair<S>> {
    let fps = motion.fps();
    let n = motion.frame_count();
    windows
        .iter()
        .filter_map(|w| {
            let a = ((w.start * fps).ceil().max(0.0) as usize).min(n);
            let b = ((w.end * fps).ceil().max(0.0) as usize).min(n);
            (b >= a + MIN_PAIR_FRAMES).then(|| EncoderPair {
                id: format!("{}@{a}", motion.clip_id),
                motion: motion.frames().slice_rows(a..b),
                lyric: w.embedding.clone(),
            })
        })
        .collect()
}

/// Groups identical lyric embeddings; returns the group of every pair.
fn lyric_groups<S>(pairs: &[EncoderPair<S>]) -> Vec<usize> {
    let mut keys: Vec<Vec<u64>> = Vec::new();
    pairs
        .iter()
        .map(|p| {
            let k: Vec<u64> = p.lyric.iter().map(|v| v.to_bits()).collect();
            keys.iter().position(|x| *x == k).unwrap_or_else(|| {
                keys.push(k);
                keys.len() - 1
            })
        })
        .collect()
}

/// Symmetric contrastive loss over one batch; pairs sharing a lyric share the
/// target mass of their row.
fn contrastive_loss<S: Scalar>(
    enc: &MotionEncoder<S>,
    pairs: &[&EncoderPair<S>],
    groups: &[usize],
    temperature: f64,
) -> Result<(S, Vec<S>)> {
    let mut g = Graph::new();
    let p = enc.layout.bind(&mut g, &enc.params, true);
    let clips: Vec<&Matrix<S>> = pairs.iter().map(|p| &p.motion).collect();
    let m = enc.graph(&mut g, &p, &clips)?;
    let b = pairs.len();
    let mut lyr = Matrix::zeros(LYRIC_DIM, b);
    for (j, pair) in pairs.iter().enumerate() {
        let u = unit(&pair.lyric).ok_or_else(|| Error::Invalid(format!("pair {} has a zero lyric embedding", pair.id)))?;
        for (i, v) in u.iter().enumerate() {
            lyr.set(i, j, S::of(*v));
        }
    }
    let lyr = g.constant(lyr);
    let logits = g.matmul(m, lyr);
    let logits = g.scale(logits, S::of(1.0 / temperature));
    let mut targets = Matrix::zeros(b, b);
    for i in 0..b {
        let same = groups.iter().filter(|&&x| x == groups[i]).count();
        for j in 0..b {
            if groups[j] == groups[i] {
                targets.set(i, j, S::of(1.0 / same as f64));
            }
        }
    }
    let forward = g.soft_cross_entropy(logits, targets.clone());
    let lt = g.transpose(logits);
    let backward = g.soft_cross_entropy(lt, targets);
    let total = g.add(forward, backward);
    let loss = g.scale(total, S::of(0.5));
    let grads = g.backward(loss)?;
    Ok((g.value(loss).item(), p.gather(&grads)))
}

/// Trains on `pairs` and returns the encoder with its per-step losses.
pub fn train_motion_encoder<S: Scalar>(
    pairs: &[EncoderPair<S>],
    config: &EncoderConfig,
) -> Result<(MotionEncoder<S>, Vec<f64>)> {
    if !(config.temperature > 0.0) || config.batch_size < 2 {
        return Err(Error::Invalid("encoder needs a positive temperature and a batch of at least 2".into()));
    }
    let groups_all = lyric_groups(pairs);
    if groups_all.iter().all(|&g| g == 0) {
        return Err(Error::Invalid("all lyric embeddings are identical; the contrastive task is degenerate".into()));
    }
    let mut enc = MotionEncoder::new(config.width, config.seed)?;
    let mut opt = AdamState::new(enc.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let b = config.batch_size.min(pairs.len());
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let idx = sample(&mut rng, pairs.len(), b).into_vec();
        let batch: Vec<&EncoderPair<S>> = idx.iter().map(|&i| &pairs[i]).collect();
        let groups: Vec<usize> = idx.iter().map(|&i| groups_all[i]).collect();
        let (loss, grads) = contrastive_loss(&enc, &batch, &groups, config.temperature)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("encoder loss at step {step}")));
        }
        opt.update(&config.adam, &mut enc.params, &grads);
        losses.push(loss.to_f64_lossy());
    }
    Ok((enc, losses))
}

/// Cosine between the motion embedding and the lyric embedding; 0 with a
/// warning when the lyric embedding is zero.
pub fn semantic_matching<S: Scalar>(enc: &MotionEncoder<S>, motion: &Matrix<S>, lyric: &[f64]) -> Result<f64> {
    if lyric.iter().all(|&v| v == 0.0) {
        log::warn!("semantic matching on a clip without lyrics is defined as 0");
        return Ok(0.0);
    }
    Ok(cosine(&enc.embed(motion)?, lyric))
}

/// Mean score over the lyric windows of a clip; 0 with a warning when it has none.
pub fn clip_semantic_matching<S: Scalar>(
    enc: &MotionEncoder<S>,
    motion: &MotionSequence<S>,
    windows: &[EmbeddedWindow],
) -> Result<f64> {
    let pairs = lyric_pairs(motion, windows);
    if pairs.is_empty() {
        log::warn!("clip {} has no lyric windows; semantic matching is 0", motion.clip_id);
        return Ok(0.0);
    }
    let mut total = 0.0;
    for p in &pairs {
        total += semantic_matching(enc, &p.motion, &p.lyric)?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub matched: f64,
    pub mismatched: f64,
    pub margin: f64,
    /// Fraction of pairs whose own lyric scores highest among the distinct lyrics.
    pub top1: f64,
    pub candidates: usize,
}

/// Scores every pair against each distinct lyric embedding present in `pairs`.
pub fn retrieval_report<S: Scalar>(enc: &MotionEncoder<S>, pairs: &[EncoderPair<S>]) -> Result<RetrievalReport> {
    let groups = lyric_groups(pairs);
    let k = groups.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Invalid("retrieval needs at least two distinct lyrics".into()));
    }
    let reps: Vec<&[f64]> = (0..k).map(|c| pairs[groups.iter().position(|&g| g == c).expect("group exists")].lyric.as_slice()).collect();
    let (mut matched, mut mismatched, mut hits) = (0.0, 0.0, 0usize);
    for chunk in pairs.chunks(64).zip(groups.chunks(64)) {
        let clips: Vec<&Matrix<S>> = chunk.0.iter().map(|p| &p.motion).collect();
        for (e, &gi) in enc.embed_batch(&clips)?.iter().zip(chunk.1) {
            let scores: Vec<f64> = reps.iter().map(|r| cosine(e, r)).collect();
            matched += scores[gi];
            mismatched += scores.iter().enumerate().filter(|(c, _)| *c != gi).map(|(_, s)| s).sum::<f64>() / (k - 1) as f64;
            let best = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(c, _)| c);
            if best == Some(gi) {
                hits += 1;
            }
        }
    }
    let n = pairs.len() as f64;
    Ok(RetrievalReport {
        matched: matched / n,
        mismatched: mismatched / n,
        margin: (matched - mismatched) / n,
        top1: hits as f64 / n,
        candidates: k,
    })
}
