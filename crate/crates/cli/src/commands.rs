use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use lm2d::conditioning::audio::BEAT_COL;
use lm2d::conditioning::{HashEmbedder, LyricEmbedder, PrecomputedEmbeddings};
use lm2d::consistency::{cd_train_step, sample_onestep, ConsistencyModel, DistillConfig, DistillState};
use lm2d::dataio::{
    generate_synthetic_dataset, load_clip, load_motion, save_motion, window_clip, ClipManifestEntry, LoadedClip,
    Manifest, Split, SyntheticSpec, TrainingWindow,
};
use lm2d::diffusion::{
    train_step, Checkpoint, DenoiserModel, DiffusionSchedule, Example, LossWeights, ModelKind, TimeDistribution,
    TrainConfig,
};
use lm2d::metrics::{
    evaluate, lyric_pairs, retrieval_report, train_motion_encoder, EncoderConfig, EncoderPair, EvaluatedClip,
    EvaluationSettings, MotionEncoder,
};
use lm2d::nn::{AdamConfig, AdamState, NetworkConfig};
use lm2d::sampling::{sample_multistep, Counting, SamplerConfig, SolverMethod};
use lm2d::skeleton::{MotionSequence, Skeleton};
use lm2d::{Matrix, COND_DIM, POSE_DIM};

use crate::config::{hex, RunConfig};
use crate::pool::par_map;
use crate::runlog::RunLog;
use crate::{CliError, Command};

type Res<T> = Result<T, CliError>;

pub const TEACHER_FILE: &str = "teacher.ckpt";
pub const STUDENT_FILE: &str = "student.ckpt";
pub const ENCODER_FILE: &str = "encoder.lme";
pub const REPORT_FILE: &str = "report.kv";
pub const RUN_LOG_FILE: &str = "run.log";
pub const CONFIG_FILE: &str = "config.kv";
pub const SAMPLES_DIR: &str = "samples";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(lm2d::Error::io(path, e))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Res<()> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let p = out.join(CONFIG_FILE);
    std::fs::write(&p, cfg.canonical()).map_err(|e| io_err(&p, e))
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Res<()> {
    let out = &command.common().out;
    prepare_out(out, cfg)?;
    let mut log = RunLog::new(command.name(), cfg);
    let result = match command {
        Command::MakeSynthetic { .. } => make_synthetic(cfg, out, &mut log),
        Command::ExtractFeatures { manifest, .. } => extract_features(cfg, manifest, out, &mut log),
        Command::Train { manifest, .. } => train(cfg, manifest, out, &mut log),
        Command::Distill { manifest, teacher, .. } => distill(cfg, manifest, teacher, out, &mut log),
        Command::Sample { manifest, checkpoint, steps, one_step, .. } => {
            sample(cfg, manifest, checkpoint, *steps, *one_step, out, &mut log)
        }
        Command::Evaluate { manifest, samples, encoder, .. } => {
            evaluate_cmd(cfg, manifest, samples, encoder.as_deref(), out, &mut log)
        }
        Command::EncoderTrain { manifest, .. } => encoder_train(cfg, manifest, out, &mut log),
    };
    if let Err(e) = &result {
        log.set("status", format!("failed: {e}"));
        log.set("exit_code", e.exit_code());
    } else {
        log.set("status", "ok");
        log.set("exit_code", 0);
    }
    log.write(&out.join(RUN_LOG_FILE))?;
    result
}

fn schedule(cfg: &RunConfig) -> Res<DiffusionSchedule<f32>> {
    let s = DiffusionSchedule {
        epsilon: cfg.float("schedule.epsilon") as f32,
        t_max: cfg.float("schedule.t_max") as f32,
        sigma_data: cfg.float("schedule.sigma_data") as f32,
        n_grid: cfg.count("schedule.n_grid"),
        rho: cfg.float("schedule.rho") as f32,
    };
    s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(s)
}

fn network_config(cfg: &RunConfig) -> Res<NetworkConfig> {
    let n = NetworkConfig {
        feature_dim: POSE_DIM,
        cond_dim: COND_DIM,
        width: cfg.count("model.width"),
        blocks: cfg.count("model.blocks"),
        heads: cfg.count("model.heads"),
        mlp_ratio: cfg.count("model.mlp_ratio"),
        self_attention: cfg.flag("model.self_attention"),
        cross_attention: cfg.flag("model.cross_attention"),
    };
    n.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(n)
}

fn adam(cfg: &RunConfig, lr_key: &str) -> AdamConfig {
    AdamConfig {
        learning_rate: cfg.float(lr_key),
        beta1: cfg.float("train.beta1"),
        beta2: cfg.float("train.beta2"),
        epsilon: cfg.float("train.adam_epsilon"),
        clip_norm: cfg.opt_float("train.clip_norm"),
    }
}

fn embedder(cfg: &RunConfig, log: &mut RunLog) -> Res<Box<dyn LyricEmbedder + Sync>> {
    match cfg.text("data.lyric_embeddings") {
        "hash" => Ok(Box::new(HashEmbedder)),
        path => {
            let p = PathBuf::from(path);
            log.input("lyric_embeddings", &p)?;
            Ok(Box::new(PrecomputedEmbeddings::load(&p)?))
        }
    }
}

fn split_filter(cfg: &RunConfig) -> Res<Option<Split>> {
    match cfg.text("sample.split") {
        "train" => Ok(Some(Split::Train)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        other => Err(CliError::Usage(format!("sample.split must be train, test or all, got {other:?}"))),
    }
}

fn open_manifest(path: &Path, log: &mut RunLog) -> Res<Manifest> {
    log.input("manifest", path)?;
    let m = Manifest::load(path)?;
    let mut h = Sha256::new();
    for e in &m.entries {
        for p in [&e.motion_path, &e.audio_path, &e.lyric_path] {
            if !p.is_empty() {
                h.update(crate::runlog::file_digest(&m.resolve(p))?.as_bytes());
            }
        }
    }
    log.set("input.clips.sha256", hex(&h.finalize()));
    log.set("input.clips.count", m.len());
    Ok(m)
}

fn load_clips(cfg: &RunConfig, manifest: &Manifest, split: Option<Split>, log: &mut RunLog) -> Res<Vec<LoadedClip>> {
    let emb = embedder(cfg, log)?;
    let mut entries: Vec<&ClipManifestEntry> =
        manifest.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let loaded = par_map(cfg.count("threads"), &entries, |e| load_clip(manifest, e, emb.as_ref()));
    Ok(loaded.into_iter().collect::<Result<Vec<_>, _>>()?)
}

fn windows_of(cfg: &RunConfig, clips: &[LoadedClip]) -> Res<Vec<TrainingWindow>> {
    let mut out = Vec::new();
    for c in clips {
        out.extend(window_clip(c, cfg.float("data.window_seconds"), cfg.float("data.stride_seconds"))?);
    }
    if out.is_empty() {
        return Err(CliError::Data(lm2d::Error::Invalid("no clip is long enough for one window".into())));
    }
    Ok(out)
}

/// First window of each clip, kept with the clip it came from.
fn first_windows(cfg: &RunConfig, clips: Vec<LoadedClip>) -> Res<Vec<(TrainingWindow, LoadedClip)>> {
    let mut out = Vec::new();
    for c in clips {
        if let Some(w) = window_clip(&c, cfg.float("data.window_seconds"), cfg.float("data.window_seconds"))?.into_iter().next() {
            out.push((w, c));
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(lm2d::Error::Invalid("no clip is long enough for one window".into())));
    }
    Ok(out)
}

/// Per-clip seed derived from the run seed and the clip id.
fn clip_seed(seed: u64, id: &str) -> u64 {
    let d = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(id.as_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

fn write_losses(path: &Path, header: &str, rows: &[String]) -> Res<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Mean of the first and of the last `k` values.
fn moving_averages(losses: &[f64], k: usize) -> (f64, f64) {
    let k = k.min(losses.len()).max(1);
    let head = losses[..k].iter().sum::<f64>() / k as f64;
    let tail = losses[losses.len() - k..].iter().sum::<f64>() / k as f64;
    (head, tail)
}

fn make_synthetic(cfg: &RunConfig, out: &Path, log: &mut RunLog) -> Res<()> {
    let spec = SyntheticSpec {
        n_clips: cfg.count("synthetic.n_clips"),
        clip_seconds: cfg.float("synthetic.clip_seconds"),
        fps: cfg.float("synthetic.fps"),
        bpm_min: cfg.float("synthetic.bpm_min"),
        bpm_max: cfg.float("synthetic.bpm_max"),
        motif_vocab: cfg.text("synthetic.vocab").split(',').map(|s| s.trim().to_string()).collect(),
        noise: cfg.float("synthetic.noise"),
        seed: cfg.u64("seed"),
        sample_rate: 44_100,
        test_fraction: cfg.float("synthetic.test_fraction"),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log.phase("generate");
    let m = generate_synthetic_dataset(&spec, out)?;
    log.end_phase();
    log.set("synthetic.clips", m.len());
    log.set("synthetic.test_clips", m.with_split(Split::Test).len());
    log.output("manifest", &out.join("manifest.jsonl"))?;
    Ok(())
}

fn extract_features(cfg: &RunConfig, manifest: &Path, out: &Path, log: &mut RunLog) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    log.phase("extract");
    let clips = load_clips(cfg, &m, None, log)?;
    let tracks = out.join("tracks");
    std::fs::create_dir_all(&tracks).map_err(|e| io_err(&tracks, e))?;
    let out_abs = std::path::absolute(out).map_err(|e| io_err(out, e))?;
    let mut rebased = m.rebased(&out_abs);
    rebased.entries.sort_by(|a, b| a.id.cmp(&b.id));
    for (e, c) in rebased.entries.iter_mut().zip(&clips) {
        let rel = format!("tracks/{}.ctk", e.id);
        c.cond.save(&out.join(&rel))?;
        e.audio_path = rel;
    }
    log.end_phase();
    let mp = out.join("manifest.jsonl");
    rebased.save(&mp)?;
    log.set("extract.clips", clips.len());
    log.output("manifest", &mp)?;
    Ok(())
}

fn train(cfg: &RunConfig, manifest: &Path, out: &Path, log: &mut RunLog) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    let sched = schedule(cfg)?;
    let net = network_config(cfg)?;
    log.phase("load");
    let clips = load_clips(cfg, &m, Some(Split::Train), log)?;
    let windows = windows_of(cfg, &clips)?;
    let conds: Vec<Matrix<f32>> = windows.iter().map(|w| w.cond.features()).collect();
    let ids: Vec<String> = windows.iter().map(TrainingWindow::id).collect();
    log.set("train.windows", windows.len());
    log.phase("train");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("seed"));
    let mut model = DenoiserModel::<f32>::new(net, sched.sigma_data, &mut rng)?;
    let mut opt = AdamState::new(model.params().len());
    let tc = TrainConfig {
        weights: LossWeights { lambda_pos: cfg.float("loss.lambda_pos"), lambda_vel: cfg.float("loss.lambda_vel") },
        adam: adam(cfg, "train.learning_rate"),
        time: TimeDistribution { log_mean: cfg.float("train.time_log_mean"), log_std: cfg.float("train.time_log_std") },
    };
    tc.weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let skel = Skeleton::<f32>::canonical();
    let steps = cfg.count("train.steps");
    let batch = cfg.count("train.batch_size").max(1);
    let mut losses = Vec::with_capacity(steps);
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..windows.len())).collect();
        let ex: Vec<Example<'_, f32>> = idx
            .iter()
            .map(|&i| Example { motion: windows[i].motion.frames(), cond: Some(&conds[i]), id: &ids[i] })
            .collect();
        let r = train_step(&mut model, &ex, &sched, Some(&skel), &tc, &mut opt, &mut rng)?;
        losses.push(r.total as f64);
        rows.push(format!("{}\t{}\t{}\t{}\t{}", step + 1, r.total, r.reconstruction, r.positions, r.velocity));
        if (step + 1) % 100 == 0 {
            log::info!("train step {} loss {:.4}", step + 1, r.total);
        }
    }
    log.end_phase();
    log.set("train.params", model.params().len());
    if !losses.is_empty() {
        let (head, tail) = moving_averages(&losses, 100);
        log.set("train.loss.first100_mean", head);
        log.set("train.loss.last100_mean", tail);
    }
    write_losses(&out.join("losses.tsv"), "step\ttotal\treconstruction\tpositions\tvelocity", &rows)?;
    let ck = out.join(TEACHER_FILE);
    model.save(&sched, &ck)?;
    log.output("checkpoint", &ck)?;
    Ok(())
}

fn distill(cfg: &RunConfig, manifest: &Path, teacher: &Path, out: &Path, log: &mut RunLog) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    log.input("teacher", teacher)?;
    let ck = Checkpoint::load(teacher)?;
    ck.expect_kind(ModelKind::Diffusion)
        .map_err(|e| CliError::Usage(format!("distill needs a diffusion teacher: {e}")))?;
    let (model, sched) = DenoiserModel::<f32>::from_checkpoint(&ck)?;
    log.phase("load");
    let clips = load_clips(cfg, &m, Some(Split::Train), log)?;
    let windows = windows_of(cfg, &clips)?;
    let conds: Vec<Matrix<f32>> = windows.iter().map(|w| w.cond.features()).collect();
    let ids: Vec<String> = windows.iter().map(TrainingWindow::id).collect();
    log.phase("distill");
    let solver: SolverMethod = cfg.text("distill.solver").parse().map_err(|e: lm2d::Error| CliError::Usage(e.to_string()))?;
    let dc = DistillConfig { mu: cfg.float("distill.mu"), adam: adam(cfg, "distill.learning_rate"), solver };
    let mut state = DistillState::new(&model, &sched, dc).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("seed"));
    let batch = cfg.count("distill.batch_size").max(1);
    let steps = cfg.count("distill.steps");
    let mut losses = Vec::with_capacity(steps);
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..windows.len())).collect();
        let ex: Vec<Example<'_, f32>> = idx
            .iter()
            .map(|&i| Example { motion: windows[i].motion.frames(), cond: Some(&conds[i]), id: &ids[i] })
            .collect();
        let r = cd_train_step(&mut state, &model, &ex, &mut rng)?;
        losses.push(r.loss as f64);
        rows.push(format!("{}\t{}", step + 1, r.loss));
        if (step + 1) % 100 == 0 {
            log::info!("distill step {} loss {:.5}", step + 1, r.loss);
        }
    }
    log.end_phase();
    if !losses.is_empty() {
        let (head, tail) = moving_averages(&losses, 100);
        log.set("distill.loss.first100_mean", head);
        log.set("distill.loss.last100_mean", tail);
    }
    write_losses(&out.join("losses.tsv"), "step\tloss", &rows)?;
    let path = out.join(STUDENT_FILE);
    state.target_model().save(&path)?;
    log.output("checkpoint", &path)?;
    Ok(())
}

enum Sampler {
    Multi(DenoiserModel<f32>, DiffusionSchedule<f32>, usize, SolverMethod),
    One(ConsistencyModel<f32>),
}

fn sample(
    cfg: &RunConfig,
    manifest: &Path,
    checkpoint: &Path,
    steps: Option<usize>,
    one_step: bool,
    out: &Path,
    log: &mut RunLog,
) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    log.input("checkpoint", checkpoint)?;
    let ck = Checkpoint::load(checkpoint)?;
    let sampler = if one_step {
        ck.expect_kind(ModelKind::Consistency)
            .map_err(|e| CliError::Usage(format!("--one-step needs a consistency checkpoint: {e}")))?;
        Sampler::One(ConsistencyModel::from_checkpoint(&ck)?)
    } else {
        ck.expect_kind(ModelKind::Diffusion)
            .map_err(|e| CliError::Usage(format!("multi-step sampling needs a diffusion checkpoint: {e}")))?;
        let (model, sched) = DenoiserModel::<f32>::from_checkpoint(&ck)?;
        let n = steps.unwrap_or_else(|| cfg.count("sample.steps"));
        if n == 0 {
            return Err(CliError::Usage("--steps must be at least 1".into()));
        }
        let method: SolverMethod = cfg.text("sample.method").parse().map_err(|e: lm2d::Error| CliError::Usage(e.to_string()))?;
        Sampler::Multi(model, sched, n, method)
    };
    log.phase("load");
    let clips = load_clips(cfg, &m, split_filter(cfg)?, log)?;
    let windows = first_windows(cfg, clips)?;
    log.phase("sample");
    let dir = out.join(SAMPLES_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let seed = cfg.u64("seed");
    let results = par_map(cfg.count("threads"), &windows, |(w, _)| -> Res<(MotionSequence<f32>, usize, f64)> {
        let s = clip_seed(seed, &w.clip_id);
        let t = Instant::now();
        let (motion, calls) = match &sampler {
            Sampler::Multi(model, sched, n, method) => {
                let c = Counting::new(model);
                let cfg = SamplerConfig { n_steps: *n, method: *method, seed: s };
                (sample_multistep(&c, &w.cond, sched, &cfg)?, c.calls())
            }
            Sampler::One(model) => {
                let c = Counting::new(model);
                (sample_onestep(&c, &w.cond, model.schedule().t_max, s)?, c.calls())
            }
        };
        Ok((motion, calls, t.elapsed().as_secs_f64()))
    });
    let mut evals = Vec::new();
    let mut seconds = Vec::new();
    for ((w, _), r) in windows.iter().zip(results) {
        let (mut motion, calls, secs) = r?;
        motion.clip_id = w.clip_id.clone();
        save_motion(&motion, &dir.join(format!("{}.msq", w.clip_id)))?;
        evals.push(calls);
        seconds.push(secs);
    }
    log.end_phase();
    let (lo, hi) = (evals.iter().min().copied().unwrap_or(0), evals.iter().max().copied().unwrap_or(0));
    log.set("sample.mode", if one_step { "one-step".to_string() } else { "multi-step".to_string() });
    if let Sampler::Multi(_, _, n, method) = &sampler {
        log.set("sample.steps", n);
        log.set("sample.method", format!("{method:?}").to_lowercase());
    }
    log.set("sample.clips", windows.len());
    log.set("sample.network_evals_per_clip", if lo == hi { lo.to_string() } else { format!("{lo}..{hi}") });
    log.set("sample.network_evals_total", evals.iter().sum::<usize>());
    log.set("time.sample_per_clip_seconds", format!("{:.6}", seconds.iter().sum::<f64>() / seconds.len() as f64));
    Ok(())
}

/// Frames flagged as beats in the conditioning track.
fn music_beats(w: &TrainingWindow) -> Vec<usize> {
    let a = w.cond.audio();
    (0..a.rows()).filter(|&i| a.get(i, BEAT_COL) > 0.5).collect()
}

fn evaluate_cmd(
    cfg: &RunConfig,
    manifest: &Path,
    samples: &Path,
    encoder: Option<&Path>,
    out: &Path,
    log: &mut RunLog,
) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    let enc = match encoder {
        Some(p) => {
            log.input("encoder", p)?;
            Some(MotionEncoder::<f32>::load(p)?)
        }
        None => None,
    };
    log.phase("load");
    let clips = load_clips(cfg, &m, split_filter(cfg)?, log)?;
    let windows = first_windows(cfg, clips)?;
    let dir = samples.join(SAMPLES_DIR);
    let mut generated = Vec::new();
    for (w, c) in &windows {
        let p = dir.join(format!("{}.msq", w.clip_id));
        if p.is_file() {
            let mut g: MotionSequence<f32> = load_motion(&p)?;
            g.clip_id = w.clip_id.clone();
            generated.push((g, music_beats(w), c.embedded.clone()));
        } else {
            log::warn!("no sample for clip {}", w.clip_id);
        }
    }
    log.set("evaluate.missing_samples", windows.len() - generated.len());
    log.phase("score");
    let real: Vec<MotionSequence<f32>> = windows.iter().map(|(w, _)| w.motion.clone()).collect();
    let evaluated: Vec<EvaluatedClip<'_>> = generated
        .iter()
        .map(|(g, beats, lyr)| EvaluatedClip { motion: g, music_beats: beats.clone(), lyrics: lyr })
        .collect();
    let settings = EvaluationSettings {
        sigma: cfg.opt_float("metrics.beat_sigma"),
        diversity_seed: cfg.u64("metrics.diversity_seed"),
        config_digest: cfg.digest(),
    };
    let report = evaluate(&real, &evaluated, &Skeleton::canonical(), enc.as_ref(), &settings)?;
    log.end_phase();
    let p = out.join(REPORT_FILE);
    std::fs::write(&p, report.to_kv()).map_err(|e| io_err(&p, e))?;
    for (k, v) in report.to_map() {
        log.set(format!("report.{k}"), v);
    }
    log.output("report", &p)?;
    Ok(())
}

fn pairs_of(clips: &[LoadedClip]) -> Vec<EncoderPair<f32>> {
    clips.iter().flat_map(|c| lyric_pairs(&c.motion, &c.embedded)).collect()
}

fn encoder_train(cfg: &RunConfig, manifest: &Path, out: &Path, log: &mut RunLog) -> Res<()> {
    let m = open_manifest(manifest, log)?;
    log.phase("load");
    let train = pairs_of(&load_clips(cfg, &m, Some(Split::Train), log)?);
    let test = pairs_of(&load_clips(cfg, &m, Some(Split::Test), log)?);
    log.set("encoder.train_pairs", train.len());
    log.set("encoder.test_pairs", test.len());
    log.phase("encoder_train");
    let ec = EncoderConfig {
        width: cfg.count("encoder.width"),
        temperature: cfg.float("encoder.temperature"),
        batch_size: cfg.count("encoder.batch_size"),
        steps: cfg.count("encoder.steps"),
        adam: AdamConfig { learning_rate: cfg.float("encoder.learning_rate"), ..AdamConfig::default() },
        seed: cfg.u64("seed"),
    };
    let (enc, losses) = train_motion_encoder(&train, &ec)?;
    log.end_phase();
    if let (Some(a), Some(b)) = (losses.first(), losses.last()) {
        log.set("encoder.loss.first", a);
        log.set("encoder.loss.last", b);
    }
    if test.len() >= 2 {
        match retrieval_report(&enc, &test) {
            Ok(r) => {
                log.set("encoder.heldout.matched", r.matched);
                log.set("encoder.heldout.mismatched", r.mismatched);
                log.set("encoder.heldout.margin", r.margin);
                log.set("encoder.heldout.top1", r.top1);
                log.set("encoder.heldout.candidates", r.candidates);
            }
            Err(e) => log::warn!("held-out retrieval skipped: {e}"),
        }
    }
    let p = out.join(ENCODER_FILE);
    enc.save(&p)?;
    log.output("encoder", &p)?;
    Ok(())
}
