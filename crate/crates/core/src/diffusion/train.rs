use std::ops::Range;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::nn::{AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::skeleton::{motion_positions, Skeleton};
use crate::tensor::Matrix;
use crate::{Error, Result};

use super::loss::{LossBreakdown, LossWeights};
use super::model::{per_row, DenoiserModel};
use super::schedule::{standard_normal, DiffusionSchedule, TimeDistribution};

/// One training clip: motion frames and, for conditional models, the
/// matching `N × cond_dim` conditioning features.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a, S> {
    pub motion: &'a Matrix<S>,
    pub cond: Option<&'a Matrix<S>>,
    pub id: &'a str,
}

/// Clips stacked row-wise with their segment boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Packed<S> {
    pub x: Matrix<S>,
    pub cond: Option<Matrix<S>>,
    pub segments: Vec<Range<usize>>,
}

pub fn pack<S: Scalar>(batch: &[Example<'_, S>]) -> Result<Packed<S>> {
    let first = batch.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let n = first.motion.rows();
    if n == 0 {
        return Err(Error::Invalid("clips must have at least one frame".into()));
    }
    let mut segments = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        if ex.motion.rows() != n {
            return Err(Error::Invalid(format!(
                "clip {} has {} frames but the batch window is {n}",
                ex.id,
                ex.motion.rows()
            )));
        }
        if ex.cond.is_some() != first.cond.is_some() {
            return Err(Error::Invalid("either every clip or no clip carries conditioning".into()));
        }
        if let Some(c) = ex.cond {
            if c.rows() != n {
                return Err(Error::shape("conditioning frames", n, c.rows()));
            }
        }
        segments.push(i * n..(i + 1) * n);
    }
    let motions: Vec<&Matrix<S>> = batch.iter().map(|e| e.motion).collect();
    let x = Matrix::vstack(&motions)?;
    let cond = if first.cond.is_some() {
        let conds: Vec<&Matrix<S>> = batch.iter().filter_map(|e| e.cond).collect();
        Some(Matrix::vstack(&conds)?)
    } else {
        None
    };
    Ok(Packed { x, cond, segments })
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub time: TimeDistribution,
}

/// Graph nodes for the weighted training loss of a packed batch.
pub(crate) struct LossNodes {
    pub reconstruction: Var,
    pub positions: Option<Var>,
    pub velocity: Option<Var>,
    pub total: Var,
}

/// Batch means of the per-clip losses. Every clip has the same length, so the
/// batch mean of per-clip frame averages is a plain average over all frames.
pub(crate) fn loss_nodes<S: Scalar>(
    g: &mut Graph<S>,
    x: &Matrix<S>,
    x_hat: Var,
    segments: &[Range<usize>],
    skeleton: Option<&Skeleton<S>>,
    weights: &LossWeights,
) -> Result<LossNodes> {
    weights.validate()?;
    let xv = g.constant(x.clone());
    let diff = g.sub(x_hat, xv);
    let reconstruction = g.mean_squares(diff);
    let mut total = reconstruction;
    let mut positions = None;
    let mut velocity = None;
    if weights.lambda_pos > 0.0 {
        let skel = skeleton.ok_or_else(|| Error::Invalid("position loss needs a skeleton".into()))?;
        let target = g.constant(motion_positions(skel, x)?);
        let fk = g.forward_kinematics(x_hat, skel)?;
        let d = g.sub(fk, target);
        let s = g.sum_squares(d);
        let pos = g.scale(s, S::one() / S::of(x.rows() as f64));
        let w = g.scale(pos, S::of(weights.lambda_pos));
        total = g.add(total, w);
        positions = Some(pos);
    }
    if weights.lambda_vel > 0.0 {
        let diffs = x.rows() - segments.len();
        if diffs == 0 {
            return Err(Error::Invalid("velocity loss needs clips of at least 2 frames".into()));
        }
        let fd = g.frame_diff(diff, segments.to_vec());
        let s = g.sum_squares(fd);
        let vel = g.scale(s, S::one() / S::of(diffs as f64));
        let w = g.scale(vel, S::of(weights.lambda_vel));
        total = g.add(total, w);
        velocity = Some(vel);
    }
    Ok(LossNodes { reconstruction, positions, velocity, total })
}

pub(crate) fn breakdown<S: Scalar>(g: &Graph<S>, n: &LossNodes) -> LossBreakdown<S> {
    let get = |v: Option<Var>| v.map_or(S::zero(), |v| g.value(v).item());
    LossBreakdown {
        reconstruction: g.value(n.reconstruction).item(),
        positions: get(n.positions),
        velocity: get(n.velocity),
        total: g.value(n.total).item(),
    }
}

/// Loss for fixed times (one per clip) and fixed noise (packed like the
/// batch), with the gradient over the model parameters when requested.
pub fn batch_loss<S: Scalar>(
    model: &DenoiserModel<S>,
    batch: &Packed<S>,
    times: &[S],
    noise: &Matrix<S>,
    skeleton: Option<&Skeleton<S>>,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<(LossBreakdown<S>, Option<Vec<S>>)> {
    let t_rows = per_row(times, &batch.segments, batch.x.rows())?;
    super::model::check_inputs(model.config(), &batch.x, batch.cond.as_ref())?;
    let mut z = batch.x.clone();
    for (r, &t) in t_rows.iter().enumerate() {
        for (v, &n) in z.row_mut(r).iter_mut().zip(noise.row(r)) {
            *v = *v + t * n;
        }
    }
    let mut g = Graph::new();
    let p = model.network().layout().bind(&mut g, model.params(), with_grad);
    let zv = g.constant(z);
    let cv = batch.cond.as_ref().map(|c| g.constant(c.clone()));
    let x_hat = model.graph_forward(&mut g, &p, zv, &t_rows, cv, &batch.segments);
    let nodes = loss_nodes(&mut g, &batch.x, x_hat, &batch.segments, skeleton, weights)?;
    let report = breakdown(&g, &nodes);
    let grads = if with_grad { Some(p.gather(&g.backward(nodes.total)?)) } else { None };
    Ok((report, grads))
}

/// Draws one time per clip and packed standard-normal noise.
pub fn draw_noise<S: Scalar, R: Rng>(
    batch: &Packed<S>,
    schedule: &DiffusionSchedule<S>,
    dist: &TimeDistribution,
    rng: &mut R,
) -> (Vec<S>, Matrix<S>) {
    let times: Vec<S> = batch.segments.iter().map(|_| dist.sample(schedule, rng)).collect();
    let noise = standard_normal(batch.x.rows(), batch.x.cols(), rng);
    (times, noise)
}

/// One optimizer step on the denoising objective.
pub fn train_step<S: Scalar, R: Rng>(
    model: &mut DenoiserModel<S>,
    batch: &[Example<'_, S>],
    schedule: &DiffusionSchedule<S>,
    skeleton: Option<&Skeleton<S>>,
    config: &TrainConfig,
    optimizer: &mut AdamState<S>,
    rng: &mut R,
) -> Result<LossBreakdown<S>> {
    let packed = pack(batch)?;
    let (times, noise) = draw_noise(&packed, schedule, &config.time, rng);
    let (report, grads) = batch_loss(model, &packed, &times, &noise, skeleton, &config.weights, true)?;
    let grads = grads.expect("gradient requested");
    if !report.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(diagnose(model, batch, &packed, &times, &noise, skeleton, &config.weights));
    }
    optimizer.update(&config.adam, model.params_mut(), &grads);
    Ok(report)
}

/// Finds the first clip whose individual loss is not finite.
fn diagnose<S: Scalar>(
    model: &DenoiserModel<S>,
    batch: &[Example<'_, S>],
    packed: &Packed<S>,
    times: &[S],
    noise: &Matrix<S>,
    skeleton: Option<&Skeleton<S>>,
    weights: &LossWeights,
) -> Error {
    for (i, seg) in packed.segments.iter().enumerate() {
        let single = Packed {
            x: packed.x.slice_rows(seg.clone()),
            cond: packed.cond.as_ref().map(|c| c.slice_rows(seg.clone())),
            segments: vec![0..seg.len()],
        };
        let n = noise.slice_rows(seg.clone());
        let bad = match batch_loss(model, &single, &times[i..=i], &n, skeleton, weights, false) {
            Ok((r, _)) => !r.total.is_finite(),
            Err(_) => true,
        };
        if bad {
            return Error::NonFinite(format!("training loss at t = {} for clip {}", times[i], batch[i].id));
        }
    }
    Error::NonFinite(format!("training loss or gradient for batch at times {times:?}"))
}
