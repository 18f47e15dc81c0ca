//! One-evaluation consistency model distilled from a trained denoiser.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::conditioning::ConditioningTrack;
use crate::diffusion::{
    check_inputs, pack, params_to_f32, per_row, preconditioned, standard_normal, Checkpoint, Coefficients,
    DenoiserModel, DiffusionSchedule, Example, ModelKind, Packed,
};
use crate::nn::{ema_update, AdamConfig, AdamState, Bound, Network, NetworkConfig};
use crate::sampling::{drift, euler_step, pf_ode_rhs, Denoise, SolverMethod};
use crate::scalar::Scalar;
use crate::skeleton::MotionSequence;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// `f(x, t) = c_skip(t) x + c_out(t) S(x, t)` with `c_skip(eps) = 1` and `c_out(eps) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyModel<S> {
    net: Network<S>,
    schedule: DiffusionSchedule<S>,
}

impl<S: Scalar> ConsistencyModel<S> {
    pub fn new(net: Network<S>, schedule: DiffusionSchedule<S>) -> Result<Self> {
        schedule.validate()?;
        Ok(ConsistencyModel { net, schedule })
    }

    /// A student whose network starts as a copy of the teacher's.
    pub fn from_teacher(teacher: &DenoiserModel<S>, schedule: &DiffusionSchedule<S>) -> Result<Self> {
        let mut schedule = *schedule;
        schedule.sigma_data = teacher.sigma_data();
        Self::new(teacher.network().clone(), schedule)
    }

    pub fn network(&self) -> &Network<S> {
        &self.net
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn schedule(&self) -> &DiffusionSchedule<S> {
        &self.schedule
    }

    pub fn params(&self) -> &[S] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        self.net.params_mut()
    }

    pub fn c_skip(&self, t: S) -> S {
        let sd2 = self.schedule.sigma_data * self.schedule.sigma_data;
        let d = t - self.schedule.epsilon;
        sd2 / (d * d + sd2)
    }

    pub fn c_out(&self, t: S) -> S {
        let sd = self.schedule.sigma_data;
        sd * (t - self.schedule.epsilon) / (sd * sd + t * t).sqrt()
    }

    pub fn coefficients(&self, t: S) -> Coefficients<S> {
        let sd = self.schedule.sigma_data;
        Coefficients {
            skip: self.c_skip(t),
            out: self.c_out(t),
            input: S::one() / (t * t + sd * sd).sqrt(),
            noise: t.ln() / S::of(4.0),
        }
    }

    fn check_time(&self, t: S) -> Result<()> {
        if t >= self.schedule.epsilon && t <= self.schedule.t_max {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "consistency time {t} outside [{}, {}]",
                self.schedule.epsilon, self.schedule.t_max
            )))
        }
    }

    pub(crate) fn graph_forward(
        &self,
        g: &mut Graph<S>,
        p: &Bound<'_>,
        x: Var,
        t_rows: &[S],
        cond: Option<Var>,
        segments: &[Range<usize>],
    ) -> Var {
        let coeffs: Vec<_> = t_rows.iter().map(|&t| self.coefficients(t)).collect();
        preconditioned(g, self.net.config(), p, x, &coeffs, cond, segments)
    }

    /// Evaluates `f` on packed rows with the given parameter vector and one time per segment.
    pub fn forward_with(
        &self,
        params: &[S],
        x: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        check_inputs(self.net.config(), x, cond)?;
        for &t in times {
            self.check_time(t)?;
        }
        let t_rows = per_row(times, segments, x.rows())?;
        let mut g = Graph::new();
        let p = self.net.layout().bind(&mut g, params, false);
        let xv = g.constant(x.clone());
        let cv = cond.map(|c| g.constant(c.clone()));
        let out = self.graph_forward(&mut g, &p, xv, &t_rows, cv, segments);
        Ok(g.value(out).clone())
    }

    pub fn forward_segments(
        &self,
        x: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        self.forward_with(self.net.params(), x, times, cond, segments)
    }

    /// `f(x_t, t)` for one clip.
    pub fn forward(&self, x: &Matrix<S>, t: S, track: Option<&ConditioningTrack<S>>) -> Result<Matrix<S>> {
        if let Some(tr) = track {
            if tr.len() != x.rows() {
                return Err(Error::shape("conditioning track length", x.rows(), tr.len()));
            }
        }
        let feats = track.map(|t| t.features());
        self.forward_segments(x, &[t], feats.as_ref(), &[0..x.rows()])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Consistency,
            schedule: self.schedule.cast(),
            config: self.net.config().clone(),
            params: params_to_f32(self.net.params()),
            extra: Default::default(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(ModelKind::Consistency)?;
        Self::new(ck.network()?, ck.schedule.cast())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl<S: Scalar> Denoise<S> for ConsistencyModel<S> {
    fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>> {
        self.forward_segments(z, &vec![t; segments.len()], cond, segments)
    }

    fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        self.forward_segments(z, times, cond, segments)
    }
}

fn check_adjacent<S: Scalar>(grid: &[S], from: usize, to: usize) -> Result<()> {
    if from >= grid.len() || to + 1 != from {
        return Err(Error::Invalid(format!(
            "teacher step must go from grid index n+1 to n, got {from} -> {to} on a grid of {}",
            grid.len()
        )));
    }
    Ok(())
}

/// One teacher ODE step from `grid[from]` down to `grid[to] = grid[from - 1]`.
pub fn teacher_ode_step<S: Scalar, D: Denoise<S> + ?Sized>(
    teacher: &D,
    z: &Matrix<S>,
    grid: &[S],
    from: usize,
    to: usize,
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
    method: SolverMethod,
) -> Result<Matrix<S>> {
    check_adjacent(grid, from, to)?;
    let (t_next, t_n) = (grid[from], grid[to]);
    let d = pf_ode_rhs(teacher, z, t_next, cond, segments)?;
    let pred = euler_step(z, &d, t_next, t_n)?;
    if method == SolverMethod::Euler {
        return Ok(pred);
    }
    let d2 = pf_ode_rhs(teacher, &pred, t_n, cond, segments)?;
    let avg = d.zip_map(&d2, |a, b| (a + b) / S::of(2.0))?;
    euler_step(z, &avg, t_next, t_n)
}

/// Teacher step with a separate grid index per segment; arithmetic matches
/// [`teacher_ode_step`] row by row.
fn teacher_step_segments<S: Scalar, D: Denoise<S> + ?Sized>(
    teacher: &D,
    z: &Matrix<S>,
    grid: &[S],
    lower: &[usize],
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
    method: SolverMethod,
) -> Result<Matrix<S>> {
    let t_hi: Vec<S> = lower.iter().map(|&n| grid[n + 1]).collect();
    let t_lo: Vec<S> = lower.iter().map(|&n| grid[n]).collect();
    let rows_drift = |z: &Matrix<S>, times: &[S]| -> Result<Matrix<S>> {
        let x_hat = teacher.denoise_segments(z, times, cond, segments)?;
        let mut d = Matrix::zeros(z.rows(), z.cols());
        for (seg, &t) in segments.iter().zip(times) {
            let part = drift(&z.slice_rows(seg.clone()), &x_hat.slice_rows(seg.clone()), t)?;
            for (k, r) in seg.clone().enumerate() {
                d.row_mut(r).copy_from_slice(part.row(k));
            }
        }
        Ok(d)
    };
    let step = |z: &Matrix<S>, d: &Matrix<S>| -> Result<Matrix<S>> {
        let mut out = Matrix::zeros(z.rows(), z.cols());
        for (i, seg) in segments.iter().enumerate() {
            let part = euler_step(&z.slice_rows(seg.clone()), &d.slice_rows(seg.clone()), t_hi[i], t_lo[i])?;
            for (k, r) in seg.clone().enumerate() {
                out.row_mut(r).copy_from_slice(part.row(k));
            }
        }
        Ok(out)
    };
    let d = rows_drift(z, &t_hi)?;
    let pred = step(z, &d)?;
    if method == SolverMethod::Euler {
        return Ok(pred);
    }
    let d2 = rows_drift(&pred, &t_lo)?;
    let avg = d.zip_map(&d2, |a, b| (a + b) / S::of(2.0))?;
    step(z, &avg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillConfig {
    /// EMA decay of the target parameters.
    pub mu: f64,
    pub adam: AdamConfig,
    pub solver: SolverMethod,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { mu: 0.95, adam: AdamConfig::default(), solver: SolverMethod::Euler }
    }
}

/// Online student, EMA target parameters and optimizer state.
#[derive(Clone, Debug)]
pub struct DistillState<S> {
    pub model: ConsistencyModel<S>,
    pub target: Vec<S>,
    pub optimizer: AdamState<S>,
    pub config: DistillConfig,
    pub steps: u64,
}

impl<S: Scalar> DistillState<S> {
    pub fn new(teacher: &DenoiserModel<S>, schedule: &DiffusionSchedule<S>, config: DistillConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.mu) {
            return Err(Error::Invalid(format!("EMA decay must lie in [0, 1), got {}", config.mu)));
        }
        let model = ConsistencyModel::from_teacher(teacher, schedule)?;
        let target = model.params().to_vec();
        let optimizer = AdamState::new(target.len());
        Ok(DistillState { model, target, optimizer, config, steps: 0 })
    }

    /// The student with the EMA target parameters swapped in.
    pub fn target_model(&self) -> ConsistencyModel<S> {
        let mut m = self.model.clone();
        m.params_mut().copy_from_slice(&self.target);
        m
    }
}

/// Randomness of one distillation step: the lower grid index per clip and packed noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CdDraw<S> {
    pub lower: Vec<usize>,
    pub noise: Matrix<S>,
}

pub fn draw_cd<S: Scalar, R: Rng>(packed: &Packed<S>, n_grid: usize, rng: &mut R) -> CdDraw<S> {
    let lower = packed.segments.iter().map(|_| rng.random_range(0..n_grid - 1)).collect();
    let noise = standard_normal(packed.x.rows(), packed.x.cols(), rng);
    CdDraw { lower, noise }
}

/// Consistency-distillation loss for fixed randomness, with the gradient over
/// the online parameters when requested. The target branch is evaluated
/// outside the graph, so no gradient reaches it.
pub fn cd_loss<S: Scalar, D: Denoise<S> + ?Sized>(
    state: &DistillState<S>,
    teacher: &D,
    packed: &Packed<S>,
    draw: &CdDraw<S>,
    with_grad: bool,
) -> Result<(S, Option<Vec<S>>)> {
    let cm = &state.model;
    let grid = cm.schedule().grid();
    if draw.lower.iter().any(|&n| n + 1 >= grid.len()) {
        return Err(Error::Invalid("grid index out of range".into()));
    }
    let cond = packed.cond.as_ref();
    let segs = &packed.segments;
    let t_hi: Vec<S> = draw.lower.iter().map(|&n| grid[n + 1]).collect();
    let t_lo: Vec<S> = draw.lower.iter().map(|&n| grid[n]).collect();
    let hi_rows = per_row(&t_hi, segs, packed.x.rows())?;
    let mut x_hi = packed.x.clone();
    for (r, &t) in hi_rows.iter().enumerate() {
        for (v, &n) in x_hi.row_mut(r).iter_mut().zip(draw.noise.row(r)) {
            *v = *v + t * n;
        }
    }
    let x_phi = teacher_step_segments(teacher, &x_hi, &grid, &draw.lower, cond, segs, state.config.solver)?;
    let target = cm.forward_with(&state.target, &x_phi, &t_lo, cond, segs)?;

    let mut g = Graph::new();
    let p = cm.network().layout().bind(&mut g, cm.params(), with_grad);
    let xv = g.constant(x_hi);
    let cv = cond.map(|c| g.constant(c.clone()));
    let online = cm.graph_forward(&mut g, &p, xv, &hi_rows, cv, segs);
    let tv = g.constant(target);
    let diff = g.sub(online, tv);
    let loss = g.mean_squares(diff);
    let value = g.value(loss).item();
    let grads = if with_grad { Some(p.gather(&g.backward(loss)?)) } else { None };
    Ok((value, grads))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdReport<S> {
    pub loss: S,
    pub lower: Vec<usize>,
}

/// One distillation step: student update by the optimizer, then the EMA target update.
pub fn cd_train_step<S: Scalar, D: Denoise<S> + ?Sized, R: Rng>(
    state: &mut DistillState<S>,
    teacher: &D,
    batch: &[Example<'_, S>],
    rng: &mut R,
) -> Result<CdReport<S>> {
    let packed = pack(batch)?;
    let draw = draw_cd(&packed, state.model.schedule().n_grid, rng);
    let (loss, grads) = cd_loss(state, teacher, &packed, &draw, true)?;
    let grads = grads.expect("gradient requested");
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        let clips: Vec<String> =
            batch.iter().zip(&draw.lower).map(|(e, n)| format!("{} at grid index {}", e.id, n)).collect();
        return Err(Error::NonFinite(format!("distillation loss ({})", clips.join(", "))));
    }
    let cfg = state.config;
    state.optimizer.update(&cfg.adam, state.model.params_mut(), &grads);
    ema_update(&mut state.target, state.model.params(), S::of(cfg.mu));
    state.steps += 1;
    Ok(CdReport { loss, lower: draw.lower })
}

/// Draws `z_T ~ N(0, T^2 I)` and maps it to a sample with a single evaluation.
pub fn sample_onestep_packed<S: Scalar, D: Denoise<S> + ?Sized>(
    model: &D,
    rows: usize,
    cols: usize,
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
    t_max: S,
    seed: u64,
) -> Result<Matrix<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = standard_normal::<S, _>(rows, cols, &mut rng).scale(t_max);
    model.denoise(&z, t_max, cond, segments)
}

pub fn sample_onestep<S: Scalar, D: Denoise<S> + ?Sized>(
    model: &D,
    track: &ConditioningTrack<S>,
    t_max: S,
    seed: u64,
) -> Result<MotionSequence<S>> {
    let n = track.len();
    let feats = track.features();
    let frames = sample_onestep_packed(model, n, crate::POSE_DIM, Some(&feats), &[0..n], t_max, seed)?;
    MotionSequence::new(frames, track.fps(), "sample")?.orthonormalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{integrate_pf_ode, sampling_times, Counting, DeltaDenoiser};
    use proptest::prelude::*;

    fn toy_teacher(seed: u64) -> DenoiserModel<f64> {
        DenoiserModel::new(NetworkConfig::mlp(3, 8, 1), 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn cm(seed: u64) -> ConsistencyModel<f64> {
        ConsistencyModel::from_teacher(&toy_teacher(seed), &DiffusionSchedule::default()).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let m = cm(0);
        assert_eq!(m.c_skip(0.002), 1.0);
        assert_eq!(m.c_out(0.002), 0.0);
        assert!((m.c_skip(0.502) - 0.5).abs() < 1e-15);
        assert!(m.forward(&Matrix::zeros(1, 3), 0.001, None).is_err());
        assert!(m.forward(&Matrix::zeros(1, 3), 81.0, None).is_err());
    }

    #[test]
    fn zero_network_is_pure_skip() {
        let teacher = toy_teacher(1);
        let n = teacher.params().len();
        let zero = DenoiserModel::from_network(Network::from_params(teacher.config().clone(), vec![0.0; n]).unwrap(), 0.5);
        let m = ConsistencyModel::from_teacher(&zero, &DiffusionSchedule::default()).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let out = m.forward(&x, 1.7, None).unwrap();
        assert_eq!(out, x.scale(m.c_skip(1.7)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn boundary_identity(seed in 0u64..1000, vals in prop::collection::vec(-50.0f64..50.0, 6)) {
            let m = cm(seed);
            let x = Matrix::from_vec(2, 3, vals).unwrap();
            let out = m.forward(&x, 0.002, None).unwrap();
            prop_assert!(out.sub(&x).unwrap().max_abs() <= 1e-7);
        }
    }

    #[test]
    fn teacher_step_examples() {
        let grid = vec![1.0f64, 2.0];
        let z = Matrix::scalar(4.0);
        let zero = DeltaDenoiser { target: vec![0.0] };
        let out = teacher_ode_step(&zero, &z, &grid, 1, 0, None, &[0..1], SolverMethod::Euler).unwrap();
        assert_eq!(out.item(), 2.0);
        let fixed = DeltaDenoiser { target: vec![4.0] };
        let out = teacher_ode_step(&fixed, &z, &grid, 1, 0, None, &[0..1], SolverMethod::Euler).unwrap();
        assert_eq!(out.item(), 4.0);
        assert!(teacher_ode_step(&zero, &z, &[1.0, 2.0, 3.0], 2, 0, None, &[0..1], SolverMethod::Euler).is_err());
    }

    #[test]
    fn teacher_steps_reproduce_the_euler_sampler() {
        let s = DiffusionSchedule::<f64>::default();
        let grid = s.grid();
        let teacher = DeltaDenoiser { target: vec![0.3, -0.7] };
        let z_t = Matrix::from_vec(1, 2, vec![31.0, -95.0]).unwrap();
        let mut z = z_t.clone();
        for n in (0..grid.len() - 1).rev() {
            z = teacher_ode_step(&teacher, &z, &grid, n + 1, n, None, &[0..1], SolverMethod::Euler).unwrap();
        }
        let times = sampling_times(&s, grid.len() - 1);
        let path = integrate_pf_ode(&teacher, z_t, None, &[0..1], &times, SolverMethod::Euler).unwrap();
        assert_eq!(z, path);
    }

    #[test]
    fn segment_teacher_step_matches_single_steps() {
        let s = DiffusionSchedule::<f64>::default();
        let grid = s.grid();
        let teacher = toy_teacher(4);
        let z = standard_normal::<f64, _>(4, 3, &mut ChaCha8Rng::seed_from_u64(2));
        let segs = [0..2, 2..4];
        for method in [SolverMethod::Euler, SolverMethod::Heun] {
            let both = teacher_step_segments(&teacher, &z, &grid, &[3, 9], None, &segs, method).unwrap();
            for (i, n) in [3usize, 9].into_iter().enumerate() {
                let part = z.slice_rows(segs[i].clone());
                let one = teacher_ode_step(&teacher, &part, &grid, n + 1, n, None, &[0..2], method).unwrap();
                assert_eq!(both.slice_rows(segs[i].clone()), one);
            }
        }
    }

    #[test]
    fn cd_step_updates_target_by_ema() {
        let teacher = toy_teacher(5);
        let mut state = DistillState::new(&teacher, &DiffusionSchedule::default(), DistillConfig::default()).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4]).unwrap();
        let batch = [Example { motion: &x, cond: None, id: "c" }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let old_target = state.target.clone();
            cd_train_step(&mut state, &teacher, &batch, &mut rng).unwrap();
            let mut want = old_target;
            ema_update(&mut want, state.model.params(), 0.95);
            assert_eq!(state.target, want);
        }
    }

    #[test]
    fn self_consistent_model_has_zero_loss() {
        // Delta data at 0 with a noiseless draw keeps every trajectory at 0, where
        // a zero network and the exact teacher agree.
        let cfg = NetworkConfig::mlp(1, 2, 0);
        let n = cfg.layout().len();
        let zero = DenoiserModel::from_network(Network::from_params(cfg, vec![0.0; n]).unwrap(), 0.5);
        let state = DistillState::new(&zero, &DiffusionSchedule::default(), DistillConfig::default()).unwrap();
        let teacher = DeltaDenoiser { target: vec![0.0] };
        let x = Matrix::zeros(3, 1);
        let packed = pack(&[Example { motion: &x, cond: None, id: "z" }]).unwrap();
        let draw = CdDraw { lower: vec![4], noise: Matrix::zeros(3, 1) };
        let (loss, _) = cd_loss(&state, &teacher, &packed, &draw, false).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn one_step_sampling_uses_one_evaluation() {
        let m = Counting::new(cm(7));
        let a = sample_onestep_packed(&m, 5, 3, None, &[0..5], 80.0, 9).unwrap();
        assert_eq!(m.calls(), 1);
        let b = sample_onestep_packed(&m, 5, 3, None, &[0..5], 80.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_keeps_kind() {
        let m = cm(8).network().clone();
        let m = ConsistencyModel::new(
            Network::from_params(m.config().clone(), m.params().iter().map(|&v| v as f32 as f64).collect()).unwrap(),
            DiffusionSchedule::default(),
        )
        .unwrap();
        let ck = m.to_checkpoint();
        let back = ConsistencyModel::<f64>::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(DenoiserModel::<f64>::from_checkpoint(&ck).is_err());
    }
}
