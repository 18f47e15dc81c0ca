//! Multi-step generation by integrating the probability-flow ODE from `T` down to `epsilon`.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditioning::ConditioningTrack;
use crate::diffusion::{standard_normal, DenoiserModel, DiffusionSchedule};
use crate::scalar::Scalar;
use crate::skeleton::MotionSequence;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Anything that maps a noisy state at time `t` to a clean estimate.
pub trait Denoise<S: Scalar> {
    fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>>;

    /// One time per segment. The default evaluates each segment on its own.
    fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        if times.len() != segments.len() {
            return Err(Error::shape("one time per segment", segments.len(), times.len()));
        }
        let mut out = Matrix::zeros(z.rows(), z.cols());
        for (seg, &t) in segments.iter().zip(times) {
            let c = cond.map(|c| c.slice_rows(seg.clone()));
            let part = self.denoise(&z.slice_rows(seg.clone()), t, c.as_ref(), &[0..seg.len()])?;
            for (k, r) in seg.clone().enumerate() {
                out.row_mut(r).copy_from_slice(part.row(k));
            }
        }
        Ok(out)
    }
}

impl<S: Scalar> Denoise<S> for DenoiserModel<S> {
    fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>> {
        DenoiserModel::denoise(self, z, t, cond, segments)
    }

    fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        DenoiserModel::denoise_segments(self, z, times, cond, segments)
    }
}

impl<S: Scalar, D: Denoise<S> + ?Sized> Denoise<S> for &D {
    fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>> {
        (**self).denoise(z, t, cond, segments)
    }

    fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        (**self).denoise_segments(z, times, cond, segments)
    }
}

/// Data concentrated at one point: `x_hat = c` regardless of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaDenoiser<S> {
    pub target: Vec<S>,
}

impl<S: Scalar> Denoise<S> for DeltaDenoiser<S> {
    fn denoise(&self, z: &Matrix<S>, _t: S, _cond: Option<&Matrix<S>>, _segments: &[Range<usize>]) -> Result<Matrix<S>> {
        if z.cols() != self.target.len() {
            return Err(Error::shape("delta denoiser width", self.target.len(), z.cols()));
        }
        Ok(Matrix::from_fn(z.rows(), z.cols(), |_, c| self.target[c]))
    }
}

/// Posterior mean for isotropic Gaussian data `N(mean, std^2 I)` under the VE marginal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianDenoiser<S> {
    pub mean: S,
    pub std: S,
}

impl<S: Scalar> GaussianDenoiser<S> {
    pub fn standard() -> Self {
        GaussianDenoiser { mean: S::zero(), std: S::one() }
    }
}

impl<S: Scalar> Denoise<S> for GaussianDenoiser<S> {
    fn denoise(&self, z: &Matrix<S>, t: S, _cond: Option<&Matrix<S>>, _segments: &[Range<usize>]) -> Result<Matrix<S>> {
        let s2 = self.std * self.std;
        let k = s2 / (s2 + t * t);
        Ok(z.map(|v| self.mean + k * (v - self.mean)))
    }
}

/// Counts calls to the wrapped denoiser.
#[derive(Debug)]
pub struct Counting<D> {
    inner: D,
    calls: AtomicUsize,
}

impl<D> Counting<D> {
    pub fn new(inner: D) -> Self {
        Counting { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }
}

impl<S: Scalar, D: Denoise<S>> Denoise<S> for Counting<D> {
    fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.denoise(z, t, cond, segments)
    }

    fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.denoise_segments(z, times, cond, segments)
    }
}

fn positive_time<S: Scalar>(t: S) -> Result<()> {
    if t > S::zero() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("time must be positive, got {t}")))
    }
}

/// `(x_hat - z) / t^2`.
pub fn score_from_denoiser<S: Scalar>(x_hat: &Matrix<S>, z: &Matrix<S>, t: S) -> Result<Matrix<S>> {
    positive_time(t)?;
    let inv = S::one() / (t * t);
    x_hat.zip_map(z, |x, z| (x - z) * inv)
}

/// `(z - x_hat) / t`.
pub fn drift<S: Scalar>(z: &Matrix<S>, x_hat: &Matrix<S>, t: S) -> Result<Matrix<S>> {
    positive_time(t)?;
    z.zip_map(x_hat, |z, x| (z - x) / t)
}

/// Right-hand side of the probability-flow ODE with the score supplied by `denoiser`.
pub fn pf_ode_rhs<S: Scalar, D: Denoise<S> + ?Sized>(
    denoiser: &D,
    z: &Matrix<S>,
    t: S,
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
) -> Result<Matrix<S>> {
    positive_time(t)?;
    let x_hat = denoiser.denoise(z, t, cond, segments)?;
    drift(z, &x_hat, t)
}

/// `z + (t_to - t_from) * rhs`.
pub fn euler_step<S: Scalar>(z: &Matrix<S>, rhs: &Matrix<S>, t_from: S, t_to: S) -> Result<Matrix<S>> {
    let h = t_to - t_from;
    z.zip_map(rhs, |z, d| z + h * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    Euler,
    Heun,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(SolverMethod::Euler),
            "heun" => Ok(SolverMethod::Heun),
            other => Err(Error::Invalid(format!("unknown solver {other:?} (expected euler or heun)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub method: SolverMethod,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Invalid("n_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Decreasing integration times `T = s_0 > ... > s_n = epsilon` on the rho grid.
pub fn sampling_times<S: Scalar>(schedule: &DiffusionSchedule<S>, n_steps: usize) -> Vec<S> {
    let mut g = schedule.grid_with(n_steps + 1);
    g.reverse();
    g
}

/// Integrates from `times[0]` to the last entry, returning the final state.
///
/// Heun corrects every step except the last, which is a plain Euler step.
pub fn integrate_pf_ode<S: Scalar, D: Denoise<S> + ?Sized>(
    denoiser: &D,
    z_start: Matrix<S>,
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
    times: &[S],
    method: SolverMethod,
) -> Result<Matrix<S>> {
    if times.len() < 2 {
        return Err(Error::Invalid("integration needs at least two times".into()));
    }
    if times.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("integration times must strictly decrease".into()));
    }
    let mut z = z_start;
    let last = times.len() - 2;
    for (i, w) in times.windows(2).enumerate() {
        let (t, t_next) = (w[0], w[1]);
        let d = pf_ode_rhs(denoiser, &z, t, cond, segments)?;
        let pred = euler_step(&z, &d, t, t_next)?;
        z = if method == SolverMethod::Heun && i < last {
            let d2 = pf_ode_rhs(denoiser, &pred, t_next, cond, segments)?;
            let avg = d.zip_map(&d2, |a, b| (a + b) / S::of(2.0))?;
            euler_step(&z, &avg, t, t_next)?
        } else {
            pred
        };
        if !z.all_finite() {
            return Err(Error::NonFinite(format!("sampler state after step {i} (t = {t_next})")));
        }
    }
    Ok(z)
}

/// Draws `z_T ~ N(0, T^2 I)`, integrates to `epsilon`, and returns the clean
/// estimate `x_hat(z_eps, eps)` for the packed rows.
pub fn sample_packed<S: Scalar, D: Denoise<S> + ?Sized>(
    denoiser: &D,
    rows: usize,
    cols: usize,
    cond: Option<&Matrix<S>>,
    segments: &[Range<usize>],
    schedule: &DiffusionSchedule<S>,
    config: &SamplerConfig,
) -> Result<Matrix<S>> {
    config.validate()?;
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let z_t = standard_normal::<S, _>(rows, cols, &mut rng).scale(schedule.t_max);
    let times = sampling_times(schedule, config.n_steps);
    let z_eps = integrate_pf_ode(denoiser, z_t, cond, segments, &times, config.method)?;
    denoiser.denoise(&z_eps, schedule.epsilon, cond, segments)
}

/// Generates one clip conditioned on `track`; its length sets the output length.
pub fn sample_multistep<S: Scalar, D: Denoise<S> + ?Sized>(
    denoiser: &D,
    track: &ConditioningTrack<S>,
    schedule: &DiffusionSchedule<S>,
    config: &SamplerConfig,
) -> Result<MotionSequence<S>> {
    let n = track.len();
    let feats = track.features();
    let frames = sample_packed(denoiser, n, crate::POSE_DIM, Some(&feats), &[0..n], schedule, config)?;
    MotionSequence::new(frames, track.fps(), "sample")?.orthonormalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix<f64> {
        Matrix::scalar(v)
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_from_denoiser(&scalar(2.0), &scalar(2.0), 1.0).unwrap().item(), 0.0);
        assert_eq!(score_from_denoiser(&scalar(0.0), &scalar(2.0), 1.0).unwrap().item(), -2.0);
        assert!(score_from_denoiser(&scalar(0.0), &scalar(2.0), 0.0).is_err());
        // Closed-form score of N(0, (1 + t^2) I).
        let z = Matrix::from_vec(1, 3, vec![0.3, -1.2, 2.0]).unwrap();
        for t in [0.1f64, 1.0, 7.0] {
            let xh = GaussianDenoiser::standard().denoise(&z, t, None, &[0..1]).unwrap();
            let s = score_from_denoiser(&xh, &z, t).unwrap();
            for c in 0..3 {
                let want = -z.get(0, c) / (1.0 + t * t);
                assert!((s.get(0, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_examples() {
        let d = DeltaDenoiser { target: vec![0.0] };
        assert_eq!(pf_ode_rhs(&d, &scalar(4.0), 2.0, None, &[0..1]).unwrap().item(), 2.0);
        let fixed = DeltaDenoiser { target: vec![1.5] };
        assert_eq!(pf_ode_rhs(&fixed, &scalar(1.5), 3.0, None, &[0..1]).unwrap().item(), 0.0);
    }

    #[test]
    fn delta_data_follows_the_linear_solution() {
        let s = DiffusionSchedule::<f64>::default();
        let c = vec![0.25, -1.0, 3.0];
        let d = DeltaDenoiser { target: c.clone() };
        let z_t = Matrix::from_vec(1, 3, vec![50.0, -20.0, 120.0]).unwrap();
        let times = sampling_times(&s, 7);
        let z = integrate_pf_ode(&d, z_t.clone(), None, &[0..1], &times, SolverMethod::Euler).unwrap();
        for k in 0..3 {
            let want = c[k] + (z_t.get(0, k) - c[k]) * s.epsilon / s.t_max;
            assert!((z.get(0, k) - want).abs() < 1e-9);
        }
        let cfg = SamplerConfig { n_steps: 5, method: SolverMethod::Euler, seed: 1 };
        let out = sample_packed(&d, 4, 3, None, &[0..4], &s, &cfg).unwrap();
        for r in 0..4 {
            for k in 0..3 {
                assert!((out.get(r, k) - c[k]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn evaluation_counts() {
        let s = DiffusionSchedule::<f64>::default();
        let d = Counting::new(GaussianDenoiser::standard());
        for (method, n, want) in [(SolverMethod::Euler, 6, 7), (SolverMethod::Heun, 6, 12), (SolverMethod::Heun, 1, 2)] {
            d.reset();
            sample_packed(&d, 2, 2, None, &[0..2], &s, &SamplerConfig { n_steps: n, method, seed: 0 }).unwrap();
            assert_eq!(d.calls(), want, "{method:?} {n}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_times_decrease() {
        let s = DiffusionSchedule::<f64>::default();
        let cfg = SamplerConfig { n_steps: 8, method: SolverMethod::Heun, seed: 42 };
        let a = sample_packed(&GaussianDenoiser::standard(), 3, 2, None, &[0..3], &s, &cfg).unwrap();
        let b = sample_packed(&GaussianDenoiser::standard(), 3, 2, None, &[0..3], &s, &cfg).unwrap();
        assert_eq!(a, b);
        let times = sampling_times(&s, 8);
        assert_eq!(times[0], 80.0);
        assert_eq!(*times.last().unwrap(), 0.002);
        assert!(times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn non_finite_state_reports_step() {
        struct Broken;
        impl Denoise<f64> for Broken {
            fn denoise(&self, z: &Matrix<f64>, t: f64, _: Option<&Matrix<f64>>, _: &[Range<usize>]) -> Result<Matrix<f64>> {
                Ok(z.map(|v| if t < 1.0 { f64::NAN } else { v }))
            }
        }
        let s = DiffusionSchedule::<f64>::default();
        let err = sample_packed(&Broken, 1, 1, None, &[0..1], &s, &SamplerConfig { n_steps: 10, method: SolverMethod::Euler, seed: 0 })
            .unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }
}
