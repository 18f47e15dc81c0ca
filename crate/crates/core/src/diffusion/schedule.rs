use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Variance-exploding noise process: zero drift, `g(t) = sqrt(2t)`, so the
/// marginal at time `t` is `x + t * noise`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionSchedule<S> {
    pub epsilon: S,
    pub t_max: S,
    pub sigma_data: S,
    pub n_grid: usize,
    pub rho: S,
}

impl<S: Scalar> Default for DiffusionSchedule<S> {
    fn default() -> Self {
        DiffusionSchedule { epsilon: S::of(0.002), t_max: S::of(80.0), sigma_data: S::of(0.5), n_grid: 18, rho: S::of(7.0) }
    }
}

impl<S: Scalar> DiffusionSchedule<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > S::zero()
            && self.epsilon < self.t_max
            && self.t_max.is_finite()
            && self.sigma_data > S::zero()
            && self.rho > S::zero()
            && self.n_grid >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "invalid schedule: epsilon {}, T {}, sigma_data {}, rho {}, n_grid {}",
                self.epsilon, self.t_max, self.sigma_data, self.rho, self.n_grid
            )))
        }
    }

    /// Rho-spaced times `t_0 = epsilon < ... < t_{n-1} = T`.
    pub fn grid_with(&self, n: usize) -> Vec<S> {
        assert!(n >= 2, "a time grid needs at least two nodes");
        let inv = S::one() / self.rho;
        let lo = self.epsilon.powf(inv);
        let hi = self.t_max.powf(inv);
        let mut out: Vec<S> = (0..n)
            .map(|i| {
                let f = S::of(i as f64) / S::of((n - 1) as f64);
                (lo + f * (hi - lo)).powf(self.rho)
            })
            .collect();
        // Pin the ends so boundary conditions hold exactly.
        out[0] = self.epsilon;
        out[n - 1] = self.t_max;
        out
    }

    /// The distillation grid with `n_grid` nodes.
    pub fn grid(&self) -> Vec<S> {
        self.grid_with(self.n_grid)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("schedule.epsilon".into(), self.epsilon.to_string()),
            ("schedule.t_max".into(), self.t_max.to_string()),
            ("schedule.sigma_data".into(), self.sigma_data.to_string()),
            ("schedule.n_grid".into(), self.n_grid.to_string()),
            ("schedule.rho".into(), self.rho.to_string()),
        ]
    }

    pub fn from_kv(m: &std::collections::BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(m: &std::collections::BTreeMap<String, String>, k: &str) -> Result<T> {
            let v = m.get(k).ok_or_else(|| Error::Invalid(format!("missing key {k}")))?;
            v.parse().map_err(|_| Error::Invalid(format!("bad value {v:?} for {k}")))
        }
        let s = DiffusionSchedule {
            epsilon: S::of(get::<f64>(m, "schedule.epsilon")?),
            t_max: S::of(get::<f64>(m, "schedule.t_max")?),
            sigma_data: S::of(get::<f64>(m, "schedule.sigma_data")?),
            n_grid: get(m, "schedule.n_grid")?,
            rho: S::of(get::<f64>(m, "schedule.rho")?),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cast<T: Scalar>(&self) -> DiffusionSchedule<T> {
        let c = |v: S| T::of(v.to_f64_lossy());
        DiffusionSchedule {
            epsilon: c(self.epsilon),
            t_max: c(self.t_max),
            sigma_data: c(self.sigma_data),
            n_grid: self.n_grid,
            rho: c(self.rho),
        }
    }
}

/// `z_t = x + t * noise`.
pub fn perturb<S: Scalar>(x: &Matrix<S>, t: S, noise: &Matrix<S>) -> Result<Matrix<S>> {
    if !(t >= S::zero()) {
        return Err(Error::Invalid(format!("perturb time must be nonnegative, got {t}")));
    }
    x.zip_map(noise, |a, n| a + t * n)
}

pub fn standard_normal<S: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<S> {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        S::of(z)
    })
}

/// Training-time sampler: `ln t ~ Normal(mean, std)`, clamped to `[epsilon, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeDistribution {
    pub log_mean: f64,
    pub log_std: f64,
}

impl Default for TimeDistribution {
    fn default() -> Self {
        TimeDistribution { log_mean: -1.2, log_std: 1.2 }
    }
}

impl TimeDistribution {
    pub fn sample<S: Scalar, R: Rng>(&self, schedule: &DiffusionSchedule<S>, rng: &mut R) -> S {
        let z: f64 = rng.sample(StandardNormal);
        let t = (self.log_mean + self.log_std * z).exp();
        S::of(t).max(schedule.epsilon).min(schedule.t_max)
    }
}

/// Input and output scaling of the x-prediction denoiser:
/// `x_hat = c_skip * z + c_out * F(c_in * z, c_noise)`.
pub fn edm_coefficients<S: Scalar>(t: S, sigma_data: S) -> Coefficients<S> {
    let sd2 = sigma_data * sigma_data;
    let r = (t * t + sd2).sqrt();
    Coefficients { skip: sd2 / (t * t + sd2), out: t * sigma_data / r, input: S::one() / r, noise: t.ln() / S::of(4.0) }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients<S> {
    pub skip: S,
    pub out: S,
    pub input: S,
    pub noise: S,
}
