use std::ops::Range;

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::conditioning::ConditioningTrack;
use crate::nn::{Bound, Network, NetworkConfig};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

use super::schedule::{edm_coefficients, Coefficients};

/// `c_skip * z + c_out * F(c_in * z, c_noise)` with one set of coefficients per row.
pub(crate) fn preconditioned<S: Scalar>(
    g: &mut Graph<S>,
    config: &NetworkConfig,
    p: &Bound<'_>,
    z: Var,
    coeffs: &[Coefficients<S>],
    cond: Option<Var>,
    segments: &[Range<usize>],
) -> Var {
    let pick = |f: fn(&Coefficients<S>) -> S| coeffs.iter().map(f).collect::<Vec<S>>();
    let zin = g.scale_rows(z, pick(|c| c.input));
    let noise = pick(|c| c.noise);
    let f = config.forward(g, p, zin, &noise, cond, segments);
    let a = g.scale_rows(z, pick(|c| c.skip));
    let b = g.scale_rows(f, pick(|c| c.out));
    g.add(a, b)
}

/// Expands per-segment times to per-row values.
pub(crate) fn per_row<S: Copy>(values: &[S], segments: &[Range<usize>], rows: usize) -> Result<Vec<S>> {
    if values.len() != segments.len() {
        return Err(Error::shape("one time per segment", segments.len(), values.len()));
    }
    let mut out = Vec::with_capacity(rows);
    let mut next = 0;
    for (seg, &v) in segments.iter().zip(values) {
        if seg.start != next {
            return Err(Error::Invalid("segments must tile the rows in order".into()));
        }
        out.extend(std::iter::repeat_n(v, seg.len()));
        next = seg.end;
    }
    if next != rows {
        return Err(Error::shape("rows covered by segments", rows, next));
    }
    Ok(out)
}

pub(crate) fn check_inputs<S: Scalar>(
    config: &NetworkConfig,
    z: &Matrix<S>,
    cond: Option<&Matrix<S>>,
) -> Result<()> {
    if z.cols() != config.feature_dim {
        return Err(Error::shape("model input width", config.feature_dim, z.cols()));
    }
    match (cond, config.cond_dim) {
        (None, 0) => Ok(()),
        (Some(_), 0) => Err(Error::Invalid("model has no conditioning input".into())),
        (None, _) => Err(Error::Invalid("model requires a conditioning input".into())),
        (Some(c), d) if c.cols() != d => Err(Error::shape("conditioning width", d, c.cols())),
        (Some(c), _) if c.rows() != z.rows() => Err(Error::shape("conditioning frames", z.rows(), c.rows())),
        _ => Ok(()),
    }
}

/// Conditional x-prediction denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel<S> {
    net: Network<S>,
    sigma_data: S,
}

impl<S: Scalar> DenoiserModel<S> {
    pub fn new<R: Rng>(config: NetworkConfig, sigma_data: S, rng: &mut R) -> Result<Self> {
        Ok(DenoiserModel { net: Network::new(config, rng)?, sigma_data })
    }

    pub fn from_network(net: Network<S>, sigma_data: S) -> Self {
        DenoiserModel { net, sigma_data }
    }

    pub fn network(&self) -> &Network<S> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<S> {
        &mut self.net
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn sigma_data(&self) -> S {
        self.sigma_data
    }

    pub fn params(&self) -> &[S] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        self.net.params_mut()
    }

    pub fn coefficients(&self, t: S) -> Coefficients<S> {
        edm_coefficients(t, self.sigma_data)
    }

    /// Adds the denoiser's output for packed rows to a graph. `t_rows` holds one time per row.
    pub fn graph_forward(
        &self,
        g: &mut Graph<S>,
        p: &Bound<'_>,
        z: Var,
        t_rows: &[S],
        cond: Option<Var>,
        segments: &[Range<usize>],
    ) -> Var {
        let coeffs: Vec<_> = t_rows.iter().map(|&t| self.coefficients(t)).collect();
        preconditioned(g, self.net.config(), p, z, &coeffs, cond, segments)
    }

    /// Denoises packed rows, one time per segment.
    pub fn denoise_segments(
        &self,
        z: &Matrix<S>,
        times: &[S],
        cond: Option<&Matrix<S>>,
        segments: &[Range<usize>],
    ) -> Result<Matrix<S>> {
        check_inputs(self.net.config(), z, cond)?;
        let t_rows = per_row(times, segments, z.rows())?;
        if let Some(&t) = t_rows.iter().find(|&&t| !(t > S::zero())) {
            return Err(Error::Invalid(format!("denoiser time must be positive, got {t}")));
        }
        let mut g = Graph::new();
        let p = self.net.layout().bind(&mut g, self.net.params(), false);
        let zv = g.constant(z.clone());
        let cv = cond.map(|c| g.constant(c.clone()));
        let out = self.graph_forward(&mut g, &p, zv, &t_rows, cv, segments);
        Ok(g.value(out).clone())
    }

    /// Denoises packed rows that share one time.
    pub fn denoise(&self, z: &Matrix<S>, t: S, cond: Option<&Matrix<S>>, segments: &[Range<usize>]) -> Result<Matrix<S>> {
        self.denoise_segments(z, &vec![t; segments.len()], cond, segments)
    }

    /// `x_hat(z_t, t, m, l)` for one clip.
    pub fn forward(&self, z: &Matrix<S>, t: S, track: Option<&ConditioningTrack<S>>) -> Result<Matrix<S>> {
        if let Some(tr) = track {
            if tr.len() != z.rows() {
                return Err(Error::shape("conditioning track length", z.rows(), tr.len()));
            }
        }
        let feats = track.map(|t| t.features());
        self.denoise(z, t, feats.as_ref(), &[0..z.rows()])
    }
}
