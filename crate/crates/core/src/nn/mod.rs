//! Parameter storage, the denoising network and its optimizer.

mod adam;
mod network;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use network::{positional_encoding, time_features, NetworkConfig};
pub use params::{Bound, Init, ParamLayout, Slot};

use rand::Rng;

use crate::scalar::Scalar;
use crate::Result;

/// An architecture together with its flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    config: NetworkConfig,
    layout: ParamLayout,
    params: Vec<S>,
}

impl<S: Scalar> Network<S> {
    pub fn new<R: Rng>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let params = layout.init(rng);
        Ok(Network { config, layout, params })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<S>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.len() {
            return Err(crate::Error::shape("network parameters", layout.len(), params.len()));
        }
        Ok(Network { config, layout, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

/// `target <- mu * target + (1 - mu) * online`, elementwise.
pub fn ema_update<S: Scalar>(target: &mut [S], online: &[S], mu: S) {
    assert_eq!(target.len(), online.len(), "EMA parameter length");
    let one_minus = S::one() - mu;
    for (t, &o) in target.iter_mut().zip(online) {
        *t = mu * *t + one_minus * o;
    }
}
