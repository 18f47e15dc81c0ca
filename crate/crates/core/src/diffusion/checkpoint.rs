//! Binary checkpoint: `LM2D`, u32 version, u32 header length, the header as
//! sorted `key=value` lines, u64 parameter count, then little-endian f32
//! parameters.

use std::collections::BTreeMap;
use std::path::Path;

use crate::nn::{Network, NetworkConfig};
use crate::scalar::Scalar;
use crate::{Error, Result};

use super::model::DenoiserModel;
use super::schedule::DiffusionSchedule;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LM2D";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Diffusion,
    Consistency,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Diffusion => "diffusion",
            ModelKind::Consistency => "consistency",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(ModelKind::Diffusion),
            "consistency" => Ok(ModelKind::Consistency),
            other => Err(Error::Invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub schedule: DiffusionSchedule<f64>,
    pub config: NetworkConfig,
    pub params: Vec<f32>,
    /// Any further header entries, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn header(&self) -> BTreeMap<String, String> {
        let mut kv = self.extra.clone();
        kv.insert("kind".into(), self.kind.as_str().into());
        kv.extend(self.schedule.to_kv());
        kv.extend(self.config.to_kv());
        kv.insert("params.count".into(), self.params.len().to_string());
        kv
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let text: String = self.header().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut out = Vec::with_capacity(20 + text.len() + 4 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse { what: "checkpoint", offset: offset as u64, message };
        let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| err(at, "unexpected end of file".into()));
        if take(0, 4)? != CHECKPOINT_MAGIC {
            return Err(err(0, "bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4, 4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(err(4, format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(take(8, 4)?.try_into().expect("4 bytes")) as usize;
        let text = std::str::from_utf8(take(12, len)?).map_err(|e| err(12 + e.valid_up_to(), "header is not UTF-8".into()))?;
        let mut kv = BTreeMap::new();
        let mut line_at = 12;
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| err(line_at, format!("header line {line:?} lacks '='")))?;
            kv.insert(k.to_string(), v.to_string());
            line_at += line.len() + 1;
        }
        let count_at = 12 + len;
        let count = u64::from_le_bytes(take(count_at, 8)?.try_into().expect("8 bytes")) as usize;
        let data_at = count_at + 8;
        let raw = take(data_at, count.checked_mul(4).ok_or_else(|| err(count_at, "parameter count overflow".into()))?)?;
        if bytes.len() != data_at + 4 * count {
            return Err(err(data_at + 4 * count, "trailing bytes after parameters".into()));
        }
        let params: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let header_err = |e: Error| err(12, e.to_string());
        let kind: ModelKind = kv.get("kind").ok_or_else(|| err(12, "missing kind".into()))?.parse().map_err(header_err)?;
        let schedule = DiffusionSchedule::from_kv(&kv).map_err(header_err)?;
        let config = NetworkConfig::from_kv(&kv).map_err(header_err)?;
        let declared: usize = kv
            .get("params.count")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(12, "missing params.count".into()))?;
        if declared != count || config.layout().len() != count {
            return Err(err(
                count_at,
                format!("parameter count {count} does not match the architecture ({})", config.layout().len()),
            ));
        }
        let extra = kv
            .into_iter()
            .filter(|(k, _)| k != "kind" && k != "params.count" && !k.starts_with("schedule.") && !k.starts_with("net."))
            .collect();
        Ok(Checkpoint { kind, schedule, config, params, extra })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch { expected: kind.as_str().into(), found: self.kind.as_str().into() })
        }
    }

    /// Fails unless the stored architecture equals `config`.
    pub fn expect_config(&self, config: &NetworkConfig) -> Result<()> {
        if &self.config == config {
            Ok(())
        } else {
            Err(Error::Invalid(format!("checkpoint architecture {:?} differs from {:?}", self.config, config)))
        }
    }

    pub fn network<S: Scalar>(&self) -> Result<Network<S>> {
        Network::from_params(self.config.clone(), self.params.iter().map(|&p| S::of(p as f64)).collect())
    }
}

pub(crate) fn params_to_f32<S: Scalar>(params: &[S]) -> Vec<f32> {
    params.iter().map(|p| p.to_f64_lossy() as f32).collect()
}

impl<S: Scalar> DenoiserModel<S> {
    pub fn to_checkpoint(&self, schedule: &DiffusionSchedule<S>) -> Checkpoint {
        let mut schedule = schedule.cast::<f64>();
        schedule.sigma_data = self.sigma_data().to_f64_lossy();
        Checkpoint {
            kind: ModelKind::Diffusion,
            schedule,
            config: self.config().clone(),
            params: params_to_f32(self.params()),
            extra: BTreeMap::new(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, DiffusionSchedule<S>)> {
        ck.expect_kind(ModelKind::Diffusion)?;
        let schedule = ck.schedule.cast::<S>();
        Ok((DenoiserModel::from_network(ck.network()?, schedule.sigma_data), schedule))
    }

    pub fn save(&self, schedule: &DiffusionSchedule<S>, path: &Path) -> Result<()> {
        self.to_checkpoint(schedule).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, DiffusionSchedule<S>)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> DenoiserModel<f32> {
        DenoiserModel::new(NetworkConfig::transformer(5, 3, 8, 1, 2), 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let m = model();
        let s = DiffusionSchedule::<f32>::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&s, &path).unwrap();
        let (back, s2) = DenoiserModel::<f32>::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(s2, s);
    }

    #[test]
    fn rejects_corruption_and_wrong_kind() {
        let m = model();
        let mut ck = m.to_checkpoint(&DiffusionSchedule::default());
        let bytes = ck.to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]), Err(Error::Parse { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        ck.kind = ModelKind::Consistency;
        assert!(matches!(DenoiserModel::<f32>::from_checkpoint(&ck), Err(Error::KindMismatch { .. })));
        ck.params.pop();
        assert!(Checkpoint::from_bytes(&ck.to_bytes()).is_err());
    }

    #[test]
    fn architecture_check() {
        let ck = model().to_checkpoint(&DiffusionSchedule::default());
        assert!(ck.expect_config(&NetworkConfig::transformer(5, 3, 8, 1, 2)).is_ok());
        assert!(ck.expect_config(&NetworkConfig::transformer(5, 3, 8, 2, 2)).is_err());
    }
}
