//! Run configuration: a fixed set of typed keys with defaults, read from
//! `key=value` text and overridden by flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Float,
    Count,
    Bool,
    Text,
    /// A float or `none`.
    OptFloat,
}

const KEYS: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Count, "0"),
    ("threads", Kind::Count, "1"),
    ("schedule.epsilon", Kind::Float, "0.002"),
    ("schedule.t_max", Kind::Float, "80"),
    ("schedule.sigma_data", Kind::Float, "0.5"),
    ("schedule.n_grid", Kind::Count, "18"),
    ("schedule.rho", Kind::Float, "7"),
    ("model.width", Kind::Count, "64"),
    ("model.blocks", Kind::Count, "2"),
    ("model.heads", Kind::Count, "4"),
    ("model.mlp_ratio", Kind::Count, "2"),
    ("model.self_attention", Kind::Bool, "true"),
    ("model.cross_attention", Kind::Bool, "true"),
    ("loss.lambda_pos", Kind::Float, "1"),
    ("loss.lambda_vel", Kind::Float, "1"),
    ("train.steps", Kind::Count, "3000"),
    ("train.batch_size", Kind::Count, "4"),
    ("train.learning_rate", Kind::Float, "0.0003"),
    ("train.beta1", Kind::Float, "0.9"),
    ("train.beta2", Kind::Float, "0.999"),
    ("train.adam_epsilon", Kind::Float, "0.00000001"),
    ("train.clip_norm", Kind::OptFloat, "none"),
    ("train.time_log_mean", Kind::Float, "-1.2"),
    ("train.time_log_std", Kind::Float, "1.2"),
    ("distill.steps", Kind::Count, "2000"),
    ("distill.batch_size", Kind::Count, "4"),
    ("distill.mu", Kind::Float, "0.95"),
    ("distill.learning_rate", Kind::Float, "0.0003"),
    ("distill.solver", Kind::Text, "euler"),
    ("sample.steps", Kind::Count, "32"),
    ("sample.method", Kind::Text, "heun"),
    ("sample.split", Kind::Text, "test"),
    ("data.window_seconds", Kind::Float, "6"),
    ("data.stride_seconds", Kind::Float, "6"),
    ("data.lyric_embeddings", Kind::Text, "hash"),
    ("metrics.beat_sigma", Kind::OptFloat, "none"),
    ("metrics.diversity_seed", Kind::Count, "0"),
    ("encoder.width", Kind::Count, "128"),
    ("encoder.steps", Kind::Count, "400"),
    ("encoder.batch_size", Kind::Count, "32"),
    ("encoder.temperature", Kind::Float, "0.07"),
    ("encoder.learning_rate", Kind::Float, "0.001"),
    ("synthetic.n_clips", Kind::Count, "100"),
    ("synthetic.clip_seconds", Kind::Float, "6"),
    ("synthetic.fps", Kind::Float, "60"),
    ("synthetic.bpm_min", Kind::Float, "90"),
    ("synthetic.bpm_max", Kind::Float, "150"),
    ("synthetic.vocab", Kind::Text, "sun,rain,fire,wind"),
    ("synthetic.noise", Kind::Float, "0.01"),
    ("synthetic.test_fraction", Kind::Float, "0.2"),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, kind, _)| *kind)
}

fn check_value(key: &str, kind: Kind, value: &str) -> Result<(), CliError> {
    let ok = match kind {
        Kind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Count => value.parse::<u64>().is_ok(),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::Text => !value.is_empty() && !value.contains('\n'),
        Kind::OptFloat => value == "none" || value.parse::<f64>().is_ok_and(f64::is_finite),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("bad value {value:?} for config key {key} ({kind:?})")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|(k, _, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    /// Sets a known key; unknown keys and malformed values are usage errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        let value = value.trim();
        let kind = kind_of(key).ok_or_else(|| CliError::Usage(format!("unknown config key {key:?}")))?;
        check_value(key, kind, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {} is not key=value: {line:?}", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(lm2d::Error::io(path, e)))?;
        let mut c = RunConfig::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    /// Every key, sorted, one `key=value` per line.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    pub fn text(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("config key {key} is not declared"))
    }

    pub fn float(&self, key: &str) -> f64 {
        self.text(key).parse().expect("validated on set")
    }

    pub fn count(&self, key: &str) -> usize {
        self.text(key).parse().expect("validated on set")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.text(key).parse().expect("validated on set")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.text(key) == "true"
    }

    pub fn opt_float(&self, key: &str) -> Option<f64> {
        match self.text(key) {
            "none" => None,
            v => Some(v.parse().expect("validated on set")),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
