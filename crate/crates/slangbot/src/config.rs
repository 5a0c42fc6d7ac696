//! Layered settings. Command-line flags and `SLANGBOT_*` environment
//! variables are resolved by the argument parser; the result is then layered
//! over an optional JSON config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Every setting that may come from a flag, the environment or a file.
/// `None` means "not given at this layer".
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub k: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub bind: Option<String>,
    pub session_ttl_seconds: Option<u64>,
    pub max_request_bytes: Option<usize>,
    pub log: Option<PathBuf>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub early_stop_patience: Option<usize>,
    pub max_sequence_length: Option<usize>,
    pub train_fraction: Option<f64>,
}

macro_rules! layer_fields {
    ($hi:ident, $lo:ident, $($f:ident),* $(,)?) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// Values in `self` win; gaps are filled from `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        let (hi, lo) = (self, lower);
        layer_fields!(
            hi, lo, seed, threshold, k, lexicon, model, policy, kb, bind, session_ttl_seconds,
            max_request_bytes, log, learning_rate, batch_size, epochs, weight_decay,
            early_stop_patience, max_sequence_length, train_fraction,
        )
    }

    pub fn from_json(text: &str) -> std::result::Result<Settings, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Settings> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e))
    }
}
