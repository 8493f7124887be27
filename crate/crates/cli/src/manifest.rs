//! Provenance record written next to every CSV.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::args::ConfigFile;
use crate::error::CliError;

pub const SEED_DERIVATION: &str = "trajectory i of a run with master seed s draws from the counter-based \
stream key = mix(mix(s + g) ^ mix(i + 2g)) (splitmix64 finalizer, g = 0x9e3779b97f4a7c15); \
row r of a sweep uses s_r = mix(mix((s ^ 0x8cb92ba72f3d8dd7) + g) ^ mix(r + 2g)) in place of s";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub timestamp_unix: u64,
    /// Resolved inputs, after flag/config/default precedence.
    pub settings: serde_json::Value,
    /// Stopping level per emitted row.
    pub thresholds: Vec<f64>,
    pub seed_derivation: &'static str,
    pub config: Option<ConfigFile>,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        command: &str,
        settings: &T,
        thresholds: Vec<f64>,
        config: Option<ConfigFile>,
    ) -> Result<Self, CliError> {
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            timestamp_unix,
            settings: serde_json::to_value(settings)?,
            thresholds,
            seed_derivation: SEED_DERIVATION,
            config,
        })
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `<csv>.manifest.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
