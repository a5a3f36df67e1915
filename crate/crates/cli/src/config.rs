use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgm_core::solver::Controls;
use sgm_core::RawParameters;

use crate::artifact::sha256_hex;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Number of paths `M`.
    pub paths: usize,
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            paths: 100,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
    pub base_seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            times: vec![1.0],
            levels: vec![2.0, 3.0],
            paths: 100_000,
            dt: 1e-3,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    /// Paths per amplitude.
    pub paths: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: vec![1e2, 1e3, 1e4],
            paths: 20,
            base_seed: 0,
        }
    }
}

/// Everything a command needs. `output_dir` is the only field excluded from
/// the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Path seed used by `simulate`.
    #[serde(default)]
    pub seed: u64,
    pub params: RawParameters,
    #[serde(default)]
    pub solver: Controls,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }

    /// The config without `output_dir`, as TOML.
    pub fn canonical(&self) -> String {
        RunConfig {
            output_dir: None,
            ..self.clone()
        }
        .to_toml()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
p = 2.0
q = 1.0
r = 2.0
s = 0.0
n = 3
delta = 0.5
gamma = 100.0
xi0 = 1.0
lambda = 2.0
"#;

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::from_toml(MINIMAL).unwrap();
        cfg.solver.beta = Some(0.75);
        cfg.solver.snapshot_times = vec![0.0, 0.1, 1e-14];
        cfg.output_dir = Some("somewhere".into());
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[solver]\nhorizonn = 3.0\n");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
