use std::fs;
use std::path::{Path, PathBuf};

use ppmt_core::analysis::{CalibrationConfig, ScalingConfig};
use ppmt_core::estimators::{Method, PpmtConfig, SsConfig};
use ppmt_core::simgen::SimScenario;
use ppmt_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a command needs, as read from a TOML file and then patched by
/// command-line flags. The resolved value is written next to every output so
/// a run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scenario: SimScenario,
    pub layout: LayoutConfig,
    pub tapers: TaperConfig,
    pub estimate: EstimateConfig,
    pub ppmt: PpmtConfig,
    pub ss: SsConfig,
    pub scaling: ScalingConfig,
    pub calibration: CalibrationConfig,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Basis size: frequencies are `2 pi n / N`.
    pub n: usize,
    /// One past the highest harmonic kept.
    pub n_max: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig { n: 800, n_max: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaperConfig {
    pub time_bandwidth: f64,
    pub count: usize,
}

impl Default for TaperConfig {
    fn default() -> Self {
        TaperConfig { time_bandwidth: 2.0, count: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub method: Method,
    /// Observation noise variance of the continuous channels.
    pub noise_variance: Option<f64>,
    /// Positions of the continuous channels in the estimated ESD.
    pub continuous_channels: Vec<usize>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig { method: Method::Ppmt, noise_variance: None, continuous_channels: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub raster: Option<PathBuf>,
    pub latent: Option<PathBuf>,
    pub continuous: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Validation("a seed is required (--seed or `seed` in the config)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths.out.as_deref().ok_or_else(|| Error::Validation("an output location is required (--out)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig { seed: Some(4), ..RunConfig::default() };
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 3\n[scenario]\ncase = \"case2\"\ntrials = 40\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.scenario.trials, 40);
        assert_eq!(cfg.scenario.window_length, 3200);
        assert_eq!(cfg.layout, LayoutConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[layout]\nnn = 3\n").is_err());
    }

    #[test]
    fn missing_seed() {
        assert!(RunConfig::default().require_seed().unwrap_err().is_validation());
    }
}
