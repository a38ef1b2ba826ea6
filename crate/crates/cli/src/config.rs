use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dgforecast_core::baselines::ImputerSpec;
use dgforecast_core::pipeline::SplitSpec;
use dgforecast_core::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Quantile LSTM trained directly on the incomplete series.
    #[value(name = "endtoend")]
    #[serde(rename = "endtoend")]
    EndToEnd,
    /// Linear interpolation, then the same network.
    Li,
    /// k-nearest-neighbour imputation, then the same network.
    Knn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::EndToEnd => "endtoend",
            Method::Li => "li",
            Method::Knn => "knn",
        }
    }
}

/// Everything needed to reproduce a run. Written next to the outputs as
/// `config.json`; feeding it back with `--config` repeats the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub method: Method,
    /// Share of observed points additionally dropped at random before use.
    pub missing_rate: f64,
    /// Seeds the missing-value draw and training.
    pub seed: u64,
    pub split: SplitSpec,
    pub knn_k: usize,
    /// KNN window in steps; defaults to the model lag.
    pub knn_window: Option<usize>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            method: Method::EndToEnd,
            missing_rate: 0.0,
            seed: 0,
            split: SplitSpec::default(),
            knn_k: 5,
            knn_window: None,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Copies the run seed into the training config and checks ranges.
    pub fn resolve(mut self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.missing_rate) {
            bail!("missing rate must lie in [0, 1], got {}", self.missing_rate);
        }
        self.train.seed = self.seed;
        self.split.validate()?;
        self.train.validate()?;
        self.imputer().validate()?;
        Ok(self)
    }

    pub fn imputer(&self) -> ImputerSpec {
        match self.method {
            Method::Knn => ImputerSpec::knn(self.knn_k, self.knn_window),
            _ => ImputerSpec::linear(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let cfg = RunConfig {
            method: Method::Knn,
            missing_rate: 0.25,
            seed: 9,
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.train.seed, 9);
        let back: RunConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.to_json().unwrap().contains("\"method\": \"knn\""));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"method": "endtoend", "train": {"layers": 2}}"#).unwrap();
        assert_eq!(cfg.train.layers, 2);
        assert_eq!(cfg.train.hidden, 32);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"method": "arima"}"#).is_err());
        assert!(RunConfig { missing_rate: 1.5, ..Default::default() }.resolve().is_err());
    }
}
