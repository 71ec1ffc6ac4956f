//! Run configuration shared by the CLI entry points: a dataset source, the
//! training settings, and an optional output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::Result;
use crate::trainer::TrainConfig;

/// Everything a run needs, loadable from one JSON file. Unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SbmParams;

    fn sample() -> RunConfig {
        RunConfig {
            dataset: DatasetSpec {
                name: "sbm".into(),
                files: None,
                sbm: Some(SbmParams {
                    n: 50,
                    blocks: 2,
                    p_in: 0.2,
                    p_out: 0.05,
                    feature_noise: 0.1,
                    seed: 0,
                }),
            },
            train: TrainConfig { epochs: 3, hidden: 4, ..Default::default() },
            out: None,
        }
    }

    #[test]
    fn file_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let cfg = sample();
        cfg.to_file(&path).unwrap();
        let loaded = RunConfig::from_file(&path).unwrap();
        assert_eq!(loaded, cfg);
    }

    #[test]
    fn minimal_json_fills_training_defaults() {
        let text = r#"{"dataset": {"name": "x", "sbm": {"n": 30, "blocks": 3, "p_in": 0.2, "p_out": 0.0}}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.out, None);

        let bad = r#"{"dataset": {"name": "x", "sbm": {"n": 30, "blocks": 3, "p_in": 0.2, "p_out": 0.0}}, "trian": {}}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }

    #[test]
    fn invalid_budget_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut cfg = sample();
        cfg.train.epsilon = 0.0;
        let text = serde_json::to_string(&cfg).unwrap();
        std::fs::write(&path, text).unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }
}
