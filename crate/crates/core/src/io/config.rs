use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goc_loss::GocLossConfig;
use crate::inference::InferenceConfig;
use crate::metrics::{EvalConfig, Interpolation};
use crate::sampling::PartitionConfig;

/// Training-loss settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    #[serde(flatten)]
    pub goc: GocLossConfig<f64>,
    /// Number of lowest-negative-energy proposals per image fed to the
    /// suppression loss.
    pub suppression_top: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { goc: GocLossConfig::default(), suppression_top: 100 }
    }
}

/// Matching settings of the metric suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub iou_threshold: f64,
    pub wi_recall: f64,
    pub interpolation: Interpolation,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let d = EvalConfig::<f64>::new(1);
        Self { iou_threshold: d.iou_threshold, wi_recall: d.wi_recall, interpolation: d.interpolation }
    }
}

impl EvaluationConfig {
    pub fn for_classes(&self, num_classes: u32) -> EvalConfig<f64> {
        EvalConfig {
            num_classes,
            iou_threshold: self.iou_threshold,
            wi_recall: self.wi_recall,
            interpolation: self.interpolation,
        }
    }
}

/// Every threshold of a run. Missing sections and keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub partition: PartitionConfig<f64>,
    pub loss: LossConfig,
    pub inference: InferenceConfig<f64>,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        self.loss.goc.validate()?;
        if self.loss.suppression_top == 0 {
            return Err(Error::InvalidConfig("suppression_top must be at least 1".into()));
        }
        self.inference.validate()?;
        let e = &self.evaluation;
        if !(e.iou_threshold > 0.0 && e.iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!("iou_threshold must lie in (0, 1], got {}", e.iou_threshold)));
        }
        if !(e.wi_recall > 0.0 && e.wi_recall <= 1.0) {
            return Err(Error::InvalidConfig(format!("wi_recall must lie in (0, 1], got {}", e.wi_recall)));
        }
        Ok(())
    }
}
