use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::PlantedCorpusSpec;
use crate::binning::{SampleFilter, SampleTarget, SplitLoss, DEFAULT_TREE_DEPTH};
use crate::controller::HeteroConfig;
use crate::error::{Error, Result};
use crate::metrics::CostModel;
use crate::model::TokenMode;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum CorpusSource {
    Planted(PlantedCorpusSpec),
    /// UTF-8 text, one document per line.
    File {
        path: PathBuf,
    },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Planted(PlantedCorpusSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub source: CorpusSource,
    pub mode: TokenMode,
    /// Trailing share of documents held out for evaluation prompts.
    pub holdout_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            source: CorpusSource::default(),
            mode: TokenMode::Char,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Target n-gram order.
    pub order: usize,
    pub smoothing: f64,
    /// Order of the n-gram the draft is derived from; `None` reuses the target.
    pub draft_order: Option<usize>,
    /// Share of training documents the draft base sees.
    pub draft_fraction: f64,
    pub draft_temperature: f64,
    pub draft_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            order: 4,
            smoothing: 0.5,
            draft_order: None,
            draft_fraction: 0.3,
            draft_temperature: 0.7,
            draft_epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub prompts: usize,
    pub prompt_len: usize,
    pub new_tokens: usize,
    pub filter: SampleFilter,
    pub target: SampleTarget,
    pub loss: SplitLoss,
    pub tree_depth: usize,
    /// Fewer distinct entropies than this aborts calibration.
    pub min_distinct: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            prompts: 40,
            prompt_len: 16,
            new_tokens: 200,
            filter: SampleFilter::AnyAccepted,
            target: SampleTarget::Tcr,
            loss: SplitLoss::Normalized,
            tree_depth: DEFAULT_TREE_DEPTH,
            min_distinct: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub prompts: usize,
    pub prompt_len: usize,
    /// Alpha values for the sweep; empty means `ceil(d/2) - 1 ..= ceil(d/2) + 1`.
    pub alpha_sweep: Vec<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            prompts: 20,
            prompt_len: 16,
            alpha_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub decoding: HeteroConfig,
    pub calibration: CalibrationConfig,
    pub evaluation: EvaluationConfig,
    pub cost: CostModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out: PathBuf::from("runs/default"),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            decoding: HeteroConfig {
                max_new_tokens: 200,
                ..HeteroConfig::default()
            },
            calibration: CalibrationConfig::default(),
            evaluation: EvaluationConfig::default(),
            cost: CostModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        if let CorpusSource::Planted(spec) = &self.corpus.source {
            spec.validate(self.corpus.mode)?;
        }
        if !(0.0..1.0).contains(&self.corpus.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)".into());
        }
        if self.model.order == 0 || self.model.draft_order == Some(0) {
            return bad("n-gram orders must be >= 1".into());
        }
        if !(self.model.draft_fraction > 0.0 && self.model.draft_fraction <= 1.0) {
            return bad("draft_fraction must lie in (0, 1]".into());
        }
        if !(self.model.draft_temperature > 0.0) || !(0.0..1.0).contains(&self.model.draft_epsilon)
        {
            return bad("draft temperature must be > 0 and epsilon in [0, 1)".into());
        }
        if self.calibration.prompt_len == 0 || self.evaluation.prompt_len == 0 {
            return bad("prompt lengths must be >= 1".into());
        }
        if self.calibration.new_tokens == 0 {
            return bad("calibration new_tokens must be >= 1".into());
        }
        CostModel::new(self.cost.call, self.cost.token, self.cost.draft_layer)?;
        self.decoding.validate()
    }

    pub fn alpha_sweep(&self) -> Vec<usize> {
        if !self.evaluation.alpha_sweep.is_empty() {
            return self.evaluation.alpha_sweep.clone();
        }
        let mid = self.decoding.depth.div_ceil(2);
        vec![mid.saturating_sub(1), mid, mid + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 9, "decoding": {"depth": 6}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.decoding.depth, 6);
        assert_eq!(cfg.decoding.top_n, 20);
        assert_eq!(cfg.alpha_sweep(), vec![2, 3, 4]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn version_is_checked() {
        let cfg = ExperimentConfig {
            version: 2,
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
