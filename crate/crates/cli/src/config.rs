use std::path::Path;

use acrokit::acro_rules::RuleConfig;
use acrokit::embed::{OovPolicy, SifConfig};
use acrokit::tagger::TaggerTrainConfig;
use acrokit::twin::{TwinTrainConfig, MAX_EXAMPLES_PER_TERM};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Hyperparameters shared by all subcommands, read from a TOML file.
/// Command-line flags override individual values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rules: RuleConfig,
    pub distant: DistantConfig,
    pub tagger: TaggerTrainConfig,
    pub twin: TwinTrainConfig,
    pub pairs: PairConfig,
    pub sif: SifConfig,
    pub vectors: VectorConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistantConfig {
    /// Minimum labeled sentences for a short form to count as universal.
    pub universal_min_sentences: usize,
    /// Optional term-to-sentence ratio to subsample the auxiliary corpus to.
    pub term_ratio: Option<f64>,
}

impl Default for DistantConfig {
    fn default() -> Self {
        DistantConfig {
            universal_min_sentences: 5,
            term_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub per_term_cap: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            per_term_cap: MAX_EXAMPLES_PER_TERM,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorConfig {
    pub oov: OovPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub bins: usize,
    pub thresholds: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            bins: 20,
            thresholds: vec![-1.0, 0.0, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0],
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies the effective seed to every seeded stage.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.tagger.seed = self.seed;
        self.twin.seed = self.seed;
        self
    }
}
