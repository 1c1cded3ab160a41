use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelMode, RankingModel};
use crate::autodiff::ParameterSet;
use crate::data::{FeatureSchema, StandardizationStats};
use crate::error::{Error, Result};
use crate::provenance::Provenance;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// JSON model file: parameters, architecture, the standardization fitted at
/// training time, and the fingerprint of the schema it was trained against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub provenance: Provenance,
    pub schema_fingerprint: String,
    pub mode: ModelMode,
    pub config: ModelConfig,
    pub stats: StandardizationStats,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(model: &RankingModel, schema: &FeatureSchema, stats: &StandardizationStats, provenance: Provenance) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            provenance,
            schema_fingerprint: schema.fingerprint(),
            mode: model.mode(),
            config: model.config().clone(),
            stats: stats.clone(),
            params: model.params().clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if cp.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {}",
                cp.format_version
            )));
        }
        Ok(cp)
    }

    /// Rebuilds the model, refusing schemas other than the training one.
    pub fn into_model(self, schema: &FeatureSchema) -> Result<(RankingModel, StandardizationStats)> {
        let found = schema.fingerprint();
        if found != self.schema_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.schema_fingerprint,
                found,
            });
        }
        let mut model = RankingModel::new(schema, self.mode, self.config, 0)?;
        model.load_parameters(&self.params)?;
        Ok((model, self.stats))
    }
}
