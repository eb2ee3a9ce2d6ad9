//! JSON checkpoints: format version, model kind, architecture, vocabulary
//! and the flat parameter vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Architecture;
use super::policy::PolicyModel;
use super::reward::RewardModel;
use super::vocab::Vocabulary;
use super::ModelError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Policy,
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub arch: Architecture,
    pub vocab: Vocabulary,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of_policy(m: &PolicyModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Policy,
            arch: *m.arch(),
            vocab: m.vocab().clone(),
            params: m.params().to_vec(),
        }
    }

    pub fn of_reward(m: &RewardModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Reward,
            arch: *m.arch(),
            vocab: m.vocab().clone(),
            params: m.params().to_vec(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(ck.format_version));
        }
        Ok(ck)
    }

    fn expect(&self, kind: ModelKind, arch: Option<&Architecture>) -> Result<(), ModelError> {
        if self.kind != kind {
            return Err(ModelError::ArchitectureMismatch(format!(
                "expected a {kind:?} checkpoint, found {:?}",
                self.kind
            )));
        }
        if let Some(a) = arch {
            if a != &self.arch {
                return Err(ModelError::ArchitectureMismatch(format!(
                    "checkpoint architecture {:?} differs from expected {a:?}",
                    self.arch
                )));
            }
        }
        Ok(())
    }

    pub fn into_policy(self, expected: Option<&Architecture>) -> Result<PolicyModel, ModelError> {
        self.expect(ModelKind::Policy, expected)?;
        PolicyModel::from_params(self.vocab, self.arch, self.params)
    }

    pub fn into_reward(self, expected: Option<&Architecture>) -> Result<RewardModel, ModelError> {
        self.expect(ModelKind::Reward, expected)?;
        RewardModel::from_params(self.vocab, self.arch, self.params)
    }
}
