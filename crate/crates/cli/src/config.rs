//! Run configuration: a TOML file with dotted section keys such as
//! `rl.beta = 0.1`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use agr_core::datasets::DEFAULT_TRAIN_RATIO;
use agr_core::eval::DEFAULT_CONTENT_THRESHOLD;
use agr_core::models::Architecture;
use agr_core::training::{derive_seed, RlConfig, RmConfig, SftConfig};
use agr_core::RewardConfig;

use crate::synthetic::SyntheticTaskSpec;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Attribute-focused data, lambda 0.5.
    #[default]
    Abma,
    /// Behavior-focused data, lambda 0.7.
    Abmb,
}

impl Profile {
    pub fn default_lambda(self) -> f64 {
        match self {
            Profile::Abma => RewardConfig::ABMA_LAMBDA,
            Profile::Abmb => RewardConfig::ABMB_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Benchmark-style source records (JSONL).
    pub sources: PathBuf,
    /// Annotated responses (JSONL, five annotations each).
    pub annotations: PathBuf,
    /// Output root; `--out` overrides it.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { sources: "data/sources.jsonl".into(), annotations: "data/annotations.jsonl".into(), out: "out".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriterMode {
    #[default]
    Template,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewriterSection {
    pub mode: RewriterMode,
    pub url: String,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for RewriterSection {
    fn default() -> Self {
        Self { mode: RewriterMode::Template, url: String::new(), timeout_secs: 30, retries: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratio: DEFAULT_TRAIN_RATIO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub max_len: usize,
    /// Cap on the word vocabulary built from training text, specials included.
    pub max_vocab: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { embed_dim: 16, hidden_dim: 32, layers: 1, max_len: 96, max_vocab: 1000 }
    }
}

impl ModelSection {
    pub fn arch(&self, vocab_size: usize) -> Architecture {
        Architecture {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Falls back to the profile default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub task: SyntheticTaskSpec,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 0.5], seeds: vec![1, 2, 3, 4, 5], task: SyntheticTaskSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: Profile,
    /// Fairness gate tolerance for evaluation.
    pub epsilon: f64,
    pub content_threshold: f64,
    /// Maximum number of source records the dataset builder may skip;
    /// unlimited when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_skipped: Option<usize>,
    pub paths: Paths,
    pub rewriter: RewriterSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub sft: SftConfig,
    pub rm: RmConfig,
    pub rl: RlConfig,
    pub reward: RewardSection,
    pub synthetic: SyntheticSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            profile: Profile::Abma,
            epsilon: 0.05,
            content_threshold: DEFAULT_CONTENT_THRESHOLD,
            max_skipped: None,
            paths: Paths::default(),
            rewriter: RewriterSection::default(),
            split: SplitSection::default(),
            model: ModelSection::default(),
            sft: SftConfig::default(),
            rm: RmConfig::default(),
            rl: RlConfig::default(),
            reward: RewardSection::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`, or the defaults when no file is given. Relative data
    /// paths in a file resolve against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.paths.sources, &mut cfg.paths.annotations, &mut cfg.paths.out] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if o.lambda.is_some() {
            self.reward.lambda = o.lambda;
        }
        if let Some(b) = o.beta {
            self.rl.beta = b;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = e;
        }
    }

    pub fn lambda(&self) -> f64 {
        self.reward.lambda.unwrap_or(self.profile.default_lambda())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.content_threshold) {
            return bad("content_threshold must lie in [0, 1]");
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad("split.ratio must lie in (0, 1)");
        }
        RewardConfig::new(self.lambda()).map_err(|e| CliError::Config(format!("reward.lambda: {e}")))?;
        self.sft_config().validate()?;
        self.rm_config().validate()?;
        self.rl_config().validate()?;
        Ok(())
    }

    pub fn sft_config(&self) -> SftConfig {
        SftConfig { seed: derive_seed(self.seed, 1), ..self.sft }
    }

    pub fn rm_config(&self) -> RmConfig {
        RmConfig { seed: derive_seed(self.seed, 3), ..self.rm }
    }

    pub fn rl_config(&self) -> RlConfig {
        RlConfig { seed: derive_seed(self.seed, 5), lambda: self.lambda(), ..self.rl }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_lambdas() {
        let mut c = RunConfig::default();
        assert_eq!(c.lambda(), 0.5);
        c.profile = Profile::Abmb;
        assert_eq!(c.lambda(), 0.7);
        assert_eq!(c.rl_config().lambda, 0.7);
        c.apply(&Overrides { lambda: Some(0.2), ..Default::default() });
        assert_eq!(c.rl_config().lambda, 0.2);
    }

    #[test]
    fn dotted_keys_and_unknown_keys() {
        let c = RunConfig::parse("seed = 3\nrl.beta = 0.25\nprofile = \"abmb\"\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.rl.beta, 0.25);
        assert_eq!(c.profile, Profile::Abmb);
        for bad in ["rl.betta = 0.1", "sedd = 1", "rl.lambda = 0.3", "sft.seed = 4", "[nope]\nx = 1"] {
            assert!(matches!(RunConfig::parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::parse("rl.beta = 0.3\nreward.lambda = 0.9\nsynthetic.seeds = [7, 8, 9]\n").unwrap();
        c.apply(&Overrides { seed: Some(11), epsilon: Some(0.1), ..Default::default() });
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.reward.lambda = Some(-1.0);
        assert!(c.validate().is_err());
        let c = RunConfig { epsilon: -0.1, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
