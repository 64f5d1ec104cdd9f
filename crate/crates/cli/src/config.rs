//! Pipeline configuration: one TOML file with a section per stage.
//!
//! Precedence, lowest first: built-in defaults, the config file, the
//! `CURATE_PROVIDER` environment variable (provider command only), command-line
//! flags. The global seed replaces every section's own `seed`.

use std::path::{Path, PathBuf};

use curate_core::align::RoundConfig;
use curate_core::dedup::DedupConfig;
use curate_core::filters::RuleConfig;
use curate_core::longtail::ProbeConfig;
use curate_core::model_client::PROVIDER_ENV;
use curate_core::sft::{Lambdas, SynthesisConfig};
use curate_core::tokenizer::{CjkUnit, DEFAULT_UNKNOWN};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub rules: RuleConfig,
    pub dirty_words: Option<PathBuf>,
    /// Reference corpus for the web stage-2 character model.
    pub lm_reference: Option<PathBuf>,
    pub lm_order: usize,
    pub lm_smoothing: f64,
    pub book_profile: String,
    pub stackexchange_min_score: i64,
    pub stackexchange_max_answers: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            rules: RuleConfig::default(),
            dirty_words: None,
            lm_reference: None,
            lm_order: 5,
            lm_smoothing: 0.01,
            book_profile: "cbook".into(),
            stackexchange_min_score: 4,
            stackexchange_max_answers: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSection {
    pub scale: f64,
    pub draws: usize,
    pub context_length: usize,
    pub separator: Option<u32>,
    pub max_lr: f64,
    pub min_lr: f64,
    pub warmup_fraction: f64,
}

impl Default for MixtureSection {
    fn default() -> Self {
        MixtureSection {
            scale: 1.0,
            draws: 0,
            context_length: 4096,
            separator: None,
            max_lr: 3e-4,
            min_lr: 3e-5,
            warmup_fraction: curate_core::mixture::DEFAULT_WARMUP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub unknown_token: String,
    pub target: usize,
    pub pad_to: usize,
    pub unit: CjkUnit,
    pub strict: bool,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection {
            unknown_token: DEFAULT_UNKNOWN.into(),
            target: 19_190,
            pad_to: 51_200,
            unit: CjkUnit::Subword,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    /// Command line of the default provider for every role.
    pub command: Option<String>,
    pub generator: Option<String>,
    pub model: Option<String>,
    pub judge: Option<String>,
    pub scorer: Option<String>,
    pub policy: Option<String>,
    pub reference: Option<String>,
    /// One command per alignment round.
    pub snapshots: Vec<String>,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection {
            command: None,
            generator: None,
            model: None,
            judge: None,
            scorer: None,
            policy: None,
            reference: None,
            snapshots: Vec::new(),
            timeout_secs: 120,
            cache_dir: None,
        }
    }
}

impl ProviderSection {
    /// Role-specific command, else the environment override, else `command`.
    pub fn command_for(&self, role: &str) -> Option<String> {
        let specific = match role {
            "generator" => &self.generator,
            "model" => &self.model,
            "judge" => &self.judge,
            "scorer" => &self.scorer,
            "policy" => &self.policy,
            "reference" => &self.reference,
            _ => &None,
        };
        specific
            .clone()
            .or_else(|| std::env::var(PROVIDER_ENV).ok().filter(|s| !s.trim().is_empty()))
            .or_else(|| self.command.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub synthesis: SynthesisConfig,
    pub lambdas: Lambdas<f64>,
    pub quantile: f64,
}

impl Default for SftSection {
    fn default() -> Self {
        SftSection { synthesis: SynthesisConfig::default(), lambdas: Lambdas::default(), quantile: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub rounds: RoundConfig<f64>,
    pub mapping: String,
}

impl Default for AlignSection {
    fn default() -> Self {
        AlignSection { rounds: RoundConfig::default(), mapping: "generic".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,
    pub filter: FilterSection,
    pub dedup: DedupConfig,
    pub mixture: MixtureSection,
    pub tokenizer: TokenizerSection,
    pub provider: ProviderSection,
    pub probe: ProbeConfig,
    pub sft: SftSection,
    pub align: AlignSection,
}

fn invalid(key: &str, reason: impl ToString) -> CliError {
    CliError::ConfigInvalid { key: key.to_string(), reason: reason.to_string() }
}

fn check_unit(key: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} is outside [0, 1]")))
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg.split('`').nth(1).unwrap_or("").to_string();
            invalid(&key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies flag overrides and pushes the global seed into every section.
    pub fn finish(mut self, seed: Option<u64>, workers: Option<usize>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(w) = workers {
            self.workers = w;
        }
        self.dedup.seed = self.seed;
        self.probe.seed = self.seed;
        self.sft.synthesis.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.filter.rules.validate().map_err(|e| invalid("filter.rules", e))?;
        if self.filter.lm_order < 2 {
            return Err(invalid("filter.lm_order", "must be at least 2"));
        }
        if !(self.filter.lm_smoothing > 0.0) {
            return Err(invalid("filter.lm_smoothing", "must be positive"));
        }
        self.dedup.validate().map_err(|e| invalid("dedup", e))?;
        if !(self.mixture.scale > 0.0) {
            return Err(invalid("mixture.scale", "must be positive"));
        }
        check_unit("mixture.warmup_fraction", self.mixture.warmup_fraction)?;
        check_unit("probe.epsilon", self.probe.epsilon)?;
        if self.probe.k == 0 {
            return Err(invalid("probe.k", "must be at least 1"));
        }
        if self.probe.max_rounds == 0 {
            return Err(invalid("probe.max_rounds", "must be at least 1"));
        }
        check_unit("sft.quantile", self.sft.quantile)?;
        self.align.rounds.validate().map_err(|e| invalid("align.rounds", e))?;
        Ok(())
    }
}
