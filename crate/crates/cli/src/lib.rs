//! The `curate` command-line tool: every pipeline stage as a subcommand.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod io;
pub mod provider;
pub mod report;

use curate_core::align::AlignError;
use curate_core::corpus::{CorpusError, ManifestError};
use curate_core::dedup::DedupError;
use curate_core::filters::FilterError;
use curate_core::longtail::LongtailError;
use curate_core::mixture::MixtureError;
use curate_core::model_client::ModelError;
use curate_core::sft::SftError;
use curate_core::tfidf::TfidfError;
use curate_core::tokenizer::TokenizerError;
use thiserror::Error;

pub use commands::run;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("config key `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },
    #[error("provider: {0}")]
    Provider(String),
}

impl CliError {
    /// 1 for bad input or configuration, 2 for provider failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Provider(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

input_error!(
    std::io::Error,
    serde_json::Error,
    CorpusError,
    ManifestError,
    DedupError,
    FilterError,
    MixtureError,
    TokenizerError,
    TfidfError
);

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<LongtailError> for CliError {
    fn from(e: LongtailError) -> Self {
        match e {
            LongtailError::GeneratorFailure { .. } | LongtailError::ScoringFailure { .. } => {
                CliError::Provider(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SftError> for CliError {
    fn from(e: SftError) -> Self {
        match e {
            SftError::GeneratorFailure { .. } | SftError::ScorerFailure { .. } => CliError::Provider(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::ScorerFailure { .. } => CliError::Provider(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
