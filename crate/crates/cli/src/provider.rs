//! Model handles for each role, reached through provider subprocesses.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use curate_core::model_client::{
    ModelClient, NgramModel, ProtocolModel, ReplyCache, ScriptedModel, SubprocessTransport,
};
use curate_core::tokenizer::TokenizerSpec;
use serde::Deserialize;

use crate::config::ProviderSection;
use crate::io::{read_docs, read_text};
use crate::CliError;

/// Connects to the provider configured for `role`.
pub fn connect(section: &ProviderSection, role: &str) -> Result<Box<dyn ModelClient>, CliError> {
    let cmd = section.command_for(role).ok_or_else(|| {
        CliError::Provider(format!("no provider command for role {role:?} (set provider.command or CURATE_PROVIDER)"))
    })?;
    connect_command(section, &cmd)
}

pub fn connect_command(section: &ProviderSection, cmd: &str) -> Result<Box<dyn ModelClient>, CliError> {
    let transport = SubprocessTransport::from_command_line(cmd, Duration::from_secs(section.timeout_secs.max(1)))?;
    let mut model = ProtocolModel::connect(transport)?;
    if let Some(dir) = &section.cache_dir {
        model = model.with_cache(ReplyCache::new(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?);
    }
    Ok(Box::new(model))
}

/// Canned replies for `serve --scripted`: exact prompts, then the fallback.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub name: Option<String>,
    #[serde(default)]
    pub replies: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: Option<String>,
}

/// The model `serve` answers with: an n-gram model fitted on a corpus, or a
/// script, or both (script for generation, n-gram for scoring).
pub fn local_model(
    corpus: Option<&str>,
    tokenizer: Option<&str>,
    unknown: &str,
    order: usize,
    k: f64,
    script: Option<&str>,
) -> Result<Box<dyn ModelClient>, CliError> {
    let ngram = match (corpus, tokenizer) {
        (Some(c), Some(t)) => {
            let spec = Arc::new(TokenizerSpec::load(std::path::Path::new(t), unknown)?);
            let docs = read_docs(c)?;
            Some(Arc::new(NgramModel::fit_texts(docs.iter().map(|d| d.text.as_str()), spec, order, k)?))
        }
        (None, None) => None,
        _ => return Err(CliError::Input("--corpus and --tokenizer go together".into())),
    };
    match script {
        Some(path) => {
            let s: ScriptFile = serde_json::from_str(&read_text(path)?)?;
            let mut m = ScriptedModel::new(s.name.as_deref().unwrap_or("script"));
            m.replies = s.replies;
            m.fallback = s.fallback;
            if let Some(n) = ngram {
                m.scorer = Some(n as Arc<dyn ModelClient>);
            }
            Ok(Box::new(m))
        }
        None => match ngram {
            Some(n) => Ok(Box::new(n)),
            None => Err(CliError::Input("serve needs --corpus and --tokenizer, or --scripted".into())),
        },
    }
}
