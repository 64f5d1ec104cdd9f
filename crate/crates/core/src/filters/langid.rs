//! Language identification from per-language character n-gram likelihoods.
//!
//! Text is cut into script runs (Han/kana, Hangul, Latin, Cyrillic, ...). Each run
//! is scored by every language model, the run's likelihoods are turned into a
//! posterior by softmax, and the posteriors are averaged with weights equal to the
//! run's share of letters. Han ideographs, kana and Hangul syllables are folded to
//! one symbol per class so small reference texts generalise.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CharNGramModel, FilterError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LangScore {
    pub language: String,
    pub score: f64,
}

/// Anything that ranks languages for a text, best first.
pub trait LanguageScorer: Send + Sync {
    fn scores(&self, text: &str) -> Result<Vec<LangScore>, FilterError>;
}

const PROFILES: &[(&str, &str)] = &[
    ("en", include_str!("profiles/en.txt")),
    ("zh", include_str!("profiles/zh.txt")),
    ("de", include_str!("profiles/de.txt")),
    ("fr", include_str!("profiles/fr.txt")),
    ("es", include_str!("profiles/es.txt")),
    ("ja", include_str!("profiles/ja.txt")),
    ("ko", include_str!("profiles/ko.txt")),
    ("ru", include_str!("profiles/ru.txt")),
];

fn fold(c: char) -> char {
    let u = c as u32;
    if crate::text::is_cjk(c) {
        '一'
    } else if (0x3040..=0x309F).contains(&u) {
        'あ'
    } else if (0x30A0..=0x30FF).contains(&u) {
        'ア'
    } else if (0xAC00..=0xD7A3).contains(&u) || (0x1100..=0x11FF).contains(&u) {
        '가'
    } else if c.is_numeric() {
        '0'
    } else if c.is_whitespace() {
        ' '
    } else if (0x3000..=0x303F).contains(&u) || (0xFF00..=0xFFEF).contains(&u) {
        '。'
    } else {
        c.to_lowercase().next().unwrap_or(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Script {
    Common,
    Cjk,
    Hangul,
    Latin,
    Cyrillic,
    Other(u32),
}

fn script(c: char) -> Script {
    let u = c as u32;
    if crate::text::is_cjk(c) || (0x3040..=0x30FF).contains(&u) {
        Script::Cjk
    } else if (0xAC00..=0xD7A3).contains(&u) || (0x1100..=0x11FF).contains(&u) {
        Script::Hangul
    } else if !c.is_alphabetic() {
        Script::Common
    } else if u < 0x0250 || (0x1E00..=0x1EFF).contains(&u) {
        Script::Latin
    } else if (0x0400..=0x04FF).contains(&u) {
        Script::Cyrillic
    } else {
        Script::Other(u >> 7)
    }
}

/// Splits into runs of one script; neutral characters join the run they sit in.
fn script_runs(text: &str) -> Vec<(String, usize)> {
    let mut runs: Vec<(Script, String, usize)> = Vec::new();
    let mut pending = String::new();
    for c in text.chars() {
        let s = script(c);
        if s == Script::Common {
            match runs.last_mut() {
                Some(run) => run.1.push(c),
                None => pending.push(c),
            }
            continue;
        }
        match runs.last_mut() {
            Some(run) if run.0 == s => {
                run.1.push(c);
                run.2 += 1;
            }
            _ => {
                let mut body = std::mem::take(&mut pending);
                body.push(c);
                runs.push((s, body, 1));
            }
        }
    }
    if runs.is_empty() {
        return vec![(pending, 1)];
    }
    runs.into_iter().map(|(_, body, letters)| (body, letters)).collect()
}

pub struct CharLanguageIdentifier {
    models: Vec<(String, CharNGramModel)>,
}

impl CharLanguageIdentifier {
    /// Builds models from (language, reference text) pairs.
    pub fn from_profiles<'a, I>(profiles: I) -> Result<Self, FilterError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut models = Vec::new();
        for (lang, sample) in profiles {
            let folded: String = sample.chars().map(fold).collect();
            models.push((lang.to_string(), CharNGramModel::fit([folded.as_str()], 3, 0.5)?));
        }
        if models.is_empty() {
            return Err(FilterError::EmptyCorpus);
        }
        let shared: BTreeSet<char> = models.iter().flat_map(|(_, m)| m.vocabulary().iter().copied()).collect();
        for (_, m) in &mut models {
            m.extend_vocabulary(shared.iter().copied());
        }
        Ok(CharLanguageIdentifier { models })
    }

    /// Identifier over the bundled reference texts.
    pub fn builtin() -> Self {
        Self::from_profiles(PROFILES.iter().copied()).expect("bundled profiles are non-empty")
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|(l, _)| l.as_str())
    }

    fn run_posterior(&self, run: &str) -> Result<Vec<f64>, FilterError> {
        let folded: String = run.chars().map(fold).collect();
        let lls: Vec<f64> = self.models.iter().map(|(_, m)| m.log_likelihood(&folded)).collect::<Result<_, _>>()?;
        let max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lls.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }
}

impl LanguageScorer for CharLanguageIdentifier {
    fn scores(&self, text: &str) -> Result<Vec<LangScore>, FilterError> {
        if text.trim().is_empty() {
            return Err(FilterError::EmptyText);
        }
        let runs = script_runs(text);
        let letters: usize = runs.iter().map(|r| r.1).sum();
        let mut acc = vec![0.0; self.models.len()];
        for (run, n) in &runs {
            let w = *n as f64 / letters as f64;
            for (a, p) in acc.iter_mut().zip(self.run_posterior(run)?) {
                *a += w * p;
            }
        }
        let mut out: Vec<LangScore> = self
            .models
            .iter()
            .zip(acc)
            .map(|((lang, _), score)| LangScore { language: lang.clone(), score: score.clamp(0.0, 1.0) })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.language.cmp(&b.language)));
        Ok(out)
    }
}
