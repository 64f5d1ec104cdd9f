//! Heuristic quality filters, one rule chain per corpus category.
//!
//! Every rule reports the value it measured next to its threshold, so a reject
//! ledger can be audited (and recomputed) line by line. Ratio thresholds are
//! exclusive: "over 25%" rejects at 0.2501 but not at 0.25.

mod charlm;
mod config;
mod langid;
mod qa;
mod sources;
mod web;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceKind;

pub use charlm::CharNGramModel;
pub use config::{
    load_word_list, BookProfileRules, BookRules, CodeRules, ConfigError, EncyclopediaRules, NewsRules, RuleConfig,
    WebRules, ZhihuRules,
};
pub use langid::{CharLanguageIdentifier, LangScore, LanguageScorer};
pub use qa::{clean_zhihu, filter_zhihu, select_stackexchange_answers, Answer, AuthorStats};
pub use sources::{
    clean_encyclopedia, clean_news, filter_academic, filter_book, filter_code, filter_encyclopedia, filter_news,
    strip_lines, BookProfile,
};
pub use web::{filter_web, WebStage};

/// One rejecting rule: what was measured and the threshold it crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleHit {
    pub rule_id: String,
    pub measured: f64,
    pub threshold: f64,
}

impl RuleHit {
    pub fn new(rule_id: &str, measured: f64, threshold: f64) -> Self {
        RuleHit { rule_id: rule_id.to_string(), measured, threshold }
    }
}

/// Outcome of a rule chain. `passed` holds exactly when no rule fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub rule_hits: Vec<RuleHit>,
    pub stage: u8,
}

impl FilterVerdict {
    pub fn from_hits(stage: u8, rule_hits: Vec<RuleHit>) -> Self {
        FilterVerdict { passed: rule_hits.is_empty(), rule_hits, stage }
    }

    pub fn first_rule(&self) -> Option<&str> {
        self.rule_hits.first().map(|h| h.rule_id.as_str())
    }

    pub fn hit(&self, rule_id: &str) -> Option<&RuleHit> {
        self.rule_hits.iter().find(|h| h.rule_id == rule_id)
    }
}

/// Accumulates hits in rule order.
#[derive(Default)]
pub(crate) struct Hits(Vec<RuleHit>);

impl Hits {
    /// Rejects when `measured > threshold`.
    pub fn above(&mut self, rule: &str, measured: f64, threshold: f64) {
        if measured > threshold {
            self.0.push(RuleHit::new(rule, measured, threshold));
        }
    }

    /// Rejects when `measured < threshold`.
    pub fn below(&mut self, rule: &str, measured: f64, threshold: f64) {
        if measured < threshold {
            self.0.push(RuleHit::new(rule, measured, threshold));
        }
    }

    pub fn push(&mut self, rule: &str, measured: f64, threshold: f64) {
        self.0.push(RuleHit::new(rule, measured, threshold));
    }

    pub fn verdict(self, stage: u8) -> FilterVerdict {
        FilterVerdict::from_hits(stage, self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("document {doc_id}: missing meta field {field:?}")]
    MissingMeta { doc_id: String, field: &'static str },
    #[error("web stage 2 needs a language model and a language scorer")]
    ModelRequired,
    #[error("unknown book profile {0:?}")]
    UnknownProfile(String),
    #[error("answer {0}: author engagement stats are missing")]
    MissingAuthorStats(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty text")]
    EmptyText,
    #[error("character {0:?} is outside the closed model vocabulary")]
    OutOfVocabulary(char),
    #[error("n-gram order must be at least 2, got {0}")]
    BadOrder(usize),
    #[error("invalid rule configuration: {0}")]
    Config(#[from] ConfigError),
}

/// The registered rule chains. Every corpus category maps to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chain {
    Web,
    Code,
    Encyclopedia,
    Academic,
    QaForum,
    Book,
    News,
    Legal,
    Patent,
    EduAssessment,
}

impl Chain {
    pub fn for_source(source: SourceKind) -> Chain {
        match source {
            SourceKind::Web => Chain::Web,
            SourceKind::Code => Chain::Code,
            SourceKind::Encyclopedia => Chain::Encyclopedia,
            SourceKind::Academic => Chain::Academic,
            SourceKind::QaForum => Chain::QaForum,
            SourceKind::Book => Chain::Book,
            SourceKind::News => Chain::News,
            SourceKind::Legal => Chain::Legal,
            SourceKind::Patent => Chain::Patent,
            SourceKind::EduAssessment => Chain::EduAssessment,
        }
    }

    /// Rule ids a verdict from this chain may contain.
    pub fn rule_catalog(self) -> &'static [&'static str] {
        match self {
            Chain::Web => web::CATALOG,
            Chain::Code => sources::CODE_CATALOG,
            Chain::Encyclopedia => sources::ENCYCLOPEDIA_CATALOG,
            Chain::Book => sources::BOOK_CATALOG,
            Chain::News => sources::NEWS_CATALOG,
            Chain::QaForum => qa::ZHIHU_CATALOG,
            // sources the appendix gives no drop rules for; only blank text is removed
            Chain::Academic | Chain::Legal | Chain::Patent | Chain::EduAssessment => sources::ACADEMIC_CATALOG,
        }
    }
}
