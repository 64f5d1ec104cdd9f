use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::DEFAULT_TERMINALS;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{key}: {value} is outside {range}")]
    OutOfRange { key: &'static str, value: f64, range: &'static str },
    #[error("{key}: invalid pattern: {reason}")]
    BadPattern { key: &'static str, reason: String },
}

/// All filter thresholds. Defaults are the published values; keys not listed
/// here are rejected when loading a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub web: WebRules,
    pub code: CodeRules,
    pub encyclopedia: EncyclopediaRules,
    pub book: BookRules,
    pub news: NewsRules,
    pub zhihu: ZhihuRules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WebRules {
    pub min_length: usize,
    pub short_sentence_chars: usize,
    pub max_short_sentence_ratio: f64,
    pub blocked_substrings: Vec<String>,
    /// Whole-token, case-insensitive. Loaded from a word-list file.
    pub dirty_words: BTreeSet<String>,
    pub max_hash_ellipsis_ratio: f64,
    pub max_bullet_line_ratio: f64,
    pub max_ellipsis_line_ratio: f64,
    pub terminal_punctuation: Vec<char>,
    pub max_perplexity: f64,
    pub min_language_score: f64,
    pub target_languages: Vec<String>,
    pub stage3_min_length: usize,
    pub min_paragraphs: usize,
    pub max_paragraph_shrink: f64,
}

impl Default for WebRules {
    fn default() -> Self {
        let mut langs = vec!["en".to_string(), "zh".to_string()];
        langs.extend(
            [
                "de", "fr", "es", "pl", "it", "nl", "tr", "pt", "ru", "fi", "cs", "ja", "no", "ko", "da", "id", "ar",
                "uk", "ca", "hu", "ro", "fa", "bg", "el", "he", "hi", "hr",
            ]
            .map(String::from),
        );
        WebRules {
            min_length: 512,
            short_sentence_chars: 16,
            max_short_sentence_ratio: 0.5,
            blocked_substrings: vec!["javascript".into(), "lorem ipsum".into(), "{".into()],
            dirty_words: BTreeSet::new(),
            max_hash_ellipsis_ratio: 0.1,
            max_bullet_line_ratio: 0.9,
            max_ellipsis_line_ratio: 0.3,
            terminal_punctuation: DEFAULT_TERMINALS.to_vec(),
            max_perplexity: 1000.0,
            min_language_score: 0.6,
            target_languages: langs,
            stage3_min_length: 500,
            min_paragraphs: 3,
            max_paragraph_shrink: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeRules {
    pub min_length: usize,
    pub min_length_exempt_extensions: Vec<String>,
    pub max_length: usize,
    pub min_line_length: usize,
    pub max_line_length: usize,
    pub max_numeric_fraction: f64,
    pub min_alpha_fraction: f64,
    pub blocked_phrases: Vec<String>,
    pub marker_words: Vec<String>,
    pub max_marker_line_ratio: f64,
}

impl Default for CodeRules {
    fn default() -> Self {
        CodeRules {
            min_length: 100,
            min_length_exempt_extensions: vec![".sql".into()],
            max_length: 200_000,
            min_line_length: 20,
            max_line_length: 1000,
            max_numeric_fraction: 0.7,
            min_alpha_fraction: 0.3,
            blocked_phrases: vec!["configuration file".into(), "test file".into()],
            marker_words: vec!["config".into(), "test".into()],
            max_marker_line_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncyclopediaRules {
    pub min_length: usize,
    pub min_cjk_fraction: f64,
    /// Regular expressions; a matching line is removed by the cleaner.
    pub strip_patterns: Vec<String>,
}

impl Default for EncyclopediaRules {
    fn default() -> Self {
        EncyclopediaRules {
            min_length: 50,
            min_cjk_fraction: 0.70,
            strip_patterns: vec![
                r"^\s*(参考资料|参考文献|词条标签|目录|编辑本段|展开全部|收起|百度百科内容由网友共同编辑).*$".into(),
                r"^\s*\[\d+\]\s*$".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookProfileRules {
    pub min_length: usize,
    pub short_line_words: usize,
    pub max_short_line_ratio: f64,
    pub min_cjk_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BookRules {
    pub cbook: BookProfileRules,
    pub bestseller: BookProfileRules,
}

impl Default for BookRules {
    fn default() -> Self {
        BookRules {
            cbook: BookProfileRules {
                min_length: 3000,
                short_line_words: 6,
                max_short_line_ratio: 0.60,
                min_cjk_fraction: 0.45,
            },
            bestseller: BookProfileRules {
                min_length: 170,
                short_line_words: 6,
                max_short_line_ratio: 0.29,
                min_cjk_fraction: 0.79,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewsRules {
    pub min_length: usize,
    pub short_line_words: usize,
    pub max_short_line_ratio: f64,
    pub min_cjk_fraction: f64,
    pub strip_patterns: Vec<String>,
}

impl Default for NewsRules {
    fn default() -> Self {
        NewsRules {
            min_length: 170,
            short_line_words: 6,
            max_short_line_ratio: 0.25,
            min_cjk_fraction: 0.40,
            strip_patterns: vec![
                r"^\s*(来源|稿源|责任编辑|编辑|记者|作者|Source|Editor|Reporter)\s*[:：].*$".into(),
                r"^\s*\d{4}\s*[-/年.]\s*\d{1,2}\s*[-/月.]\s*\d{1,2}\s*日?(\s+\d{1,2}:\d{2}(:\d{2})?)?\s*$".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZhihuRules {
    pub min_cjk_chars: usize,
    pub min_cjk_chars_high_quality: usize,
    /// Summed upvotes, thanks, bookmarks and followers that mark a high-quality author.
    pub high_quality_engagement: u64,
    pub min_upvotes: u64,
    pub editor_terms: Vec<String>,
    pub max_editor_mentions: usize,
    pub drop_sentence_prefixes: Vec<String>,
}

impl Default for ZhihuRules {
    fn default() -> Self {
        ZhihuRules {
            min_cjk_chars: 200,
            min_cjk_chars_high_quality: 100,
            high_quality_engagement: 10_000,
            min_upvotes: 100,
            editor_terms: vec!["编辑".into(), "editor".into()],
            max_editor_mentions: 2,
            drop_sentence_prefixes: vec!["图片来源".into(), "image source".into()],
        }
    }
}

fn check_ratio(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange { key, value: v, range: "[0, 1]" })
    }
}

fn check_nonneg(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange { key, value: v, range: "[0, inf)" })
    }
}

fn check_patterns(key: &'static str, pats: &[String]) -> Result<(), ConfigError> {
    for p in pats {
        regex::Regex::new(p).map_err(|e| ConfigError::BadPattern { key, reason: e.to_string() })?;
    }
    Ok(())
}

impl RuleConfig {
    /// Checks every threshold against its legal range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.web;
        check_ratio("web.max_short_sentence_ratio", w.max_short_sentence_ratio)?;
        check_nonneg("web.max_hash_ellipsis_ratio", w.max_hash_ellipsis_ratio)?;
        check_ratio("web.max_bullet_line_ratio", w.max_bullet_line_ratio)?;
        check_ratio("web.max_ellipsis_line_ratio", w.max_ellipsis_line_ratio)?;
        check_nonneg("web.max_perplexity", w.max_perplexity)?;
        check_ratio("web.min_language_score", w.min_language_score)?;
        check_nonneg("web.max_paragraph_shrink", w.max_paragraph_shrink)?;
        let c = &self.code;
        check_ratio("code.max_numeric_fraction", c.max_numeric_fraction)?;
        check_ratio("code.min_alpha_fraction", c.min_alpha_fraction)?;
        check_ratio("code.max_marker_line_ratio", c.max_marker_line_ratio)?;
        check_ratio("encyclopedia.min_cjk_fraction", self.encyclopedia.min_cjk_fraction)?;
        check_patterns("encyclopedia.strip_patterns", &self.encyclopedia.strip_patterns)?;
        for (key_ratio, key_cjk, p) in [
            ("book.cbook.max_short_line_ratio", "book.cbook.min_cjk_fraction", &self.book.cbook),
            ("book.bestseller.max_short_line_ratio", "book.bestseller.min_cjk_fraction", &self.book.bestseller),
        ] {
            check_ratio(key_ratio, p.max_short_line_ratio)?;
            check_ratio(key_cjk, p.min_cjk_fraction)?;
        }
        check_ratio("news.max_short_line_ratio", self.news.max_short_line_ratio)?;
        check_ratio("news.min_cjk_fraction", self.news.min_cjk_fraction)?;
        check_patterns("news.strip_patterns", &self.news.strip_patterns)?;
        Ok(())
    }
}

/// Reads a word list: one entry per line, `#` comments and blank lines skipped.
pub fn load_word_list(path: &Path) -> io::Result<BTreeSet<String>> {
    let body = std::fs::read_to_string(path)?;
    Ok(body.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect())
}

impl WebRules {
    pub fn load_dirty_words(&mut self, path: &Path) -> io::Result<()> {
        self.dirty_words = load_word_list(path)?;
        Ok(())
    }
}
