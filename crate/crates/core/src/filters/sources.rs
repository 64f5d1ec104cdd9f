//! Chains for code, encyclopedia, book, news and the pass-through sources.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use regex::Regex;

use crate::corpus::Document;
use crate::text::{self, char_len, cjk_fraction};

use super::{BookProfileRules, FilterError, FilterVerdict, Hits, RuleConfig};

pub(crate) const CODE_CATALOG: &[&str] = &[
    "min_length",
    "max_length",
    "min_line_length",
    "max_line_length",
    "numeric_fraction",
    "alpha_fraction",
    "blocked_phrase",
    "marker_line_ratio",
];
pub(crate) const ENCYCLOPEDIA_CATALOG: &[&str] = &["min_length", "cjk_fraction"];
pub(crate) const BOOK_CATALOG: &[&str] = &["min_length", "short_line_ratio", "cjk_fraction"];
pub(crate) const NEWS_CATALOG: &[&str] = &["min_length", "short_line_ratio", "cjk_fraction"];
pub(crate) const ACADEMIC_CATALOG: &[&str] = &["empty_text"];

fn compiled(pattern: &str) -> Option<Regex> {
    static CACHE: OnceLock<Mutex<HashMap<String, Option<Regex>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(pattern.to_string()).or_insert_with(|| Regex::new(pattern).ok()).clone()
}

/// Drops every line matching one of `patterns`. Invalid patterns are ignored;
/// `RuleConfig::validate` reports them.
pub fn strip_lines(text: &str, patterns: &[String]) -> String {
    let regexes: Vec<Regex> = patterns.iter().filter_map(|p| compiled(p)).collect();
    if regexes.is_empty() {
        return text.to_string();
    }
    text::lines(text).filter(|l| !regexes.iter().any(|r| r.is_match(l))).collect::<Vec<_>>().join("\n")
}

fn has_extension(doc: &Document, ext: &str) -> bool {
    let ext_lower = ext.to_lowercase();
    ["filename", "path"].iter().any(|k| doc.meta_str(k).is_some_and(|f| f.to_lowercase().ends_with(&ext_lower)))
        || doc.meta_str("extension").is_some_and(|e| {
            let e = e.to_lowercase();
            e == ext_lower || format!(".{e}") == ext_lower
        })
}

pub fn filter_code(doc: &Document, cfg: &RuleConfig) -> FilterVerdict {
    let c = &cfg.code;
    let t = &doc.text;
    let mut hits = Hits::default();
    let len = char_len(t);

    let exempt = c.min_length_exempt_extensions.iter().any(|e| has_extension(doc, e));
    if !exempt {
        hits.below("min_length", len as f64, c.min_length as f64);
    }
    hits.above("max_length", len as f64, c.max_length as f64);

    let lines: Vec<&str> = text::non_blank_lines(t).collect();
    if let Some(shortest) = lines.iter().map(|l| char_len(l)).min() {
        hits.below("min_line_length", shortest as f64, c.min_line_length as f64);
    }
    if let Some(longest) = lines.iter().map(|l| char_len(l)).max() {
        hits.above("max_line_length", longest as f64, c.max_line_length as f64);
    }

    let visible: Vec<char> = t.chars().filter(|c| !c.is_whitespace()).collect();
    if !visible.is_empty() {
        let n = visible.len() as f64;
        let numeric = visible.iter().filter(|c| c.is_numeric()).count() as f64 / n;
        let alpha = visible.iter().filter(|c| c.is_alphabetic()).count() as f64 / n;
        hits.above("numeric_fraction", numeric, c.max_numeric_fraction);
        hits.below("alpha_fraction", alpha, c.min_alpha_fraction);
    }

    let lower = t.to_lowercase();
    let phrases: usize = c.blocked_phrases.iter().map(|p| text::count_occurrences(&lower, &p.to_lowercase())).sum();
    hits.above("blocked_phrase", phrases as f64, 0.0);

    let markers: Vec<String> = c.marker_words.iter().map(|w| w.to_lowercase()).collect();
    let marked = lines
        .iter()
        .filter(|l| {
            let l = l.to_lowercase();
            markers.iter().any(|m| l.contains(m.as_str()))
        })
        .count();
    if !lines.is_empty() {
        hits.above("marker_line_ratio", marked as f64 / lines.len() as f64, c.max_marker_line_ratio);
    }
    hits.verdict(1)
}

/// Removes boilerplate lines and puts the entry title on the first line.
pub fn clean_encyclopedia(doc: &Document, cfg: &RuleConfig) -> Document {
    let body = strip_lines(&doc.text, &cfg.encyclopedia.strip_patterns);
    let body = body.trim_matches('\n');
    let text = match doc.meta_str("title") {
        Some(title) if !title.is_empty() && text::lines(body).next() != Some(title) => format!("{title}\n{body}"),
        _ => body.to_string(),
    };
    Document { text, ..doc.clone() }
}

pub fn filter_encyclopedia(doc: &Document, cfg: &RuleConfig) -> FilterVerdict {
    let e = &cfg.encyclopedia;
    let mut hits = Hits::default();
    hits.below("min_length", char_len(&doc.text) as f64, e.min_length as f64);
    hits.below("cjk_fraction", cjk_fraction(&doc.text), e.min_cjk_fraction);
    hits.verdict(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BookProfile {
    CBook,
    Bestseller,
}

impl FromStr for BookProfile {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, FilterError> {
        match s {
            "cbook" => Ok(BookProfile::CBook),
            "bestseller" => Ok(BookProfile::Bestseller),
            other => Err(FilterError::UnknownProfile(other.to_string())),
        }
    }
}

fn short_line_ratio(text: &str, min_words: usize) -> f64 {
    let lines: Vec<&str> = text::non_blank_lines(text).collect();
    if lines.is_empty() {
        return 0.0;
    }
    let short = lines.iter().filter(|l| text::word_count(l) < min_words).count();
    short as f64 / lines.len() as f64
}

fn length_lines_cjk(text: &str, p: &BookProfileRules) -> FilterVerdict {
    let mut hits = Hits::default();
    hits.below("min_length", char_len(text) as f64, p.min_length as f64);
    hits.above("short_line_ratio", short_line_ratio(text, p.short_line_words), p.max_short_line_ratio);
    hits.below("cjk_fraction", cjk_fraction(text), p.min_cjk_fraction);
    hits.verdict(1)
}

pub fn filter_book(doc: &Document, profile: BookProfile, cfg: &RuleConfig) -> FilterVerdict {
    let rules = match profile {
        BookProfile::CBook => &cfg.book.cbook,
        BookProfile::Bestseller => &cfg.book.bestseller,
    };
    length_lines_cjk(&doc.text, rules)
}

pub fn clean_news(doc: &Document, cfg: &RuleConfig) -> Document {
    let text = strip_lines(&doc.text, &cfg.news.strip_patterns).trim_matches('\n').to_string();
    Document { text, ..doc.clone() }
}

/// Measures the article after header and footer lines are stripped.
pub fn filter_news(doc: &Document, cfg: &RuleConfig) -> FilterVerdict {
    let n = &cfg.news;
    let cleaned = clean_news(doc, cfg);
    let rules = BookProfileRules {
        min_length: n.min_length,
        short_line_words: n.short_line_words,
        max_short_line_ratio: n.max_short_line_ratio,
        min_cjk_fraction: n.min_cjk_fraction,
    };
    length_lines_cjk(&cleaned.text, &rules)
}

/// Academic, legal, patent and assessment text only loses blank records.
pub fn filter_academic(doc: &Document) -> FilterVerdict {
    let mut hits = Hits::default();
    if doc.text.trim().is_empty() {
        hits.push("empty_text", 0.0, 1.0);
    }
    hits.verdict(1)
}
