//! QA-forum rules: Stack Exchange answer selection and Zhihu answer filtering.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::text::{self, cjk_count};

use super::{FilterError, FilterVerdict, Hits, RuleConfig};

pub(crate) const ZHIHU_CATALOG: &[&str] = &["min_cjk_length", "editor_mentions", "min_upvotes"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub answer_id: u64,
    pub score: i64,
    #[serde(default)]
    pub accepted: bool,
    #[serde(default)]
    pub body: String,
}

/// Keeps answers scoring at least `min_score` (or accepted), accepted first, then
/// by score descending and id ascending, at most `limit` of them.
pub fn select_stackexchange_answers(answers: &[Answer], min_score: i64, limit: usize) -> Vec<Answer> {
    let mut kept: Vec<Answer> = answers.iter().filter(|a| a.accepted || a.score >= min_score).cloned().collect();
    kept.sort_by(|a, b| b.accepted.cmp(&a.accepted).then(b.score.cmp(&a.score)).then(a.answer_id.cmp(&b.answer_id)));
    kept.truncate(limit);
    kept
}

/// Engagement summed over all of an author's answers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorStats {
    pub upvotes: u64,
    pub thanks: u64,
    pub bookmarks: u64,
    pub followers: u64,
}

impl AuthorStats {
    pub fn engagement(&self) -> u64 {
        self.upvotes + self.thanks + self.bookmarks + self.followers
    }

    pub fn is_high_quality(&self, threshold: u64) -> bool {
        self.engagement() >= threshold
    }
}

fn starts_with_ci(s: &str, prefix: &str) -> bool {
    s.to_lowercase().starts_with(&prefix.to_lowercase())
}

/// Drops sentences that begin with an image-credit prefix.
pub fn clean_zhihu(doc: &Document, cfg: &RuleConfig) -> Document {
    let z = &cfg.zhihu;
    let terminals = &cfg.web.terminal_punctuation;
    let mut out_lines = Vec::new();
    for line in text::lines(&doc.text) {
        let kept: Vec<&str> = text::sentences(line, terminals)
            .into_iter()
            .filter(|s| !z.drop_sentence_prefixes.iter().any(|p| starts_with_ci(s, p)))
            .collect();
        let mut rebuilt = String::new();
        for s in kept {
            if !rebuilt.is_empty() && rebuilt.chars().last().is_some_and(|c| c.is_ascii()) {
                rebuilt.push(' ');
            }
            rebuilt.push_str(s);
        }
        if !rebuilt.is_empty() || line.trim().is_empty() {
            out_lines.push(rebuilt);
        }
    }
    Document { text: out_lines.join("\n"), ..doc.clone() }
}

/// The answer's own upvote count is read from `meta.upvotes`.
pub fn filter_zhihu(
    answer: &Document,
    author: Option<&AuthorStats>,
    cfg: &RuleConfig,
) -> Result<FilterVerdict, FilterError> {
    let z = &cfg.zhihu;
    let author = author.ok_or_else(|| FilterError::MissingAuthorStats(answer.id.clone()))?;
    let upvotes = answer
        .meta_u64("upvotes")
        .ok_or_else(|| FilterError::MissingMeta { doc_id: answer.id.clone(), field: "upvotes" })?;
    let cleaned = clean_zhihu(answer, cfg);
    let min_len =
        if author.is_high_quality(z.high_quality_engagement) { z.min_cjk_chars_high_quality } else { z.min_cjk_chars };
    let mut hits = Hits::default();
    hits.below("min_cjk_length", cjk_count(&cleaned.text) as f64, min_len as f64);
    let lower = cleaned.text.to_lowercase();
    let mentions: usize = z.editor_terms.iter().map(|t| text::count_occurrences(&lower, &t.to_lowercase())).sum();
    hits.above("editor_mentions", mentions as f64, z.max_editor_mentions as f64);
    hits.below("min_upvotes", upvotes as f64, z.min_upvotes as f64);
    Ok(hits.verdict(1))
}
