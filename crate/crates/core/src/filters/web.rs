//! Web-page chain: coarse structural rules, model-based scoring, final checks.

use crate::corpus::Document;
use crate::text::{self, char_len};

use super::{CharNGramModel, FilterError, FilterVerdict, Hits, LanguageScorer, RuleConfig};

pub(crate) const CATALOG: &[&str] = &[
    "min_length",
    "short_sentence_ratio",
    "blocked_substring",
    "dirty_word",
    "hash_ellipsis_ratio",
    "bullet_line_ratio",
    "ellipsis_line_ratio",
    "terminal_punctuation",
    "garbled_characters",
    "perplexity",
    "language_score",
    "language_not_target",
    "paragraph_count",
    "paragraph_shrink",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WebStage {
    /// Structural and content heuristics.
    Coarse = 1,
    /// Perplexity and language identification.
    Model = 2,
    /// Final length and paragraph checks.
    Final = 3,
}

impl TryFrom<u8> for WebStage {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(WebStage::Coarse),
            2 => Ok(WebStage::Model),
            3 => Ok(WebStage::Final),
            _ => Err(format!("web stage must be 1, 2 or 3, got {v}")),
        }
    }
}

pub fn filter_web(
    doc: &Document,
    stage: WebStage,
    cfg: &RuleConfig,
    lm: Option<&CharNGramModel>,
    lid: Option<&dyn LanguageScorer>,
) -> Result<FilterVerdict, FilterError> {
    match stage {
        WebStage::Coarse => Ok(stage_one(&doc.text, cfg)),
        WebStage::Model => {
            let (lm, lid) = match (lm, lid) {
                (Some(lm), Some(lid)) => (lm, lid),
                _ => return Err(FilterError::ModelRequired),
            };
            stage_two(&doc.text, cfg, lm, lid)
        }
        WebStage::Final => {
            let original = doc.meta_u64("original_paragraph_count").ok_or_else(|| FilterError::MissingMeta {
                doc_id: doc.id.clone(),
                field: "original_paragraph_count",
            })?;
            Ok(stage_three(&doc.text, original, cfg))
        }
    }
}

const BULLETS: &[char] = &['•', '·', '●', '○', '▪', '■', '◦', '-', '*', '–', '—', '+'];

fn is_bullet_line(line: &str) -> bool {
    let t = line.trim_start();
    let Some(first) = t.chars().next() else { return false };
    if BULLETS.contains(&first) {
        return true;
    }
    // "1." / "12)" style enumerations
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && matches!(t[digits..].chars().next(), Some('.') | Some(')'))
}

fn ends_with_ellipsis(line: &str) -> bool {
    let t = line.trim_end();
    t.ends_with("...") || t.ends_with('…')
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Whole-token matches against the dirty-word list, including multi-word entries.
fn dirty_word_hits(text: &str, words: &std::collections::BTreeSet<String>) -> usize {
    if words.is_empty() {
        return 0;
    }
    let tokens: Vec<String> = text
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut hits = 0;
    for entry in words {
        let parts: Vec<&str> = entry.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        hits += tokens.windows(parts.len()).filter(|w| w.iter().zip(&parts).all(|(a, b)| a == b)).count();
    }
    hits
}

fn stage_one(text: &str, cfg: &RuleConfig) -> FilterVerdict {
    let w = &cfg.web;
    let mut hits = Hits::default();

    hits.below("min_length", char_len(text) as f64, w.min_length as f64);

    let sentences = text::sentences(text, &w.terminal_punctuation);
    let short = sentences.iter().filter(|s| char_len(s) < w.short_sentence_chars).count();
    hits.above("short_sentence_ratio", ratio(short, sentences.len()), w.max_short_sentence_ratio);

    let lower = text.to_lowercase();
    let blocked: usize = w.blocked_substrings.iter().map(|b| text::count_occurrences(&lower, &b.to_lowercase())).sum();
    hits.above("blocked_substring", blocked as f64, 0.0);
    hits.above("dirty_word", dirty_word_hits(text, &w.dirty_words) as f64, 0.0);

    let symbols = text.matches('#').count() + text.matches("...").count() + text.matches('…').count();
    let words = text::word_count(text);
    let symbol_ratio = if words == 0 { symbols as f64 } else { symbols as f64 / words as f64 };
    hits.above("hash_ellipsis_ratio", symbol_ratio, w.max_hash_ellipsis_ratio);

    let lines: Vec<&str> = text::non_blank_lines(text).collect();
    let bullets = lines.iter().filter(|l| is_bullet_line(l)).count();
    hits.above("bullet_line_ratio", ratio(bullets, lines.len()), w.max_bullet_line_ratio);
    let ellipses = lines.iter().filter(|l| ends_with_ellipsis(l)).count();
    hits.above("ellipsis_line_ratio", ratio(ellipses, lines.len()), w.max_ellipsis_line_ratio);

    let terminal_ok = text.trim_end().chars().last().is_some_and(|c| w.terminal_punctuation.contains(&c));
    if !terminal_ok {
        hits.push("terminal_punctuation", 0.0, 1.0);
    }

    let garbled = text.chars().filter(|&c| c == '\u{FFFD}').count();
    hits.above("garbled_characters", garbled as f64, 0.0);

    hits.verdict(1)
}

fn stage_two(
    text: &str,
    cfg: &RuleConfig,
    lm: &CharNGramModel,
    lid: &dyn LanguageScorer,
) -> Result<FilterVerdict, FilterError> {
    let w = &cfg.web;
    let mut hits = Hits::default();
    let ppl = lm.perplexity(text)?;
    hits.above("perplexity", ppl, w.max_perplexity);
    let scores = lid.scores(text)?;
    let best = scores.first().cloned().unwrap_or_default();
    // "score above 0.6": a score equal to the threshold is rejected
    if best.score <= w.min_language_score {
        hits.push("language_score", best.score, w.min_language_score);
    }
    if !w.target_languages.contains(&best.language) {
        hits.push("language_not_target", best.score, w.min_language_score);
    }
    Ok(hits.verdict(2))
}

fn stage_three(text: &str, original_paragraphs: u64, cfg: &RuleConfig) -> FilterVerdict {
    let w = &cfg.web;
    let mut hits = Hits::default();
    hits.below("min_length", char_len(text) as f64, w.stage3_min_length as f64);
    let kept = text::paragraphs(text).len();
    hits.below("paragraph_count", kept as f64, w.min_paragraphs as f64);
    let shrink = if kept == 0 {
        if original_paragraphs == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        original_paragraphs as f64 / kept as f64
    };
    hits.above("paragraph_shrink", shrink, w.max_paragraph_shrink);
    hits.verdict(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceKind;
    use crate::filters::{Chain, LangScore};

    fn web(text: &str) -> Document {
        Document::new("w", text, SourceKind::Web, "en")
    }

    /// Clean English prose of exactly `n` code points ending in a full stop.
    fn prose(n: usize) -> String {
        let unit = "The river runs past the old mill and into the valley below. ";
        let mut s = unit.repeat(n / unit.len() + 2);
        s.truncate(n - 1);
        let mut s = s.trim_end().to_string();
        let pad = n - 1 - s.len();
        s.push_str(&"x".repeat(pad));
        s.push('.');
        assert_eq!(s.chars().count(), n);
        s
    }

    #[test]
    fn short_page_rejected_on_min_length_only() {
        let v = filter_web(&web(&prose(400)), WebStage::Coarse, &RuleConfig::default(), None, None).unwrap();
        assert!(!v.passed);
        assert_eq!(v.rule_hits.len(), 1, "{:?}", v.rule_hits);
        assert_eq!(v.rule_hits[0], crate::filters::RuleHit::new("min_length", 400.0, 512.0));
    }

    #[test]
    fn empty_page_measures_zero() {
        let v = filter_web(&web(""), WebStage::Coarse, &RuleConfig::default(), None, None).unwrap();
        assert_eq!(v.hit("min_length").unwrap().measured, 0.0);
    }

    #[test]
    fn long_clean_page_passes() {
        let v = filter_web(&web(&prose(600)), WebStage::Coarse, &RuleConfig::default(), None, None).unwrap();
        assert!(v.passed, "{:?}", v.rule_hits);
    }

    #[test]
    fn stage_three_paragraph_shrink() {
        let para = "Paragraph text that is long enough to matter here, with a full sentence in it.";
        let body4 = [para; 4].join("\n\n");
        let padded = body4.replacen("here,", &format!("here,{}", "z".repeat(600 - body4.chars().count())), 1);
        assert_eq!(padded.chars().count(), 600);
        let doc = web(&padded).with_meta("original_paragraph_count", 24);
        let v = filter_web(&doc, WebStage::Final, &RuleConfig::default(), None, None).unwrap();
        assert_eq!(v.rule_hits, vec![crate::filters::RuleHit::new("paragraph_shrink", 6.0, 5.0)]);

        // 20 originals over 4 retained is exactly 5x, which is not "more than five times"
        let doc = web(&padded).with_meta("original_paragraph_count", 20);
        assert!(filter_web(&doc, WebStage::Final, &RuleConfig::default(), None, None).unwrap().passed);
    }

    #[test]
    fn stage_three_needs_original_count() {
        let err = filter_web(&web("x"), WebStage::Final, &RuleConfig::default(), None, None).unwrap_err();
        assert!(matches!(err, FilterError::MissingMeta { field: "original_paragraph_count", .. }));
    }

    #[test]
    fn stage_two_needs_models() {
        let err = filter_web(&web("x"), WebStage::Model, &RuleConfig::default(), None, None).unwrap_err();
        assert_eq!(err, FilterError::ModelRequired);
    }

    struct Fixed(&'static str, f64);
    impl LanguageScorer for Fixed {
        fn scores(&self, _text: &str) -> Result<Vec<LangScore>, FilterError> {
            Ok(vec![LangScore { language: self.0.into(), score: self.1 }])
        }
    }

    #[test]
    fn stage_two_language_threshold_is_exclusive() {
        let lm = CharNGramModel::fit([prose(2000).as_str()], 5, 0.1).unwrap();
        let cfg = RuleConfig::default();
        let text = prose(600);
        let at = filter_web(&web(&text), WebStage::Model, &cfg, Some(&lm), Some(&Fixed("en", 0.6))).unwrap();
        assert_eq!(at.first_rule(), Some("language_score"));
        let above = filter_web(&web(&text), WebStage::Model, &cfg, Some(&lm), Some(&Fixed("en", 0.61))).unwrap();
        assert!(above.passed, "{:?}", above.rule_hits);
        let foreign = filter_web(&web(&text), WebStage::Model, &cfg, Some(&lm), Some(&Fixed("xx", 0.99))).unwrap();
        assert_eq!(foreign.first_rule(), Some("language_not_target"));
    }

    #[test]
    fn hits_are_in_catalog() {
        let cfg = RuleConfig::default();
        let nasty = "# ... { javascript\n- a...\n- b…\n\u{FFFD}";
        let v = filter_web(&web(nasty), WebStage::Coarse, &cfg, None, None).unwrap();
        assert!(v.rule_hits.len() >= 6);
        for h in &v.rule_hits {
            assert!(Chain::Web.rule_catalog().contains(&h.rule_id.as_str()), "{}", h.rule_id);
        }
    }

    #[test]
    fn dirty_words_match_whole_tokens() {
        let words = ["darn".to_string(), "blast it".to_string()].into_iter().collect();
        assert_eq!(dirty_word_hits("Darn! it is darned", &words), 1);
        assert_eq!(dirty_word_hits("oh BLAST it all", &words), 1);
        assert_eq!(dirty_word_hits("blastit", &words), 0);
    }

    #[test]
    fn bullets() {
        assert!(is_bullet_line("  • item"));
        assert!(is_bullet_line("12. item"));
        assert!(is_bullet_line("3) item"));
        assert!(!is_bullet_line("2024 was a year"));
        assert!(!is_bullet_line("plain"));
    }
}
