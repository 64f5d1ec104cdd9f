//! Text units shared by the filters, tokenizers and retrieval code.
//!
//! Lengths are always counted in Unicode scalar values. A line is delimited by LF,
//! a paragraph is a maximal run of non-blank lines, and a sentence ends at one of a
//! configurable set of terminal punctuation marks.

/// Default sentence terminators.
pub const DEFAULT_TERMINALS: &[char] = &['.', '!', '?', '。', '！', '？', '…'];

/// Length in code points.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// CJK Unified Ideographs, extensions A through F, and the compatibility blocks.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0x2CEB0..=0x2EBEF
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

pub fn cjk_count(s: &str) -> usize {
    s.chars().filter(|&c| is_cjk(c)).count()
}

/// Fraction of non-whitespace code points that are CJK ideographs; 0 for blank text.
pub fn cjk_fraction(s: &str) -> f64 {
    let mut total = 0usize;
    let mut cjk = 0usize;
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if is_cjk(c) {
            cjk += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        cjk as f64 / total as f64
    }
}

/// Lines split on LF, with a trailing CR removed.
pub fn lines(s: &str) -> impl Iterator<Item = &str> {
    s.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Lines that contain at least one non-whitespace character.
pub fn non_blank_lines(s: &str) -> impl Iterator<Item = &str> {
    lines(s).filter(|l| !l.trim().is_empty())
}

/// Paragraphs: maximal runs of non-blank lines separated by blank lines.
pub fn paragraphs(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in lines(s) {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n"));
    }
    out
}

/// Sentences: substrings ending at a terminal mark (kept), plus any unterminated
/// remainder. Surrounding whitespace is trimmed and empty pieces are skipped.
pub fn sentences<'a>(s: &'a str, terminals: &[char]) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = s.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if terminals.contains(&c) {
            // a run of terminals ("?!", "...") closes one sentence
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if terminals.contains(&d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let piece = s[start..end].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = end;
        }
    }
    let rest = s[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Word count: whitespace tokens for Latin text, one word per CJK code point.
pub fn word_count(s: &str) -> usize {
    let mut words = 0;
    let mut in_word = false;
    for c in s.chars() {
        if is_cjk(c) {
            words += 1;
            in_word = false;
        } else if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            words += 1;
            in_word = true;
        }
    }
    words
}

/// Lower-cased word and CJK-character tokens with punctuation removed; the unit
/// used by TF-IDF and overlap scoring.
pub fn terms(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Non-overlapping occurrences of `needle` in `hay`.
pub fn count_occurrences(hay: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return 0;
    }
    hay.matches(needle).count()
}
