//! Filter golden corpus: for every rule, one document on each side of its
//! threshold, with the rule ids each must trigger.

use std::collections::BTreeSet;

use curate_core::corpus::{Document, SourceKind};
use curate_core::filters::{
    clean_encyclopedia, filter_academic, filter_book, filter_code, filter_encyclopedia, filter_news, filter_web,
    filter_zhihu, AuthorStats, BookProfile, CharNGramModel, FilterError, LangScore, LanguageScorer, RuleConfig,
    WebStage,
};

pub const SENTENCE: &str = "The river runs past the old mill and into the valley below.";
const HAN: &str = "数据质量决定模型能力知识来源广泛内容丰富结构清晰";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chain {
    Web(u8),
    Code,
    Encyclopedia,
    Book(BookProfile),
    News,
    Zhihu,
    Academic,
}

pub struct Case {
    pub name: String,
    pub chain: Chain,
    pub doc: Document,
    pub author: Option<AuthorStats>,
    /// Language scorer output for web stage 2.
    pub language: Option<(&'static str, f64)>,
    pub expect: BTreeSet<String>,
}

struct Fixed(&'static str, f64);

impl LanguageScorer for Fixed {
    fn scores(&self, _text: &str) -> Result<Vec<LangScore>, FilterError> {
        Ok(vec![LangScore { language: self.0.into(), score: self.1 }])
    }
}

/// Default thresholds, a one-word dirty list, and a perplexity cap suited to a
/// character model.
pub fn config() -> RuleConfig {
    let mut c = RuleConfig::default();
    c.web.dirty_words.insert("darn".into());
    c.web.max_perplexity = 10.0;
    c
}

pub fn reference_model() -> CharNGramModel {
    let texts =
        [format!("{SENTENCE} ").repeat(30), "A small boat drifts along the quiet water near the town. ".repeat(20)];
    CharNGramModel::fit(texts.iter().map(String::as_str), 5, 0.01).unwrap()
}

/// English prose of exactly `n` code points ending in a full stop.
pub fn prose(n: usize) -> String {
    let unit = format!("{SENTENCE} ");
    let mut s: String = unit.repeat(n / unit.len() + 2).chars().take(n - 1).collect();
    s = s.trim_end().to_string();
    while s.chars().count() < n - 1 {
        s.push('x');
    }
    s.push('.');
    s
}

/// `n` Han characters.
pub fn han(n: usize) -> String {
    HAN.chars().cycle().take(n).collect()
}

fn code_line(n: usize) -> String {
    format!("let {};", "a".repeat(n - 5))
}

fn code_of(lines: &[usize]) -> String {
    lines.iter().map(|&n| code_line(n)).collect::<Vec<_>>().join("\n")
}

fn chunks(s: &str, n: usize) -> String {
    let cs: Vec<char> = s.chars().collect();
    cs.chunks(n).map(|c| c.iter().collect::<String>()).collect::<Vec<_>>().join("\n")
}

struct Builder {
    cases: Vec<Case>,
}

impl Builder {
    fn push(&mut self, name: &str, chain: Chain, doc: Document, expect: &[&str]) -> &mut Case {
        self.cases.push(Case {
            name: name.to_string(),
            chain,
            doc,
            author: None,
            language: None,
            expect: expect.iter().map(|s| s.to_string()).collect(),
        });
        self.cases.last_mut().unwrap()
    }

    fn web(&mut self, name: &str, stage: u8, text: String, expect: &[&str]) -> &mut Case {
        let doc = Document::new(format!("web-{name}"), text, SourceKind::Web, "en");
        self.push(name, Chain::Web(stage), doc, expect)
    }

    fn pair(&mut self, name: &str, chain: Chain, source: SourceKind, pass: String, fail: String, rules: &[&str]) {
        for (tag, text, expect) in [("pass", pass, &[][..]), ("fail", fail, rules)] {
            let doc = Document::new(format!("{name}-{tag}"), text, source, "zh");
            self.push(&format!("{name}/{tag}"), chain, doc, expect);
        }
    }
}

fn web_cases(b: &mut Builder) {
    b.web("min_length/pass", 1, prose(512), &[]);
    b.web("min_length/fail", 1, prose(511), &["min_length"]);

    let long = |k: usize| vec![SENTENCE; k];
    let mut half = long(9);
    half.extend(["Yes indeed."; 9]);
    let mut more = long(9);
    more.extend(["Yes indeed."; 10]);
    b.web("short_sentence_ratio/pass", 1, half.join(" "), &[]);
    b.web("short_sentence_ratio/fail", 1, more.join(" "), &["short_sentence_ratio"]);

    b.web("blocked_substring/pass", 1, prose(600).replacen("old mill", "lorem mill", 1), &[]);
    b.web("blocked_substring/fail", 1, prose(600).replacen("old mill", "Lorem Ipsum", 1), &["blocked_substring"]);
    b.web("curly/fail", 1, prose(600).replacen("old mill", "old {mill", 1), &["blocked_substring"]);

    b.web("dirty_word/pass", 1, prose(600).replacen("old mill", "darned mill", 1), &[]);
    b.web("dirty_word/fail", 1, prose(600).replacen("old mill", "darn mill", 1), &["dirty_word"]);

    let base = prose(600);
    let words = base.split_whitespace().count();
    let hashed = |k: usize| {
        base.split(' ')
            .enumerate()
            .map(|(i, w)| if i < k { format!("#{w}") } else { w.to_string() })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let k = words / 10;
    b.web("hash_ellipsis_ratio/pass", 1, hashed(k), &[]);
    b.web("hash_ellipsis_ratio/fail", 1, hashed(k + 1), &["hash_ellipsis_ratio"]);

    let lines = |bullets: usize, ellipses: usize| {
        (0..10)
            .map(|i| {
                let mut l = SENTENCE.to_string();
                if i < ellipses {
                    l = l.replace("below.", "below...");
                }
                if i >= 10 - bullets {
                    l = format!("- {l}");
                }
                l
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    b.web("bullet_line_ratio/pass", 1, lines(9, 0), &[]);
    b.web("bullet_line_ratio/fail", 1, lines(10, 0), &["bullet_line_ratio"]);
    b.web("ellipsis_line_ratio/pass", 1, lines(0, 3), &[]);
    b.web("ellipsis_line_ratio/fail", 1, lines(0, 4), &["ellipsis_line_ratio"]);

    let mut open = prose(600);
    open.pop();
    open.push('x');
    b.web("terminal_punctuation/pass", 1, prose(600), &[]);
    b.web("terminal_punctuation/fail", 1, open, &["terminal_punctuation"]);

    b.web("garbled_characters/pass", 1, prose(600).replacen("mill", "m\u{e9}ll", 1), &[]);
    b.web("garbled_characters/fail", 1, prose(600).replacen("mill", "m\u{FFFD}ll", 1), &["garbled_characters"]);

    let junk: String =
        (0..599).map(|i| char::from_u32(0x0400 + (i * 7919 % 200) as u32).unwrap()).chain(['.']).collect();
    b.web("perplexity/pass", 2, prose(600), &[]).language = Some(("en", 0.9));
    b.web("perplexity/fail", 2, junk, &["perplexity"]).language = Some(("en", 0.9));
    b.web("language_score/pass", 2, prose(600), &[]).language = Some(("en", 0.61));
    b.web("language_score/fail", 2, prose(600), &["language_score"]).language = Some(("en", 0.6));
    b.web("language_not_target/pass", 2, prose(600), &[]).language = Some(("hr", 0.9));
    b.web("language_not_target/fail", 2, prose(600), &["language_not_target"]).language = Some(("sv", 0.9));

    let paras = |lens: &[usize]| lens.iter().map(|&n| prose(n)).collect::<Vec<_>>().join("\n\n");
    let s3 = |b: &mut Builder, name: &str, text: String, orig: u64, expect: &[&str]| {
        let c = b.web(name, 3, text, expect);
        c.doc.meta.insert("original_paragraph_count".into(), orig.into());
    };
    s3(b, "stage3_min_length/pass", paras(&[165, 165, 166]), 3, &[]);
    s3(b, "stage3_min_length/fail", paras(&[165, 165, 165]), 3, &["min_length"]);
    s3(b, "paragraph_count/pass", paras(&[200, 200, 200]), 3, &[]);
    s3(b, "paragraph_count/fail", paras(&[300, 300]), 2, &["paragraph_count"]);
    s3(b, "paragraph_shrink/pass", paras(&[200, 200, 200]), 15, &[]);
    s3(b, "paragraph_shrink/fail", paras(&[200, 200, 200]), 16, &["paragraph_shrink"]);
}

fn code_cases(b: &mut Builder) {
    let code = |b: &mut Builder, name: &str, text: String, file: &str, expect: &[&str]| {
        let doc = Document::new(format!("code-{name}"), text, SourceKind::Code, "en").with_meta("filename", file);
        b.push(name, Chain::Code, doc, expect);
    };
    code(b, "min_length/pass", code_of(&[24, 24, 24, 25]), "a.py", &[]);
    code(b, "min_length/fail", code_of(&[24, 24, 24, 24]), "a.py", &["min_length"]);
    code(b, "sql_exemption/pass", code_of(&[20, 20]), "schema.sql", &[]);
    code(b, "sql_exemption/fail", code_of(&[20, 20]), "schema.py", &["min_length"]);

    let mut big = vec![999; 199];
    big.push(1000);
    code(b, "max_length/pass", code_of(&big), "a.py", &[]);
    big[0] = 1000;
    code(b, "max_length/fail", code_of(&big), "a.py", &["max_length"]);

    code(b, "min_line_length/pass", code_of(&[30, 30, 30, 20]), "a.py", &[]);
    code(b, "min_line_length/fail", code_of(&[30, 30, 30, 19]), "a.py", &["min_line_length"]);
    code(b, "max_line_length/pass", code_of(&[30, 1000]), "a.py", &[]);
    code(b, "max_line_length/fail", code_of(&[30, 1001]), "a.py", &["max_line_length"]);

    let mix = |a: char, na: usize, z: char, nz: usize| {
        chunks(&format!("{}{}", a.to_string().repeat(na), z.to_string().repeat(nz)), 20)
    };
    code(b, "numeric_fraction/pass", mix('1', 70, 'a', 30), "a.py", &[]);
    code(b, "numeric_fraction/fail", mix('1', 71, 'a', 29), "a.py", &["numeric_fraction", "alpha_fraction"]);
    code(b, "alpha_fraction/pass", mix('=', 70, 'a', 30), "a.py", &[]);
    code(b, "alpha_fraction/fail", mix('=', 71, 'a', 29), "a.py", &["alpha_fraction"]);

    let with = |special: &[&str]| {
        let mut ls: Vec<String> = (0..20 - special.len()).map(|_| code_line(30)).collect();
        ls.extend(special.iter().map(|s| s.to_string()));
        ls.join("\n")
    };
    code(b, "blocked_phrase/pass", with(&["# see the configuration-file here"]), "a.py", &[]);
    code(b, "blocked_phrase/fail", with(&["# see the Configuration File here"]), "a.py", &["blocked_phrase"]);
    let t = "let test_value = aaaaaaaaaaaaaa;";
    code(b, "marker_line_ratio/pass", with(&[t, t]), "a.py", &[]);
    code(b, "marker_line_ratio/fail", with(&[t, t, t]), "a.py", &["marker_line_ratio"]);
}

fn cjk_cases(b: &mut Builder) {
    let latin = |n: usize| "a".repeat(n);
    b.pair("encyclopedia_min_length", Chain::Encyclopedia, SourceKind::Encyclopedia, han(50), han(49), &["min_length"]);
    b.pair(
        "encyclopedia_cjk_fraction",
        Chain::Encyclopedia,
        SourceKind::Encyclopedia,
        han(70) + &latin(30),
        han(69) + &latin(31),
        &["cjk_fraction"],
    );

    let lines = |ls: &[String]| ls.join("\n");
    let cb = Chain::Book(BookProfile::CBook);
    let mut full: Vec<String> = (0..96).map(|_| han(30)).collect();
    full.push(han(24));
    let pass = lines(&full);
    *full.last_mut().unwrap() = han(23);
    b.pair("cbook_min_length", cb, SourceKind::Book, pass, lines(&full), &["min_length"]);
    let shorts = |short: usize, long: usize, long_len: usize| {
        let mut v: Vec<String> = (0..short).map(|_| han(5)).collect();
        v.extend((0..long).map(|_| han(long_len)));
        lines(&v)
    };
    b.pair(
        "cbook_short_line_ratio",
        cb,
        SourceKind::Book,
        shorts(6, 4, 800),
        shorts(7, 3, 1100),
        &["short_line_ratio"],
    );
    let mixed = |c: usize, l: usize, rows: usize| lines(&(0..rows).map(|_| han(c) + &latin(l)).collect::<Vec<_>>());
    b.pair("cbook_cjk_fraction", cb, SourceKind::Book, mixed(45, 55, 40), mixed(44, 56, 40), &["cjk_fraction"]);

    let bs = Chain::Book(BookProfile::Bestseller);
    b.pair("bestseller_min_length", bs, SourceKind::Book, han(170), han(169), &["min_length"]);
    b.pair(
        "bestseller_short_line_ratio",
        bs,
        SourceKind::Book,
        shorts(29, 71, 10),
        shorts(30, 70, 10),
        &["short_line_ratio"],
    );
    b.pair("bestseller_cjk_fraction", bs, SourceKind::Book, mixed(158, 42, 1), mixed(156, 44, 1), &["cjk_fraction"]);

    b.pair(
        "news_min_length",
        Chain::News,
        SourceKind::News,
        format!("来源：新华社\n{}", han(170)),
        han(169),
        &["min_length"],
    );
    b.pair(
        "news_short_line_ratio",
        Chain::News,
        SourceKind::News,
        shorts(1, 3, 90),
        shorts(2, 2, 90),
        &["short_line_ratio"],
    );
    b.pair("news_cjk_fraction", Chain::News, SourceKind::News, mixed(80, 120, 1), mixed(78, 122, 1), &["cjk_fraction"]);

    let normal = AuthorStats { upvotes: 10, thanks: 5, bookmarks: 5, followers: 5 };
    let hq = AuthorStats { upvotes: 6000, thanks: 2000, bookmarks: 1000, followers: 1000 };
    let zhihu = |b: &mut Builder, name: &str, text: String, upvotes: u64, author: AuthorStats, expect: &[&str]| {
        let doc = Document::new(format!("zhihu-{name}"), text, SourceKind::QaForum, "zh").with_meta("upvotes", upvotes);
        b.push(name, Chain::Zhihu, doc, expect).author = Some(author);
    };
    zhihu(b, "zhihu_min_cjk_length/pass", han(200), 150, normal, &[]);
    zhihu(b, "zhihu_min_cjk_length/fail", han(199), 150, normal, &["min_cjk_length"]);
    zhihu(b, "zhihu_high_quality/pass", han(100), 150, hq, &[]);
    zhihu(b, "zhihu_high_quality/fail", han(99), 150, hq, &["min_cjk_length"]);
    zhihu(b, "zhihu_high_quality/normal_author", han(150), 150, normal, &["min_cjk_length"]);
    zhihu(
        b,
        "zhihu_image_source_dropped",
        format!("{}。图片来源：网络{}。", han(120), han(100)),
        150,
        normal,
        &["min_cjk_length"],
    );
    zhihu(b, "zhihu_editor_mentions/pass", format!("编辑{}编辑{}", han(150), han(100)), 150, normal, &[]);
    zhihu(
        b,
        "zhihu_editor_mentions/fail",
        format!("编辑{}编辑{}Editor", han(150), han(100)),
        150,
        normal,
        &["editor_mentions"],
    );
    zhihu(b, "zhihu_min_upvotes/pass", han(250), 100, normal, &[]);
    zhihu(b, "zhihu_min_upvotes/fail", han(250), 99, normal, &["min_upvotes"]);

    b.pair("academic_empty_text", Chain::Academic, SourceKind::Academic, "x".into(), " \n ".into(), &["empty_text"]);
}

pub fn cases() -> Vec<Case> {
    let mut b = Builder { cases: Vec::new() };
    web_cases(&mut b);
    code_cases(&mut b);
    cjk_cases(&mut b);
    b.cases
}

/// Rule ids the chain fires for `case`.
pub fn evaluate(case: &Case, cfg: &RuleConfig, lm: &CharNGramModel) -> Result<BTreeSet<String>, FilterError> {
    let d = &case.doc;
    let v = match case.chain {
        Chain::Web(stage) => {
            let stage = WebStage::try_from(stage).unwrap();
            let lid = case.language.map(|(l, s)| Fixed(l, s));
            filter_web(d, stage, cfg, Some(lm), lid.as_ref().map(|l| l as &dyn LanguageScorer))?
        }
        Chain::Code => filter_code(d, cfg),
        Chain::Encyclopedia => filter_encyclopedia(&clean_encyclopedia(d, cfg), cfg),
        Chain::Book(p) => filter_book(d, p, cfg),
        Chain::News => filter_news(d, cfg),
        Chain::Zhihu => filter_zhihu(d, case.author.as_ref(), cfg)?,
        Chain::Academic => filter_academic(d),
    };
    assert_eq!(v.passed, v.rule_hits.is_empty());
    Ok(v.rule_hits.into_iter().map(|h| h.rule_id).collect())
}
