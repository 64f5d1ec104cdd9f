//! Subcommand handlers. Each reads its inputs, runs one core stage, writes its
//! outputs atomically and appends a stage record to the manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use curate_core::align::{
    compute_rewards, filter_by_agreement, run_alignment_rounds, AlignError, PreferencePair, RecordMapping,
};
use curate_core::corpus::{config_digest, Document, Manifest, SourceKind, StageStats};
use curate_core::dedup::{dedup, DuplicateLedger};
use curate_core::filters::{
    clean_encyclopedia, clean_news, clean_zhihu, filter_academic, filter_book, filter_code, filter_encyclopedia,
    filter_news, filter_web, filter_zhihu, select_stackexchange_answers, Answer, AuthorStats, BookProfile,
    CharLanguageIdentifier, CharNGramModel, FilterVerdict, LanguageScorer, RuleHit, WebStage,
};
use curate_core::longtail::{
    build_entity_list, parse_templates, related_entities, run_probe_loop, StaticEnvironment, DEFAULT_TEMPLATES,
};
use curate_core::mixture::{
    build_mixture_plan, pack_stream, plan_stages, sample_schedule, table2_specs, table3_settings, LrSchedule,
    SourceSpec,
};
use curate_core::model_client::{serve, ModelClient};
use curate_core::seed::derive_seed;
use curate_core::sft::{
    parse_topics, score_all, split_curriculum, synthesize, topic_histogram, Instruction, Prompts, SftError, Threshold,
};
use curate_core::text::paragraphs;
use curate_core::tfidf::TfidfIndex;
use curate_core::tokenizer::{
    compression_ratio, merge_and_pad, train_wordpiece_extension, CjkUnit, TokenizerSpec, TrainOptions,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::*;
use crate::config::PipelineConfig;
use crate::io::{
    append_manifest, read_docs, read_jsonl, read_text, sidecar, write_docs, write_json, write_jsonl, write_output,
};
use crate::provider::{connect, connect_command, local_model};
use crate::report::{render_structured, render_text, table};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Parses `argv`, runs the command and returns the process exit code: 0 on
/// success, 1 for bad input or configuration, 2 for provider failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    quiet: bool,
    manifest: PathBuf,
    digest: String,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref().trim_end());
        }
    }

    fn stats(&self, input: usize, output: usize) -> StageStats {
        StageStats::new(input as u64, output as u64, &self.digest)
    }

    fn record(&self, stage: &str, stats: StageStats) -> Result<()> {
        let run_id = format!("run-{}", &self.digest[..self.digest.len().min(12)]);
        append_manifest(&self.manifest, &run_id, stage, stats)
    }

    fn unknown(&self) -> &str {
        &self.cfg.tokenizer.unknown_token
    }

    fn tokenizer(&self, path: &str) -> Result<TokenizerSpec> {
        Ok(TokenizerSpec::load(Path::new(path), self.unknown())?)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    }
    .finish(cli.seed, cli.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Input(format!("worker pool: {e}")))?;
    let digest = config_digest(&cfg);
    let ctx = Ctx { cfg, quiet: cli.quiet, manifest: cli.manifest, digest };
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &Ctx, cmd: Command) -> Result<()> {
    match cmd {
        Command::Filter(a) => cmd_filter(ctx, a),
        Command::Dedup(a) => cmd_dedup(ctx, a),
        Command::Mix(a) => cmd_mix(ctx, a),
        Command::Pack(a) => cmd_pack(ctx, a),
        Command::Lr(a) => cmd_lr(ctx, a),
        Command::TokTrain(a) => cmd_tok_train(ctx, a),
        Command::TokEval(a) => cmd_tok_eval(ctx, a),
        Command::Probe(a) => cmd_probe(ctx, a),
        Command::SftSynth(a) => cmd_sft_synth(ctx, a),
        Command::SftScore(a) => cmd_sft_score(ctx, a),
        Command::SftSplit(a) => cmd_sft_split(ctx, a),
        Command::AlignFilter(a) => cmd_align_filter(ctx, a),
        Command::AlignReward(a) => cmd_align_reward(ctx, a),
        Command::AlignRounds(a) => cmd_align_rounds(ctx, a),
        Command::Report(a) => cmd_report(ctx, a),
        Command::Serve(a) => cmd_serve(ctx, a),
    }
}

fn rejects_of(stats: &mut StageStats, verdicts: &[FilterVerdict]) {
    for v in verdicts.iter().filter(|v| !v.passed) {
        stats.reject(v.first_rule().unwrap_or("unknown"));
    }
}

struct FilterTools {
    rules: curate_core::filters::RuleConfig,
    source: SourceKind,
    stage: WebStage,
    profile: BookProfile,
    authors: BTreeMap<String, AuthorStats>,
    lm: Option<CharNGramModel>,
    lid: Option<CharLanguageIdentifier>,
    se_min_score: i64,
    se_max_answers: usize,
}

impl FilterTools {
    /// The verdict and, when it passes, the document to emit.
    fn apply(&self, doc: &Document) -> Result<(FilterVerdict, Document)> {
        let r = &self.rules;
        let out = match self.source {
            SourceKind::Web => {
                let lid = self.lid.as_ref().map(|l| l as &dyn LanguageScorer);
                let v = filter_web(doc, self.stage, r, self.lm.as_ref(), lid)?;
                let mut d = doc.clone();
                if self.stage == WebStage::Coarse && !d.meta.contains_key("original_paragraph_count") {
                    d.meta.insert("original_paragraph_count".into(), json!(paragraphs(&d.text).len()));
                }
                (v, d)
            }
            SourceKind::Code => (filter_code(doc, r), doc.clone()),
            SourceKind::Encyclopedia => {
                let d = clean_encyclopedia(doc, r);
                (filter_encyclopedia(&d, r), d)
            }
            SourceKind::Book => (filter_book(doc, self.profile, r), doc.clone()),
            SourceKind::News => (filter_news(doc, r), clean_news(doc, r)),
            SourceKind::QaForum => match doc.meta.get("answers") {
                Some(v) => self.stackexchange(doc, v)?,
                None => {
                    let stats = match doc.meta.get("author_stats") {
                        Some(v) => Some(serde_json::from_value::<AuthorStats>(v.clone())?),
                        None => doc.meta_str("author").and_then(|a| self.authors.get(a)).copied(),
                    };
                    (filter_zhihu(doc, stats.as_ref(), r)?, clean_zhihu(doc, r))
                }
            },
            SourceKind::Academic | SourceKind::Legal | SourceKind::Patent | SourceKind::EduAssessment => {
                (filter_academic(doc), doc.clone())
            }
        };
        Ok(out)
    }

    /// A question with its top answers appended; threads left with no answer are dropped.
    fn stackexchange(&self, doc: &Document, answers: &Value) -> Result<(FilterVerdict, Document)> {
        let answers: Vec<Answer> = serde_json::from_value(answers.clone())
            .map_err(|e| CliError::Input(format!("{}: answers: {e}", doc.id)))?;
        let picked = select_stackexchange_answers(&answers, self.se_min_score, self.se_max_answers);
        if picked.is_empty() {
            let v = FilterVerdict::from_hits(1, vec![RuleHit::new("no_answers", 0.0, 1.0)]);
            return Ok((v, doc.clone()));
        }
        let mut d = doc.clone();
        for a in &picked {
            d.text.push_str("\n\n");
            d.text.push_str(&a.body);
        }
        d.meta.insert("answers".into(), serde_json::to_value(&picked)?);
        Ok((FilterVerdict::from_hits(1, Vec::new()), d))
    }
}

fn cmd_filter(ctx: &Ctx, a: FilterArgs) -> Result<()> {
    let f = &ctx.cfg.filter;
    let source: SourceKind = a.source.parse().map_err(CliError::Input)?;
    if source != SourceKind::Web && a.stage != 1 {
        return Err(CliError::Input(format!("{source:?} has a single filter stage; got --stage {}", a.stage)));
    }
    let stage = WebStage::try_from(a.stage).map_err(CliError::Input)?;
    let mut rules = f.rules.clone();
    if let Some(p) = &f.dirty_words {
        rules.web.load_dirty_words(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    let (lm, lid) = if source == SourceKind::Web && stage == WebStage::Model {
        let p = f.lm_reference.as_ref().ok_or_else(|| CliError::ConfigInvalid {
            key: "filter.lm_reference".into(),
            reason: "required for web stage 2".into(),
        })?;
        let reference = read_docs(&p.display().to_string())?;
        let lm = CharNGramModel::fit(reference.iter().map(|d| d.text.as_str()), f.lm_order, f.lm_smoothing)?;
        (Some(lm), Some(CharLanguageIdentifier::builtin()))
    } else {
        (None, None)
    };
    let authors = match &a.authors {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => BTreeMap::new(),
    };
    let tools = FilterTools {
        rules,
        source,
        stage,
        profile: a.profile.as_deref().unwrap_or(&f.book_profile).parse()?,
        authors,
        lm,
        lid,
        se_min_score: f.stackexchange_min_score,
        se_max_answers: f.stackexchange_max_answers,
    };
    let docs = read_docs(&a.input)?;
    for d in &docs {
        if d.source != source {
            return Err(CliError::Input(format!(
                "{}: source {} where {} was expected",
                d.id,
                d.source.as_str(),
                source.as_str()
            )));
        }
    }
    let results: Vec<(FilterVerdict, Document)> = docs.par_iter().map(|d| tools.apply(d)).collect::<Result<_>>()?;
    let kept: Vec<Document> = results.iter().filter(|(v, _)| v.passed).map(|(_, d)| d.clone()).collect();
    let verdicts: Vec<FilterVerdict> = results.iter().map(|(v, _)| v.clone()).collect();
    let ledger: Vec<Value> = docs
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| !v.passed)
        .map(|(d, v)| json!({ "doc_id": d.id, "stage": v.stage, "rule_hits": v.rule_hits }))
        .collect();
    write_docs(&a.output, &kept)?;
    write_jsonl(&a.rejects.clone().unwrap_or_else(|| sidecar(&a.output, "rejects")), &ledger)?;
    let mut stats = ctx.stats(docs.len(), kept.len());
    rejects_of(&mut stats, &verdicts);
    ctx.say(format!("filter {} stage {}: kept {} of {}", source.as_str(), a.stage, kept.len(), docs.len()));
    ctx.record(&format!("filter:{}:{}", source.as_str(), a.stage), stats)
}

fn ledger_lines(kind: &str, ledger: &DuplicateLedger) -> Vec<Value> {
    ledger
        .entries
        .iter()
        .map(|e| json!({ "kind": kind, "removed_id": e.removed_id, "kept_id": e.kept_id, "estimated_similarity": e.estimated_similarity }))
        .collect()
}

fn cmd_dedup(ctx: &Ctx, a: DedupArgs) -> Result<()> {
    let docs = read_docs(&a.input)?;
    let n = docs.len();
    let out = dedup(docs, &ctx.cfg.dedup, ctx.cfg.workers)?;
    let mut lines = ledger_lines("exact", &out.exact);
    lines.extend(ledger_lines("near", &out.near));
    write_docs(&a.output, &out.kept)?;
    write_jsonl(&a.ledger.clone().unwrap_or_else(|| sidecar(&a.output, "dups")), &lines)?;
    let mut stats = ctx.stats(n, out.kept.len());
    for (k, c) in [("exact", out.exact.len()), ("near", out.near.len())] {
        if c > 0 {
            stats.reject_histogram.insert(k.into(), c as u64);
        }
    }
    ctx.say(format!("dedup: kept {} of {n} ({} exact, {} near)", out.kept.len(), out.exact.len(), out.near.len()));
    ctx.record("dedup", stats)
}

/// `43.75B` and friends; plain integers pass through.
fn parse_tokens(s: &str) -> Result<u64> {
    let (num, mult) = match s.chars().last() {
        Some('K' | 'k') => (&s[..s.len() - 1], 1e3),
        Some('M' | 'm') => (&s[..s.len() - 1], 1e6),
        Some('B' | 'b') => (&s[..s.len() - 1], 1e9),
        Some('T' | 't') => (&s[..s.len() - 1], 1e12),
        _ => (s, 1.0),
    };
    if mult == 1.0 {
        if let Ok(v) = num.parse::<u64>() {
            return Ok(v);
        }
    }
    let v: f64 = num.parse().map_err(|_| CliError::Input(format!("bad token count {s:?}")))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(CliError::Input(format!("bad token count {s:?}")));
    }
    Ok((v * mult).round() as u64)
}

fn parse_specs(content: &str) -> Result<Vec<SourceSpec<f64>>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |why: String| CliError::Input(format!("table line {}: {why}", i + 1));
        if f.len() != 3 {
            return Err(bad(format!("expected `source raw_tokens epochs`, got {line:?}")));
        }
        let source: SourceKind = f[0].parse().map_err(bad)?;
        let raw = parse_tokens(f[1])?;
        let epochs: f64 = f[2].parse().map_err(|_| bad(format!("bad epochs {:?}", f[2])))?;
        out.push(SourceSpec::new(source, raw, epochs));
    }
    Ok(out)
}

fn cmd_mix(ctx: &Ctx, a: MixArgs) -> Result<()> {
    let specs = match (&a.table2, a.builtin) {
        (Some(p), _) => parse_specs(&read_text(p)?)?,
        (None, true) => table2_specs(),
        (None, false) => return Err(CliError::Input("give --table2 FILE or --builtin".into())),
    };
    let plan = build_mixture_plan(&specs)?;
    ctx.say(plan.render_table());
    let mut out = json!({ "plan": plan });
    let rows = plan
        .entries
        .iter()
        .map(|e| {
            vec![
                json!(e.source.as_str()),
                json!(e.raw_tokens),
                json!(e.epochs),
                json!(e.weighted_tokens),
                json!(e.weight),
            ]
        })
        .collect();
    let mut stats = ctx
        .stats(specs.len(), plan.entries.len())
        .with_detail("weights", table(&["source", "raw_tokens", "epochs", "weighted_tokens", "weight"], rows));
    let scale = a.scale.unwrap_or(ctx.cfg.mixture.scale);
    let stages = plan_stages(&table3_settings::<f64>(), scale)?;
    let rows = stages
        .iter()
        .map(|s| {
            vec![
                json!(s.setting.stage),
                json!(s.setting.context_length),
                json!(s.token_budget),
                json!(s.per_language[0]),
                json!(s.per_language[1]),
                json!(s.per_language[2]),
                json!(s.steps()),
            ]
        })
        .collect();
    stats = stats.with_detail("stages", table(&["stage", "context", "tokens", "en", "zh", "ml", "steps"], rows));
    out["stages"] = serde_json::to_value(&stages)?;
    let draws = a.draws.unwrap_or(ctx.cfg.mixture.draws);
    if draws > 0 {
        let schedule = sample_schedule(&plan, draws, derive_seed(ctx.cfg.seed, "mix.schedule"))?;
        out["schedule"] = json!(schedule.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }
    write_json(&a.output, &out)?;
    ctx.record("mix", stats)
}

fn cmd_pack(ctx: &Ctx, a: PackArgs) -> Result<()> {
    let l = a.context.unwrap_or(ctx.cfg.mixture.context_length);
    let sep = a.separator.or(ctx.cfg.mixture.separator);
    let mut streams: BTreeMap<SourceKind, Vec<Vec<u32>>> = BTreeMap::new();
    match &a.tokenizer {
        Some(t) => {
            let spec = ctx.tokenizer(t)?;
            let docs = read_docs(&a.input)?;
            let toks: Vec<Vec<u32>> = docs.par_iter().map(|d| spec.tokenize(&d.text)).collect();
            for (d, t) in docs.iter().zip(toks) {
                streams.entry(d.source).or_default().push(t);
            }
        }
        None => {
            let default: SourceKind = a.source.parse().map_err(CliError::Input)?;
            for v in read_jsonl::<Value>(&a.input)? {
                let (source, tokens) = match &v {
                    Value::Array(_) => (default, v.clone()),
                    Value::Object(o) => {
                        let s = match o.get("source").and_then(Value::as_str) {
                            Some(s) => s.parse().map_err(CliError::Input)?,
                            None => default,
                        };
                        (s, o.get("tokens").cloned().unwrap_or(Value::Null))
                    }
                    _ => (default, Value::Null),
                };
                let tokens: Vec<u32> = serde_json::from_value(tokens).map_err(|e| {
                    CliError::Input(format!("{}: expected a token array or {{\"tokens\": [..]}}: {e}", a.input))
                })?;
                streams.entry(source).or_default().push(tokens);
            }
        }
    }
    let (mut samples, mut rows) = (Vec::new(), Vec::new());
    let (mut total_in, mut total_tail) = (0usize, 0usize);
    for (source, docs) in &streams {
        let r = pack_stream(docs, *source, l, sep)?;
        total_in += r.input_tokens + r.separators;
        total_tail += r.dropped_tail;
        rows.push(vec![
            json!(source.as_str()),
            json!(docs.len()),
            json!(r.input_tokens),
            json!(r.samples.len()),
            json!(r.dropped_tail),
        ]);
        samples.extend(r.samples);
    }
    write_jsonl(&a.output, &samples)?;
    let mut stats = ctx
        .stats(total_in, samples.len() * l)
        .with_detail("sources", table(&["source", "docs", "tokens", "samples", "dropped_tail"], rows));
    if total_tail > 0 {
        stats.reject_histogram.insert("dropped_tail".into(), total_tail as u64);
    }
    ctx.say(format!("pack: {} samples of {l} tokens, {total_tail} tail tokens dropped", samples.len()));
    ctx.record("pack", stats)
}

fn cmd_lr(ctx: &Ctx, a: LrArgs) -> Result<()> {
    let m = &ctx.cfg.mixture;
    let (max, min) = (a.max_lr.unwrap_or(m.max_lr), a.min_lr.unwrap_or(m.min_lr));
    let sched = match a.warmup_steps {
        Some(w) => LrSchedule::new(max, min, a.total_steps, w)?,
        None => {
            LrSchedule::with_warmup_fraction(max, min, a.total_steps, a.warmup_fraction.unwrap_or(m.warmup_fraction))?
        }
    };
    let every = a.every.unwrap_or((a.total_steps / 100).max(1)).max(1);
    let mut steps: Vec<u64> = (0..=a.total_steps).step_by(every as usize).collect();
    steps.push(sched.warmup_steps);
    steps.push(a.total_steps);
    steps.sort_unstable();
    steps.dedup();
    let rows: Vec<(u64, f64)> = steps.iter().map(|&s| Ok((s, sched.lr_at(s)?))).collect::<Result<_>>()?;
    write_output(&a.output, |w| {
        writeln!(w, "step\tlr")?;
        for (s, lr) in &rows {
            writeln!(w, "{s}\t{lr:e}")?;
        }
        Ok(())
    })?;
    ctx.record("lr", ctx.stats(rows.len(), rows.len()).with_detail("schedule", sched))
}

fn cmd_tok_train(ctx: &Ctx, a: TokTrainArgs) -> Result<()> {
    let t = &ctx.cfg.tokenizer;
    let base = ctx.tokenizer(&a.base)?;
    let docs = read_docs(&a.input)?;
    let opts = TrainOptions { unit: if a.whole_word { CjkUnit::WholeWord } else { t.unit }, strict: t.strict };
    let ext = train_wordpiece_extension(&docs, a.target.unwrap_or(t.target), &base, &opts)?;
    let spec = merge_and_pad(&base, &ext, a.pad_to.unwrap_or(t.pad_to))?;
    if a.output.ends_with(".json") {
        write_json(&a.output, &spec)?;
    } else {
        let text = spec.to_vocab_file();
        write_output(&a.output, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    ctx.say(format!(
        "tok-train: base {}, extension {}, padded to {}",
        spec.base_size(),
        spec.extension_size(),
        spec.padded_size()
    ));
    let row = vec![json!(spec.base_size()), json!(spec.extension_size()), json!(spec.padded_size())];
    ctx.record(
        "tok-train",
        ctx.stats(docs.len(), docs.len()).with_detail("vocabulary", table(&["base", "extension", "padded"], vec![row])),
    )
}

fn cmd_tok_eval(ctx: &Ctx, a: TokEvalArgs) -> Result<()> {
    let mut corpora = Vec::new();
    for p in &a.corpora {
        let name = if p == "-" {
            "stdin".to_string()
        } else {
            Path::new(p).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.clone())
        };
        corpora.push((name, read_docs(p)?.into_iter().map(|d| d.text).collect::<Vec<_>>()));
    }
    let (mut out, mut rows) = (Vec::new(), Vec::new());
    for s in &a.specs {
        let report = compression_ratio::<f64>(&ctx.tokenizer(s)?, &corpora)?;
        ctx.say(format!("{s}\n{}", report.render_table()));
        for r in report.rows.iter().chain(std::iter::once(&report.aggregate)) {
            rows.push(vec![json!(s), json!(r.corpus), json!(r.bytes), json!(r.tokens), json!(r.ratio)]);
        }
        out.push(json!({ "spec": s, "report": report }));
    }
    write_json(&a.output, &out)?;
    let n = corpora.len();
    ctx.record(
        "tok-eval",
        ctx.stats(n, n).with_detail("compression", table(&["spec", "corpus", "bytes", "tokens", "ratio"], rows)),
    )
}

fn cmd_probe(ctx: &Ctx, a: ProbeArgs) -> Result<()> {
    let mut cfg = ctx.cfg.probe.clone();
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(r) = a.max_rounds {
        cfg.max_rounds = r;
    }
    let enc = read_docs(&a.encyclopedia)?;
    let pool = read_docs(&a.pool)?;
    let mentions = match &a.mentions {
        Some(p) => read_docs(p)?,
        None => pool.clone(),
    };
    let mut entities = build_entity_list(&enc, cfg.min_description_chars, cfg.min_mentions, &mentions)?;
    let names: Vec<String> = entities.iter().map(|e| e.name.clone()).collect();
    for e in &mut entities {
        e.related = related_entities(&e.name, &e.description, &names, cfg.min_cooccur);
    }
    let templates = match &a.templates {
        Some(p) => parse_templates(&read_text(p)?),
        None => DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
    };
    let provider = &ctx.cfg.provider;
    let generator = connect(provider, "generator")?;
    let model = connect(provider, "model")?;
    let judge = connect(provider, "judge")?;
    let index = TfidfIndex::<f64>::build(pool.iter().map(|d| (d.id.as_str(), d.text.as_str())));
    let n_entities = entities.len();
    let mut env = StaticEnvironment {
        entities,
        templates,
        generator: generator.as_ref(),
        model: model.as_ref(),
        judge: judge.as_ref(),
        trained: Vec::new(),
    };
    let (rounds, err) = match run_probe_loop(&mut env, &index, &cfg) {
        Ok(r) => (r, None),
        Err(e) => (e.completed, Some(e.error)),
    };
    let mut union: Vec<String> = Vec::new();
    let mut weak: Vec<String> = Vec::new();
    for r in &rounds {
        for id in &r.retrieval.union {
            if !union.contains(id) {
                union.push(id.clone());
            }
        }
        for w in &r.weak {
            if !weak.contains(w) {
                weak.push(w.clone());
            }
        }
    }
    let rows = rounds
        .iter()
        .map(|r| {
            vec![
                json!(r.round),
                json!(r.epsilon),
                json!(r.scores.len()),
                json!(r.weak.len()),
                json!(r.retrieval.union.len()),
                json!(r.mean_score_before),
                json!(r.mean_score_after),
            ]
        })
        .collect();
    let mut stats = ctx
        .stats(n_entities, weak.len())
        .with_detail(
            "rounds",
            table(&["round", "epsilon", "entities", "weak", "retrieved", "mean_before", "mean_after"], rows),
        )
        .with_detail("weak_entities", &weak);
    if n_entities > weak.len() {
        stats.reject_histogram.insert("not_weak".into(), (n_entities - weak.len()) as u64);
    }
    if let Some(e) = err {
        ctx.record("probe", stats.with_detail("error", e.to_string()))?;
        return Err(e.into());
    }
    write_output(&a.output, |w| {
        for id in &union {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })?;
    ctx.say(format!(
        "probe: {} rounds, {} weak entities, {} documents retrieved",
        rounds.len(),
        weak.len(),
        union.len()
    ));
    ctx.record("probe", stats)
}

fn read_instructions(path: &str) -> Result<(Vec<Document>, Vec<Instruction>)> {
    let docs = read_docs(path)?;
    let instrs = docs.iter().map(Instruction::from_document).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((docs, instrs))
}

fn cmd_sft_synth(ctx: &Ctx, a: SftSynthArgs) -> Result<()> {
    let (_, base) = read_instructions(&a.input)?;
    let topics = parse_topics(&read_text(&a.topics)?);
    if topics.is_empty() {
        return Err(SftError::NoTopics.into());
    }
    let prompts = match &a.prompts {
        Some(p) => Prompts::from_json(&read_text(p)?)?,
        None => Prompts::default(),
    };
    let generator = connect(&ctx.cfg.provider, "generator")?;
    let n_base = base.len();
    let report = synthesize(base, &topics, generator.as_ref(), &prompts, &ctx.cfg.sft.synthesis);
    let docs: Vec<Document> = report.produced.iter().map(Instruction::to_document).collect();
    write_docs(&a.output, &docs)?;
    let failures: Vec<Value> = report.failures.iter().map(|(id, e)| json!({ "item": id, "error": e })).collect();
    write_jsonl(&sidecar(&a.output, "failures"), &failures)?;
    let mut stats = ctx.stats(report.produced.len() + report.failures.len(), report.produced.len());
    for (label, _) in &report.failures {
        stats.reject(label.split(':').next().unwrap_or("unknown"));
    }
    let row = vec![json!(n_base), json!(report.produced.len()), json!(report.failures.len()), json!(report.retries)];
    let topics_rows = topic_histogram(&report.produced).into_iter().map(|(t, c)| vec![json!(t), json!(c)]).collect();
    let stats = stats
        .with_detail("synthesis", table(&["base", "produced", "failed", "retries"], vec![row]))
        .with_detail("topics", table(&["topic", "count"], topics_rows));
    ctx.say(format!(
        "sft-synth: {} produced, {} failed, {} retries",
        report.produced.len(),
        report.failures.len(),
        report.retries
    ));
    ctx.record("sft-synth", stats)
}

fn cmd_sft_score(ctx: &Ctx, a: SftScoreArgs) -> Result<()> {
    let spec = ctx.tokenizer(&a.tokenizer)?;
    let (docs, instrs) = read_instructions(&a.input)?;
    let scorer = connect(&ctx.cfg.provider, "scorer")?;
    let scores = score_all(&instrs, scorer.as_ref(), ctx.cfg.sft.lambdas, &spec);
    let mut out = Vec::new();
    let mut stats = ctx.stats(docs.len(), 0);
    for (mut d, s) in docs.into_iter().zip(scores) {
        match s {
            Ok(c) => {
                d.meta.insert("complexity".into(), serde_json::to_value(c)?);
                out.push(d);
            }
            Err(SftError::NoTarget(_)) => stats.reject("no_target"),
            Err(e) => return Err(e.into()),
        }
    }
    stats.output_count = out.len() as u64;
    write_docs(&a.output, &out)?;
    ctx.say(format!("sft-score: scored {} of {}", out.len(), stats.input_count));
    ctx.record("sft-score", stats)
}

fn cmd_sft_split(ctx: &Ctx, a: SftSplitArgs) -> Result<()> {
    let (docs, instrs) = read_instructions(&a.input)?;
    let items: Vec<(Option<f64>, bool)> = docs
        .iter()
        .zip(&instrs)
        .map(|(d, i)| (d.meta.get("complexity").and_then(|c| c.get("comp")).and_then(Value::as_f64), i.force_complex))
        .collect();
    let thr = match a.threshold {
        Some(t) => Threshold::Explicit(t),
        None => Threshold::Quantile(a.quantile.unwrap_or(ctx.cfg.sft.quantile)),
    };
    let split = split_curriculum(&items, thr)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| docs[i].clone()).collect::<Vec<_>>();
    write_docs(&a.simple, &pick(&split.simple))?;
    write_docs(&a.complex, &pick(&split.complex))?;
    let row =
        vec![json!(split.threshold), json!(split.quantile), json!(split.simple.len()), json!(split.complex.len())];
    ctx.say(format!("sft-split: {} simple, {} complex", split.simple.len(), split.complex.len()));
    ctx.record(
        "sft-split",
        ctx.stats(docs.len(), split.simple.len() + split.complex.len())
            .with_detail("split", table(&["threshold", "quantile", "simple", "complex"], vec![row])),
    )
}

fn mapping(name: &str) -> Result<RecordMapping> {
    if let Some(m) = RecordMapping::preset(name) {
        return Ok(m);
    }
    if Path::new(name).is_file() {
        return Ok(serde_json::from_str(&read_text(name)?)?);
    }
    Err(CliError::Input(format!("unknown record mapping {name:?}: use generic, shp or a JSON mapping file")))
}

fn cmd_align_filter(ctx: &Ctx, a: AlignFilterArgs) -> Result<()> {
    let m = mapping(a.mapping.as_deref().unwrap_or(&ctx.cfg.align.mapping))?;
    let records: Vec<Value> = read_jsonl(&a.input)?;
    let mut stats = ctx.stats(records.len(), 0);
    let mut pairs = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match m.map::<f64>(r, i + 1) {
            Ok(p) => pairs.push(p),
            Err(AlignError::InvalidPair { .. }) => stats.reject("invalid_pair"),
            Err(e) => return Err(e.into()),
        }
    }
    let n = pairs.len();
    let kept = filter_by_agreement(pairs, a.min_gap.unwrap_or(ctx.cfg.align.rounds.min_gap));
    for _ in kept.len()..n {
        stats.reject("agreement_gap");
    }
    stats.output_count = kept.len() as u64;
    write_jsonl(&a.output, &kept)?;
    ctx.say(format!("align-filter: kept {} of {}", kept.len(), records.len()));
    ctx.record("align-filter", stats)
}

fn decile_row(label: Value, rewards: &[f64]) -> Vec<Value> {
    let mut row = vec![label];
    row.extend((1..10).map(|d| json!(curate_core::sft::quantile(rewards, d as f64 / 10.0))));
    row
}

const DECILE_COLUMNS: [&str; 10] = ["", "p10", "p20", "p30", "p40", "p50", "p60", "p70", "p80", "p90"];

fn cmd_align_reward(ctx: &Ctx, a: AlignRewardArgs) -> Result<()> {
    let spec = ctx.tokenizer(&a.tokenizer)?;
    let mut pairs: Vec<PreferencePair<f64>> = read_jsonl(&a.input)?;
    let policy = connect(&ctx.cfg.provider, "policy")?;
    let reference = connect(&ctx.cfg.provider, "reference")?;
    compute_rewards(&mut pairs, policy.as_ref(), reference.as_ref(), &spec)?;
    write_jsonl(&a.output, &pairs)?;
    let rewards: Vec<f64> = pairs.iter().filter_map(|p| p.reward).collect();
    let mut cols = DECILE_COLUMNS;
    cols[0] = "pairs";
    ctx.record(
        "align-reward",
        ctx.stats(pairs.len(), pairs.len())
            .with_detail("rewards", table(&cols, vec![decile_row(json!(pairs.len()), &rewards)])),
    )
}

fn cmd_align_rounds(ctx: &Ctx, a: AlignRoundsArgs) -> Result<()> {
    let spec = ctx.tokenizer(&a.tokenizer)?;
    let pairs: Vec<PreferencePair<f64>> = read_jsonl(&a.input)?;
    let provider = &ctx.cfg.provider;
    if provider.snapshots.is_empty() {
        return Err(CliError::ConfigInvalid {
            key: "provider.snapshots".into(),
            reason: "lists no round snapshots".into(),
        });
    }
    let reference = connect(provider, "reference")?;
    let snaps: Vec<Box<dyn ModelClient>> =
        provider.snapshots.iter().map(|c| connect_command(provider, c)).collect::<Result<_>>()?;
    let refs: Vec<&dyn ModelClient> = snaps.iter().map(|b| b.as_ref()).collect();
    let n = pairs.len();
    let (reports, sets) = run_alignment_rounds(pairs, reference.as_ref(), &refs, &spec, &ctx.cfg.align.rounds)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Input(format!("{}: {e}", a.out_dir)))?;
    let dir = Path::new(&a.out_dir);
    for (t, set) in sets.iter().enumerate() {
        write_jsonl(&dir.join(format!("round-{}.jsonl", t + 1)).display().to_string(), set)?;
    }
    write_json(&dir.join("rounds.json").display().to_string(), &reports)?;
    let last = sets.last().map_or(n, Vec::len);
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![json!(r.round), json!(r.delta), json!(r.scored), json!(r.retained.len())];
            row.extend(r.deciles.iter().map(|d| json!(d)));
            row
        })
        .collect();
    let mut cols = vec!["round", "delta", "scored", "retained"];
    cols.extend(&DECILE_COLUMNS[1..]);
    let mut stats = ctx.stats(n, last).with_detail("rounds", table(&cols, rows));
    if n > last {
        stats.reject_histogram.insert("easy".into(), (n - last) as u64);
    }
    ctx.say(format!("align-rounds: {} rounds, {last} of {n} pairs in the last set", reports.len()));
    ctx.record("align-rounds", stats)
}

fn cmd_report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let path = a.path.unwrap_or_else(|| ctx.manifest.clone());
    let m = Manifest::load(&path)?;
    let text = match a.format {
        ReportFormat::Text => render_text(&m),
        ReportFormat::Structured => render_structured(&m),
    };
    write_output("-", |w| Ok(w.write_all(text.as_bytes())?))
}

fn cmd_serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let model =
        local_model(a.corpus.as_deref(), a.tokenizer.as_deref(), ctx.unknown(), a.order, a.k, a.scripted.as_deref())?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(model.as_ref(), stdin.lock(), stdout.lock())?;
    Ok(())
}
