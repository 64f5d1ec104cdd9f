use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_curate");

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        Run { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, content: &str) -> String {
        fs::write(self.path(name), content).unwrap();
        self.p(name)
    }

    fn docs(&self, name: &str, docs: &[Value]) -> String {
        let body: String = docs.iter().map(|d| format!("{d}\n")).collect();
        self.write(name, &body)
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(BIN);
        c.current_dir(self.dir.path()).env_remove("CURATE_PROVIDER").args(args);
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd(args).output().unwrap()
    }

    fn run_stdin(&self, args: &[&str], input: &str) -> Output {
        let mut child =
            self.cmd(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn lines(&self, name: &str) -> Vec<Value> {
        self.read(name).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn doc(id: &str, text: &str, source: &str, lang: &str) -> Value {
    json!({ "id": id, "text": text, "source": source, "language": lang })
}

fn code_doc(id: &str, lines: usize) -> Value {
    let text: String = (0..lines).map(|i| format!("let value_{i} = compute({i}, {});\n", i * 7)).collect();
    doc(id, &text, "code", "en")
}

const VOCAB: &str = "[UNK]\nthe\ncat\nsat\non\nmat\na\ndog\nran\n##s\nwhat\nis\nwhy\n?\n.\n";

fn corpus_docs() -> Vec<Value> {
    let texts = [
        "the cat sat on the mat.",
        "a dog ran on the mat.",
        "the dog sat.",
        "the cat ran.",
        "what is the cat?",
        "why is the dog on the mat?",
    ];
    texts.iter().enumerate().map(|(i, t)| doc(&format!("c{i}"), t, "web", "en")).collect()
}

#[test]
fn help_and_version_exit_zero() {
    let r = Run::new();
    assert_eq!(r.run(&["--help"]).status.code(), Some(0));
    assert_eq!(r.run(&["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_exits_one_without_output() {
    let r = Run::new();
    let input = r.docs("in.jsonl", &[code_doc("a", 5)]);
    let o = r.run(&["dedup", "--frobnicate", &input, "out.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!r.path("out.jsonl").exists());
    assert!(!r.path("curate.manifest.json").exists());
}

#[test]
fn missing_input_exits_one() {
    let r = Run::new();
    let o = r.run(&["dedup", "nope.jsonl", "out.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!r.path("out.jsonl").exists());
}

#[test]
fn bad_config_key_is_named() {
    let r = Run::new();
    let cfg = r.write("c.toml", "[dedup]\nbandz = 4\n");
    let input = r.docs("in.jsonl", &[code_doc("a", 5)]);
    let o = r.run(&["--config", &cfg, "dedup", &input, "out.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandz"));
}

#[test]
fn missing_provider_exits_two() {
    let r = Run::new();
    let vocab = r.write("v.txt", VOCAB);
    let input = r.docs(
        "sft.jsonl",
        &[json!({ "id": "i1", "text": "q", "source": "qa_forum", "language": "en",
                  "meta": { "turns": [{ "role": "user", "text": "what is the cat?" }, { "role": "assistant", "text": "the cat sat." }] } })],
    );
    let o = r.run(&["sft-score", "--tokenizer", &vocab, &input, "out.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!r.path("out.jsonl").exists());
}

#[test]
fn stdin_and_stdout_dashes() {
    let r = Run::new();
    let input = format!("{}\n{}\n", code_doc("a", 6), doc("b", "x", "code", "en"));
    let o = r.run_stdin(&["--quiet", "filter", "--source", "code", "-", "-"], &input);
    ok(&o);
    let out: Vec<Value> =
        String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0]["id"], "a");
    assert!(o.stderr.is_empty());
    let rejects = r.lines("rejects.jsonl");
    assert_eq!(rejects.len(), 1);
    assert_eq!(rejects[0]["doc_id"], "b");
}

#[test]
fn filter_records_funnel() {
    let r = Run::new();
    let input = r.docs("in.jsonl", &[code_doc("a", 6), doc("b", "x", "code", "en"), code_doc("c", 8)]);
    ok(&r.run(&["filter", "--source", "code", &input, "kept.jsonl"]));
    assert_eq!(r.lines("kept.jsonl").len(), 2);
    assert_eq!(r.lines("kept.rejects.jsonl").len(), 1);
    let m: Value = serde_json::from_str(&r.read("curate.manifest.json")).unwrap();
    let st = &m["stages"][0];
    assert_eq!(st["stage_name"], "filter:code:1");
    assert_eq!(st["input_count"], 3);
    assert_eq!(st["output_count"], 2);
}

#[test]
fn filter_rejects_wrong_source() {
    let r = Run::new();
    let input = r.docs("in.jsonl", &[code_doc("a", 6)]);
    let o = r.run(&["filter", "--source", "news", &input, "kept.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!r.path("kept.jsonl").exists());
}

#[test]
fn web_stage_one_records_paragraph_count() {
    let r = Run::new();
    let para = "This is a plain sentence about rivers and valleys that ends properly.";
    let text = (0..4).map(|_| [para; 3].join(" ")).collect::<Vec<_>>().join("\n\n");
    let input = r.docs("in.jsonl", &[doc("w", &text, "web", "en")]);
    ok(&r.run(&["filter", "--source", "web", "--stage", "1", &input, "s1.jsonl"]));
    for d in r.lines("s1.jsonl") {
        assert_eq!(d["meta"]["original_paragraph_count"], 4);
    }
}

fn near_dup_docs() -> Vec<Value> {
    let base = "river valley mountain forest ocean desert island canyon glacier meadow prairie tundra";
    let mut docs = Vec::new();
    for i in 0..40 {
        let text = if i % 3 == 0 {
            format!("{base} {base} extra{}", i % 2)
        } else {
            format!("unique document number {i} with words w{i} v{i} u{i} t{i}")
        };
        docs.push(doc(&format!("d{i:02}"), &text, "web", "en"));
    }
    let text = docs[1]["text"].as_str().unwrap().to_string();
    docs.push(doc("dup", &text, "web", "en"));
    docs
}

#[test]
fn dedup_is_deterministic_across_workers() {
    let r = Run::new();
    let input = r.docs("in.jsonl", &near_dup_docs());
    ok(&r.run(&["--workers", "1", "dedup", &input, "w1.jsonl"]));
    ok(&r.run(&["--workers", "4", "dedup", &input, "w4.jsonl"]));
    assert_eq!(r.read("w1.jsonl"), r.read("w4.jsonl"));
    assert_eq!(r.read("w1.dups.jsonl"), r.read("w4.dups.jsonl"));
    let dups = r.lines("w1.dups.jsonl");
    assert!(dups.iter().any(|d| d["kind"] == "exact" && d["removed_id"] == "dup"));
    let m: Value = serde_json::from_str(&r.read("curate.manifest.json")).unwrap();
    let names: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["stage_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["dedup", "dedup#2"]);
}

#[test]
fn report_renders_funnel() {
    let r = Run::new();
    let input = r.docs("in.jsonl", &near_dup_docs());
    ok(&r.run(&["dedup", &input, "out.jsonl"]));
    let o = r.run(&["report"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("stage"));
    assert!(text.contains("dedup"));
    assert!(text.contains("exact="));
    let o = r.run(&["report", "--format", "structured"]);
    ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["stages"][0]["stage_name"], "dedup");
}

#[test]
fn mix_builtin_weights() {
    let r = Run::new();
    let o = r.run(&["--quiet", "mix", "--builtin", "--draws", "50"]);
    ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let web = &v["plan"]["entries"][0];
    assert_eq!(web["source"], "web");
    assert!((web["weight"].as_f64().unwrap() - 0.726).abs() < 0.0005);
    assert_eq!(v["schedule"].as_array().unwrap().len(), 50);
    assert_eq!(v["stages"].as_array().unwrap().len(), 3);
}

#[test]
fn mix_table_file_matches_builtin() {
    let r = Run::new();
    let table = r.write(
        "t2.conf",
        "web 1.22T 1\ncode 101B 1\nencyclopedia 18B 3\nacademic 50B 1\nqa_forum 26B 1\nbook 43.75B 2\nnews 134B 1\nlegal 3B 1\npatent 2B 1\nedu_assessment 1.25B 2\n",
    );
    let a = r.run(&["--quiet", "mix", "--table2", &table]);
    let b = r.run(&["--quiet", "mix", "--builtin"]);
    ok(&a);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn pack_conserves_tokens() {
    let r = Run::new();
    let input = r.write("tok.jsonl", "[1,2,3,4,5]\n[6,7,8]\n{\"tokens\":[9,10,11],\"source\":\"code\"}\n");
    ok(&r.run(&["pack", "--context", "3", "--separator", "0", &input, "packed.jsonl"]));
    let samples = r.lines("packed.jsonl");
    assert!(samples.iter().all(|s| s["token_ids"].as_array().unwrap().len() == 3));
    let m: Value = serde_json::from_str(&r.read("curate.manifest.json")).unwrap();
    let st = &m["stages"][0];
    assert_eq!(st["input_count"], 12);
    assert_eq!(st["output_count"], 12);
}

#[test]
fn lr_table() {
    let r = Run::new();
    let o = r.run(&[
        "--quiet",
        "lr",
        "--total-steps",
        "1000",
        "--warmup-steps",
        "10",
        "--max-lr",
        "3e-4",
        "--min-lr",
        "3e-5",
        "--every",
        "100",
    ]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(u64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split('\t');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.first().unwrap().0, 0);
    assert!(rows.iter().any(|&(s, lr)| s == 10 && (lr - 3e-4).abs() < 1e-12));
    assert!(rows.iter().any(|&(s, lr)| s == 1000 && (lr - 3e-5).abs() < 1e-12));
}

#[test]
fn tokenizer_train_and_eval() {
    let r = Run::new();
    let vocab = r.write("base.txt", VOCAB);
    let corpus = r.docs(
        "zh.jsonl",
        &[
            doc("z1", "数据质量决定模型质量。数据很重要。", "web", "zh"),
            doc("z2", "模型需要高质量的数据。", "web", "zh"),
        ],
    );
    ok(&r.run(&["tok-train", "--base", &vocab, "--target", "40", "--pad-to", "64", &corpus, "ext.json"]));
    let spec: Value = serde_json::from_str(&r.read("ext.json")).unwrap();
    assert_eq!(spec["tokens"].as_array().unwrap().len(), 64);
    let o = r.run(&["--quiet", "tok-eval", "--spec", &vocab, "--spec", &r.p("ext.json"), &corpus]);
    ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let ratio = |i: usize| v[i]["report"]["aggregate"]["ratio"].as_f64().unwrap();
    assert!(ratio(1) > ratio(0), "extension should compress better: {} vs {}", ratio(1), ratio(0));
}

fn serve_cmd(r: &Run, extra: &str) -> String {
    format!("{BIN} serve --corpus {} --tokenizer {}{extra}", r.p("corpus.jsonl"), r.p("v.txt"))
}

fn sft_docs() -> Vec<Value> {
    let mk = |id: &str, turns: Value, forced: bool| {
        json!({ "id": id, "text": "", "source": "qa_forum", "language": "en",
                "meta": { "turns": turns, "force_complex": forced } })
    };
    vec![
        mk(
            "s1",
            json!([{ "role": "user", "text": "what is the cat?" }, { "role": "assistant", "text": "the cat sat." }]),
            false,
        ),
        mk(
            "s2",
            json!([{ "role": "user", "text": "why is the dog on the mat?" }, { "role": "assistant", "text": "a dog ran on the mat." },
                   { "role": "user", "text": "what is the mat?" }, { "role": "assistant", "text": "the mat." }]),
            false,
        ),
        mk("s3", json!([{ "role": "user", "text": "the cat?" }, { "role": "assistant", "text": "dogs ran." }]), false),
        mk("s4", json!([{ "role": "user", "text": "what?" }, { "role": "assistant", "text": "the cat." }]), true),
    ]
}

#[test]
fn sft_score_and_split_through_served_model() {
    let r = Run::new();
    r.write("v.txt", VOCAB);
    r.docs("corpus.jsonl", &corpus_docs());
    let input = r.docs("sft.jsonl", &sft_docs());
    let cfg = r.write("c.toml", &format!("[provider]\nscorer = \"{}\"\n", serve_cmd(&r, "")));
    ok(&r.run(&["--config", &cfg, "sft-score", "--tokenizer", &r.p("v.txt"), &input, "scored.jsonl"]));
    let scored = r.lines("scored.jsonl");
    assert_eq!(scored.len(), 4);
    for d in &scored {
        let c = &d["meta"]["complexity"];
        let expect =
            c["l_turn"].as_f64().unwrap() + 0.01 * c["l_length"].as_f64().unwrap() + c["loss"].as_f64().unwrap();
        assert!((c["comp"].as_f64().unwrap() - expect).abs() < 1e-9);
    }
    ok(&r.run(&[
        "--config",
        &cfg,
        "sft-split",
        "--quantile",
        "0.5",
        &r.p("scored.jsonl"),
        "simple.jsonl",
        "complex.jsonl",
    ]));
    let (simple, complex) = (r.lines("simple.jsonl"), r.lines("complex.jsonl"));
    assert_eq!(simple.len() + complex.len(), 4);
    assert!(complex.iter().any(|d| d["id"] == "s4"));
    assert!(simple.iter().all(|d| d["id"] != "s4"));
    let max_simple = simple.iter().map(|d| d["meta"]["complexity"]["comp"].as_f64().unwrap()).fold(f64::MIN, f64::max);
    for d in complex.iter().filter(|d| d["id"] != "s4") {
        assert!(d["meta"]["complexity"]["comp"].as_f64().unwrap() >= max_simple);
    }
}

#[test]
fn sft_synth_through_scripted_generator() {
    let r = Run::new();
    let script = r.write(
        "gen.json",
        &json!({ "name": "gen", "fallback": "what is the cat and why is the dog on the mat, and what does that say about the two of them together?" }).to_string(),
    );
    let topics = r.write("topics.txt", "pets\nhomes\n");
    let input = r.docs("sft.jsonl", &sft_docs()[..2]);
    let cfg = r.write(
        "c.toml",
        &format!(
            "[provider]\ngenerator = \"{BIN} serve --scripted {script}\"\n[sft.synthesis]\nsimilarity_floor = 0.01\n"
        ),
    );
    ok(&r.run(&["--config", &cfg, "sft-synth", "--topics", &topics, &input, "synth.jsonl"]));
    let out = r.lines("synth.jsonl");
    assert_eq!(out.len(), 1);
    let steps: Vec<&str> = out[0]["meta"]["steps"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert_eq!(steps.len(), 3);
    assert_eq!(steps[0], "merge");
    assert!(steps[1].starts_with("multiturn"));
    assert_eq!(steps[2], "enhance");
    let parents: Vec<&str> =
        out[0]["meta"]["parents"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert!(parents.contains(&"s1") && parents.contains(&"s2"));
}

fn pair(id: &str, chosen: &str, rejected: &str, votes: (u64, u64)) -> Value {
    json!({ "id": id, "prompt": "what is the cat?", "chosen": chosen, "rejected": rejected,
            "votes_chosen": votes.0, "votes_rejected": votes.1 })
}

#[test]
fn align_filter_reward_and_rounds() {
    let r = Run::new();
    r.write("v.txt", VOCAB);
    r.docs("corpus.jsonl", &corpus_docs());
    let raw = r.docs(
        "raw.jsonl",
        &[
            pair("p1", "the cat sat on the mat.", "a dog ran.", (9, 1)),
            pair("p2", "the cat sat.", "the dog sat.", (5, 4)),
            pair("p3", "the cat ran.", "why is the mat?", (7, 2)),
            pair("p4", "the mat.", "the cat sat on the mat.", (6, 1)),
        ],
    );
    ok(&r.run(&["align-filter", "--min-gap", "2", &raw, "pairs.jsonl"]));
    let kept = r.lines("pairs.jsonl");
    assert_eq!(kept.iter().map(|p| p["id"].as_str().unwrap()).collect::<Vec<_>>(), ["p1", "p3", "p4"]);

    let policy = serve_cmd(&r, " --order 2");
    let reference = serve_cmd(&r, "");
    let cfg = r.write(
        "c.toml",
        &format!(
            "[provider]\npolicy = \"{policy}\"\nreference = \"{reference}\"\nsnapshots = [\"{reference}\", \"{policy}\"]\n\
             [align.rounds]\ndelta0 = 1.0\ndecay = 0.25\n"
        ),
    );
    ok(&r.run(&[
        "--config",
        &cfg,
        "align-reward",
        "--tokenizer",
        &r.p("v.txt"),
        &r.p("pairs.jsonl"),
        "rewarded.jsonl",
    ]));
    for p in r.lines("rewarded.jsonl") {
        let lp = &p["logprobs"];
        let f = |k: &str| lp[k].as_f64().unwrap();
        let expect = (f("policy_chosen") - f("reference_chosen")) - (f("policy_rejected") - f("reference_rejected"));
        assert!((p["reward"].as_f64().unwrap() - expect).abs() < 1e-9);
    }

    ok(&r.run(&["--config", &cfg, "align-rounds", "--tokenizer", &r.p("v.txt"), &r.p("pairs.jsonl"), "rounds"]));
    let reports: Value = serde_json::from_str(&r.read("rounds/rounds.json")).unwrap();
    let reports = reports.as_array().unwrap();
    assert!(!reports.is_empty());
    assert_eq!(reports[0]["delta"].as_f64().unwrap(), 1.0);
    assert!(Path::new(&r.p("rounds/round-1.jsonl")).exists());
    // the reference scored against itself gives R = 0 < 1 for every pair
    assert_eq!(r.lines("rounds/round-1.jsonl").len(), 3);
    if reports.len() > 1 {
        assert_eq!(reports[1]["delta"].as_f64().unwrap(), 0.75);
        for p in r.lines("rounds/round-2.jsonl") {
            assert!(p["reward"].as_f64().unwrap() < 0.75);
        }
    }
}

#[test]
fn probe_retrieves_for_weak_entities() {
    let r = Run::new();
    let enc = r.docs(
        "enc.jsonl",
        &[
            json!({ "id": "e1", "text": "Zorbex is a river town. Zorbex lies near Quillon. Quillon is a hill.", "source": "encyclopedia",
                    "language": "en", "meta": { "title": "Zorbex" } }),
            json!({ "id": "e2", "text": "Quillon is a hill above Zorbex. Quillon has a fort. Zorbex is close.", "source": "encyclopedia",
                    "language": "en", "meta": { "title": "Quillon" } }),
        ],
    );
    let pool = r.docs(
        "pool.jsonl",
        &[
            doc("p1", "Zorbex river town market bridge", "web", "en"),
            doc("p2", "Quillon hill fort walls", "web", "en"),
            doc("p3", "ocean waves crash loudly", "web", "en"),
            doc("p4", "Zorbex and Quillon trade", "web", "en"),
        ],
    );
    let gen = r.write("gen.json", &json!({ "fallback": "a river town near a hill with a fort" }).to_string());
    let model = r.write("model.json", &json!({ "fallback": "no idea" }).to_string());
    let cfg = r.write(
        "c.toml",
        &format!(
            "[provider]\ngenerator = \"{BIN} serve --scripted {gen}\"\nmodel = \"{BIN} serve --scripted {model}\"\n\
             judge = \"{BIN} serve --scripted {model}\"\n\
             [probe]\nmin_description_chars = 10\nmin_mentions = 1\nquestions_per_entity = 2\nk = 2\nmax_rounds = 2\n"
        ),
    );
    ok(&r.run(&["--config", &cfg, "probe", "--encyclopedia", &enc, "--pool", &pool, "retrieved.txt"]));
    let ids: Vec<String> = r.read("retrieved.txt").lines().map(String::from).collect();
    assert!(!ids.is_empty());
    assert!(!ids.contains(&"p3".to_string()));
    let m: Value = serde_json::from_str(&r.read("curate.manifest.json")).unwrap();
    let st = &m["stages"][0];
    assert_eq!(st["stage_name"], "probe");
    assert_eq!(st["output_count"], 2);
    // a static model never improves, so the loop stops after one round
    assert_eq!(st["details"]["rounds"]["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn provider_that_dies_exits_two() {
    let r = Run::new();
    r.write("v.txt", VOCAB);
    let input = r.docs("sft.jsonl", &sft_docs());
    let cfg = r.write("c.toml", "[provider]\nscorer = \"false\"\n");
    let o = r.run(&["--config", &cfg, "sft-score", "--tokenizer", &r.p("v.txt"), &input, "out.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!r.path("out.jsonl").exists());
}
