use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "curate", version, about = "Corpus curation and curriculum construction pipeline")]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Global seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Only data on stdout; no diagnostics on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Manifest file each run appends to.
    #[arg(long, global = true, value_name = "FILE", default_value = "curate.manifest.json")]
    pub manifest: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a source's quality rule chain.
    Filter(FilterArgs),
    /// Exact then MinHash-LSH near-duplicate removal.
    Dedup(DedupArgs),
    /// Mixture weights, stage budgets and sampling schedule.
    Mix(MixArgs),
    /// Pack token streams into fixed-length samples.
    Pack(PackArgs),
    /// Tabulate the learning-rate schedule.
    Lr(LrArgs),
    /// Learn a WordPiece vocabulary extension and pad the result.
    TokTrain(TokTrainArgs),
    /// Compression ratio (bytes per token) of one or more vocabularies.
    TokEval(TokEvalArgs),
    /// Probe weak long-tail entities and retrieve remedial documents.
    Probe(ProbeArgs),
    /// Merge, extend to multi-turn and enhance instructions.
    SftSynth(SftSynthArgs),
    /// Score instruction complexity.
    SftScore(SftScoreArgs),
    /// Split scored instructions into simple and complex phases.
    SftSplit(SftSplitArgs),
    /// Normalize preference records and drop low-agreement pairs.
    AlignFilter(AlignFilterArgs),
    /// Compute DPO rewards against a reference model.
    AlignReward(AlignRewardArgs),
    /// Easy-to-hard rounds with a falling reward threshold.
    AlignRounds(AlignRoundsArgs),
    /// Render a manifest.
    Report(ReportArgs),
    /// Answer the provider protocol on stdin/stdout with a local model.
    #[command(hide = true)]
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub source: String,
    #[arg(long, default_value_t = 1)]
    pub stage: u8,
    /// Book profile (cbook or bestseller); defaults to the config value.
    #[arg(long)]
    pub profile: Option<String>,
    /// JSON object mapping author names to engagement stats (QA forum answers).
    #[arg(long, value_name = "FILE")]
    pub authors: Option<String>,
    /// Reject ledger; defaults to `<output stem>.rejects.jsonl`.
    #[arg(long, value_name = "FILE")]
    pub rejects: Option<String>,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Duplicate ledger; defaults to `<output stem>.dups.jsonl`.
    #[arg(long, value_name = "FILE")]
    pub ledger: Option<String>,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Source table: one `source raw_tokens epochs` row per line; raw sizes take
    /// K, M, B or T suffixes.
    #[arg(long, value_name = "FILE", conflicts_with = "builtin")]
    pub table2: Option<String>,
    /// Use the built-in ten-source table.
    #[arg(long)]
    pub builtin: bool,
    /// Also plan the three pre-training stages at this scale.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Also draw this many sources from the plan.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub separator: Option<u32>,
    /// Source label for token-array input.
    #[arg(long, default_value = "web")]
    pub source: String,
    /// Tokenize document input with this vocabulary instead of reading token arrays.
    #[arg(long, value_name = "FILE")]
    pub tokenizer: Option<String>,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    #[arg(long)]
    pub total_steps: u64,
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long, conflicts_with = "warmup_fraction")]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    /// Row interval; defaults to 1% of the steps.
    #[arg(long)]
    pub every: Option<u64>,
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct TokTrainArgs {
    /// Base vocabulary (vocab text or .json spec).
    #[arg(long, value_name = "FILE")]
    pub base: String,
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub pad_to: Option<usize>,
    #[arg(long)]
    pub whole_word: bool,
    pub input: String,
    /// Output spec: `.json` for the full spec, anything else for a vocab file.
    pub output: String,
}

#[derive(Debug, Args)]
pub struct TokEvalArgs {
    /// Vocabulary to evaluate; repeat to compare.
    #[arg(long = "spec", value_name = "FILE", required = true)]
    pub specs: Vec<String>,
    #[arg(short, long, default_value = "-")]
    pub output: String,
    #[arg(required = true)]
    pub corpora: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_name = "FILE")]
    pub encyclopedia: String,
    /// Pre-training pool to retrieve from.
    #[arg(long, value_name = "FILE")]
    pub pool: String,
    /// Corpus sample for mention counts; defaults to the pool.
    #[arg(long, value_name = "FILE")]
    pub mentions: Option<String>,
    /// Question templates, one per line, with {v} and {u} placeholders.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Retrieved document ids, one per line.
    pub output: String,
}

#[derive(Debug, Args)]
pub struct SftSynthArgs {
    #[arg(long, value_name = "FILE")]
    pub topics: String,
    /// JSON object with merge, multiturn and enhance prompts.
    #[arg(long, value_name = "FILE")]
    pub prompts: Option<String>,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct SftScoreArgs {
    #[arg(long, value_name = "FILE")]
    pub tokenizer: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct SftSplitArgs {
    #[arg(long, conflicts_with = "threshold")]
    pub quantile: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    pub input: String,
    pub simple: String,
    pub complex: String,
}

#[derive(Debug, Args)]
pub struct AlignFilterArgs {
    /// Record mapping: a preset name (generic, shp) or a JSON mapping file.
    #[arg(long)]
    pub mapping: Option<String>,
    #[arg(long)]
    pub min_gap: Option<i64>,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct AlignRewardArgs {
    #[arg(long, value_name = "FILE")]
    pub tokenizer: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Args)]
pub struct AlignRoundsArgs {
    #[arg(long, value_name = "FILE")]
    pub tokenizer: String,
    pub input: String,
    /// Directory for `round-N.jsonl` training sets and `rounds.json`.
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Structured,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Manifest to render; defaults to --manifest.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub tokenizer: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    #[arg(long, value_name = "FILE")]
    pub scripted: Option<String>,
}
