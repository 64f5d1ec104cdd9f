//! Document records, the JSONL record codec and run manifests.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::seed::sha256_hex;

/// The ten corpus categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
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

impl SourceKind {
    pub const ALL: [SourceKind; 10] = [
        SourceKind::Web,
        SourceKind::Code,
        SourceKind::Encyclopedia,
        SourceKind::Academic,
        SourceKind::QaForum,
        SourceKind::Book,
        SourceKind::News,
        SourceKind::Legal,
        SourceKind::Patent,
        SourceKind::EduAssessment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Web => "web",
            SourceKind::Code => "code",
            SourceKind::Encyclopedia => "encyclopedia",
            SourceKind::Academic => "academic",
            SourceKind::QaForum => "qa_forum",
            SourceKind::Book => "book",
            SourceKind::News => "news",
            SourceKind::Legal => "legal",
            SourceKind::Patent => "patent",
            SourceKind::EduAssessment => "edu_assessment",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown source kind {s:?}"))
    }
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: SourceKind,
    pub language: String,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        source: SourceKind,
        language: impl Into<String>,
    ) -> Self {
        Document { id: id.into(), text: text.into(), source, language: language.into(), meta: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Length in code points.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(Value::as_str)
    }

    pub fn meta_u64(&self, key: &str) -> Option<u64> {
        self.meta.get(key).and_then(Value::as_u64)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(Value::as_f64)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line_no}: malformed record at byte offset {offset}: {reason}")]
    MalformedRecord { line_no: usize, offset: u64, reason: String },
    #[error("line {line_no}: missing field {name:?}")]
    MissingField { line_no: usize, name: &'static str },
    #[error("line {line_no}: duplicate id {id:?}")]
    DuplicateId { line_no: usize, id: String },
    #[error("document {id:?}: meta is not serializable: {reason}")]
    NonSerializableMeta { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

const REQUIRED: [&str; 4] = ["id", "text", "source", "language"];

/// Lazy reader over a JSONL document stream.
///
/// In strict mode the first error ends the stream; in lenient mode errors are
/// yielded and reading continues with the next line.
pub struct DocumentReader<R> {
    input: R,
    line_no: usize,
    offset: u64,
    seen: HashSet<String>,
    lenient: bool,
    done: bool,
    buf: String,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(input: R) -> Self {
        DocumentReader {
            input,
            line_no: 0,
            offset: 0,
            seen: HashSet::new(),
            lenient: false,
            done: false,
            buf: String::new(),
        }
    }

    pub fn lenient(mut self, yes: bool) -> Self {
        self.lenient = yes;
        self
    }

    fn parse_line(&mut self, line: &str, line_start: u64) -> Result<Document, CorpusError> {
        let line_no = self.line_no;
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line_no,
            offset: line_start + column_offset(line, e.column()),
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::MalformedRecord {
            line_no,
            offset: line_start,
            reason: "record is not an object".into(),
        })?;
        for name in REQUIRED {
            if !obj.contains_key(name) {
                return Err(CorpusError::MissingField { line_no, name });
            }
        }
        let doc: Document = serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
            line_no,
            offset: line_start,
            reason: e.to_string(),
        })?;
        if doc.id.is_empty() {
            return Err(CorpusError::MalformedRecord { line_no, offset: line_start, reason: "empty id".into() });
        }
        if !self.seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId { line_no, id: doc.id });
        }
        Ok(doc)
    }
}

fn column_offset(line: &str, column: usize) -> u64 {
    // serde_json columns are 1-based character counts
    let chars = column.saturating_sub(1);
    line.char_indices().nth(chars).map(|(i, _)| i).unwrap_or(line.len()) as u64
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.done {
                return None;
            }
            self.buf.clear();
            let n = match self.input.read_line(&mut self.buf) {
                Ok(n) => n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            if n == 0 {
                self.done = true;
                return None;
            }
            let line_start = self.offset;
            self.offset += n as u64;
            self.line_no += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.trim().is_empty() {
                continue;
            }
            let res = self.parse_line(trimmed, line_start);
            self.buf = line;
            if res.is_err() && !self.lenient {
                self.done = true;
            }
            return Some(res);
        }
    }
}

/// Opens a document stream; `-` reads standard input.
pub fn read_document_stream(path: &Path) -> Result<DocumentReader<Box<dyn BufRead>>, CorpusError> {
    let input: Box<dyn BufRead> = if path.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path)?))
    };
    Ok(DocumentReader::new(input))
}

/// Reads every document, failing on the first error.
pub fn read_all(path: &Path) -> Result<Vec<Document>, CorpusError> {
    read_document_stream(path)?.collect()
}

/// Parses a whole in-memory stream.
pub fn read_from<R: Read>(input: R) -> Result<Vec<Document>, CorpusError> {
    DocumentReader::new(BufReader::new(input)).collect()
}

/// Writes one record per line. Newlines inside text are escaped by the JSON codec.
pub fn write_documents<'a, W, I>(out: W, docs: I) -> Result<usize, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a Document>,
{
    let mut out = BufWriter::new(out);
    let mut count = 0;
    for doc in docs {
        let line = serde_json::to_string(doc)
            .map_err(|e| CorpusError::NonSerializableMeta { id: doc.id.clone(), reason: e.to_string() })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

pub fn write_document_stream<'a, I>(docs: I, path: &Path) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = &'a Document>,
{
    if path.as_os_str() == "-" {
        return write_documents(io::stdout().lock(), docs);
    }
    write_documents(File::create(path)?, docs)
}

/// Counts reported by one pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub input_count: u64,
    pub output_count: u64,
    /// Each rejected item is counted once, under the rule that rejected it first.
    pub reject_histogram: BTreeMap<String, u64>,
    pub config_digest: String,
    /// Stage-specific summary (tables, round records) carried into reports.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl StageStats {
    pub fn new(input_count: u64, output_count: u64, config_digest: impl Into<String>) -> Self {
        StageStats {
            input_count,
            output_count,
            reject_histogram: BTreeMap::new(),
            config_digest: config_digest.into(),
            details: BTreeMap::new(),
        }
    }

    pub fn reject(&mut self, rule: &str) {
        *self.reject_histogram.entry(rule.to_string()).or_default() += 1;
    }

    pub fn with_detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn rejected(&self) -> u64 {
        self.reject_histogram.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage_name: String,
    #[serde(flatten)]
    pub stats: StageStats,
}

/// Append-only record of the stages applied in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub created_at: String,
    pub stages: Vec<StageEntry>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("stage {0:?} is already recorded in this run")]
    DuplicateStage(String),
    #[error("stage {stage:?}: input {input} != output {output} + rejected {rejected}")]
    Unbalanced { stage: String, input: u64, output: u64, rejected: u64 },
    #[error("manifest not found at {0}")]
    ManifestMissing(String),
    #[error("manifest: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Manifest {
    pub fn new(run_id: impl Into<String>) -> Self {
        Manifest {
            run_id: run_id.into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            stages: Vec::new(),
        }
    }

    /// Returns the manifest with one more stage; earlier entries are untouched.
    pub fn append_stage(mut self, stage_name: &str, stats: StageStats) -> Result<Manifest, ManifestError> {
        if self.stages.iter().any(|s| s.stage_name == stage_name) {
            return Err(ManifestError::DuplicateStage(stage_name.to_string()));
        }
        let rejected = stats.rejected();
        if stats.input_count != stats.output_count + rejected {
            return Err(ManifestError::Unbalanced {
                stage: stage_name.to_string(),
                input: stats.input_count,
                output: stats.output_count,
                rejected,
            });
        }
        self.stages.push(StageEntry { stage_name: stage_name.to_string(), stats });
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
        if !path.exists() {
            return Err(ManifestError::ManifestMissing(path.display().to_string()));
        }
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }
}

/// Digest of a configuration value's canonical JSON form.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    // Value maps are ordered, so equal configs serialize identically.
    let canonical = serde_json::to_value(config).and_then(|v| serde_json::to_vec(&v)).unwrap_or_default();
    sha256_hex(&canonical)[..16].to_string()
}
