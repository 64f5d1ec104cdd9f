//! Inputs (`-` is stdin), all-or-nothing outputs (`-` is stdout) and manifest updates.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use curate_core::corpus::{self, Document, Manifest, StageStats};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

pub fn open_input(path: &str) -> Result<Box<dyn BufRead>, CliError> {
    if path == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn read_text(path: &str) -> Result<String, CliError> {
    let mut s = String::new();
    open_input(path)?.read_to_string(&mut s).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
    Ok(s)
}

pub fn read_docs(path: &str) -> Result<Vec<Document>, CliError> {
    corpus::read_from(open_input(path)?).map_err(|e| CliError::Input(format!("{path}: {e}")))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &str) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Input(format!("{path}:{}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Runs `fill` against a temporary file next to `path` and renames it into place
/// only if `fill` succeeds. `-` writes to stdout.
pub fn write_output<F>(path: &str, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    if path == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        fill(&mut lock)?;
        lock.flush()?;
        return Ok(());
    }
    let target = Path::new(path);
    let dir = match target.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(target).map_err(|e| CliError::Input(format!("{path}: {}", e.error)))?;
    Ok(())
}

pub fn write_docs(path: &str, docs: &[Document]) -> Result<(), CliError> {
    write_output(path, |w| {
        corpus::write_documents(w, docs.iter())?;
        Ok(())
    })
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &str, items: impl IntoIterator<Item = &'a T>) -> Result<(), CliError> {
    write_output(path, |w| {
        for it in items {
            serde_json::to_writer(&mut *w, it)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &str, value: &T) -> Result<(), CliError> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Companion file path: `out.jsonl` + `rejects` gives `out.rejects.jsonl`.
pub fn sidecar(out: &str, tag: &str) -> String {
    if out == "-" {
        return format!("{tag}.jsonl");
    }
    let p = Path::new(out);
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = format!("{stem}.{tag}.jsonl");
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.join(name).display().to_string(),
        _ => name,
    }
}

/// Appends a stage to the manifest at `path`, creating it if needed. A repeated
/// stage name gets a `#n` suffix.
pub fn append_manifest(path: &Path, run_id: &str, stage: &str, stats: StageStats) -> Result<(), CliError> {
    let manifest = if path.exists() { Manifest::load(path)? } else { Manifest::new(run_id) };
    let mut name = stage.to_string();
    let mut n = 1;
    while manifest.stages.iter().any(|s| s.stage_name == name) {
        n += 1;
        name = format!("{stage}#{n}");
    }
    let manifest = manifest.append_stage(&name, stats)?;
    write_json(&path.display().to_string(), &manifest)
}
