//! Manifest rendering. Stage details shaped `{"columns": [..], "rows": [[..], ..]}`
//! print as tables; other details print as compact JSON.

use curate_core::corpus::Manifest;
use serde_json::{json, Value};

/// A details table.
pub fn table(columns: &[&str], rows: Vec<Vec<Value>>) -> Value {
    json!({ "columns": columns, "rows": rows })
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.6}").trim_end_matches('0').trim_end_matches('.').to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn render_table(columns: &[Value], rows: &[Value]) -> String {
    let header: Vec<String> = columns.iter().map(cell).collect();
    let body: Vec<Vec<String>> =
        rows.iter().map(|r| r.as_array().map(|c| c.iter().map(cell).collect()).unwrap_or_default()).collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in &body {
        for (i, c) in r.iter().enumerate() {
            if i < width.len() {
                width[i] = width[i].max(c.chars().count());
            }
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> =
            cells.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = width.get(i).copied().unwrap_or(0))).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(&header);
    for r in &body {
        s.push_str(&line(r));
    }
    s
}

/// Funnel rows for every stage, then each stage's details.
pub fn render_text(m: &Manifest) -> String {
    let mut s = format!("run {} created {}\n", m.run_id, m.created_at);
    let mut rows = Vec::new();
    for st in &m.stages {
        let mut rejects: Vec<(&String, &u64)> = st.stats.reject_histogram.iter().collect();
        rejects.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let top: Vec<String> = rejects.iter().take(3).map(|(k, v)| format!("{k}={v}")).collect();
        rows.push(json!([
            st.stage_name,
            st.stats.input_count,
            st.stats.output_count,
            st.stats.rejected(),
            top.join(", ")
        ]));
    }
    let cols = ["stage", "input", "output", "rejected", "top rejects"].map(|c| json!(c));
    s.push_str(&render_table(&cols, &rows));
    for st in &m.stages {
        for (key, v) in &st.stats.details {
            s.push_str(&format!("\n[{}] {key}\n", st.stage_name));
            match (v.get("columns").and_then(Value::as_array), v.get("rows").and_then(Value::as_array)) {
                (Some(c), Some(r)) => s.push_str(&render_table(c, r)),
                _ => s.push_str(&format!("{v}\n")),
            }
        }
    }
    s
}

pub fn render_structured(m: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use curate_core::corpus::StageStats;

    #[test]
    fn empty_manifest_is_header_only() {
        let m = Manifest::new("r");
        let t = render_text(&m);
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().nth(1).unwrap().starts_with("stage"));
    }

    #[test]
    fn funnel_and_details() {
        let mut st = StageStats::new(10, 7, "d");
        st.reject("min_length");
        st.reject("min_length");
        st.reject("dirty_words");
        let st = st.with_detail("weights", table(&["source", "weight"], vec![vec![json!("web"), json!(0.726)]]));
        let m = Manifest::new("r").append_stage("filter:web:1", st).unwrap();
        let t = render_text(&m);
        assert!(t.contains("min_length=2, dirty_words=1"));
        assert!(t.contains("[filter:web:1] weights"));
        assert!(t.contains("web     0.726"));
        let back: Manifest = serde_json::from_str(&render_structured(&m)).unwrap();
        assert_eq!(back, m);
    }
}
