use std::collections::HashSet;
use std::path::Path;

use super::{read_text, PipelineError};
use crate::document::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// The first malformed line aborts the read.
    #[default]
    Strict,
    /// Malformed lines are skipped with a warning.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub documents: Vec<Document>,
    /// One message per skipped line, naming the line number.
    pub warnings: Vec<String>,
}

fn check(doc: &Document) -> Result<(), String> {
    if doc.id.is_empty() {
        return Err("empty id".into());
    }
    if doc.context.trim().is_empty() {
        return Err("empty context".into());
    }
    if doc.question.trim().is_empty() {
        return Err("empty question".into());
    }
    Ok(())
}

/// Parses JSON Lines records. `source` labels error messages.
pub fn parse_jsonl(text: &str, mode: IngestMode, source: &Path) -> Result<Ingested, PipelineError> {
    let mut documents = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Document>(line)
            .map_err(|e| e.to_string())
            .and_then(|d| check(&d).map(|()| d));
        match parsed {
            Ok(doc) => {
                if !seen.insert(doc.id.clone()) {
                    return Err(PipelineError::DuplicateId(doc.id));
                }
                documents.push(doc);
            }
            Err(message) => match mode {
                IngestMode::Strict => {
                    return Err(PipelineError::Parse { path: source.to_path_buf(), line: i + 1, message })
                }
                IngestMode::Lenient => {
                    let w = format!("{}:{}: skipped: {message}", source.display(), i + 1);
                    log::warn!("{w}");
                    warnings.push(w);
                }
            },
        }
    }
    if documents.is_empty() {
        return Err(PipelineError::NoDocuments(source.to_path_buf()));
    }
    Ok(Ingested { documents, warnings })
}

/// Reads a corpus file with one JSON object per line: `id`, `context`,
/// `question` (or `input`), optional `initial` and `answers`.
pub fn ingest(path: &Path, mode: IngestMode) -> Result<Ingested, PipelineError> {
    parse_jsonl(&read_text(path)?, mode, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: IngestMode) -> Result<Ingested, PipelineError> {
        parse_jsonl(text, mode, Path::new("c.jsonl"))
    }

    const THREE: &str = r#"{"id":"a","context":"One.","question":"Q1?"}
{"id":"b","context":"Two.","input":"Q2?","answers":["x"]}
{"id":"c","initial":"Hi. ","context":"Three.","question":"Q3?"}
"#;

    #[test]
    fn well_formed_lines_in_order() {
        let got = parse(THREE, IngestMode::Strict).unwrap();
        let ids: Vec<_> = got.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(got.documents[1].question, "Q2?");
        assert_eq!(got.documents[1].answers, ["x"]);
        assert_eq!(got.documents[2].initial, "Hi. ");
        assert!(got.warnings.is_empty());
    }

    #[test]
    fn lenient_skips_and_names_line() {
        let text = "{\"id\":\"a\",\"context\":\"x\",\"question\":\"q\"}\n{broken\n{\"id\":\"c\",\"context\":\"y\",\"question\":\"q\"}\n";
        let got = parse(text, IngestMode::Lenient).unwrap();
        assert_eq!(got.documents.len(), 2);
        assert_eq!(got.warnings.len(), 1);
        assert!(got.warnings[0].contains(":2:"), "{}", got.warnings[0]);
        match parse(text, IngestMode::Strict) {
            Err(PipelineError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_fields_are_malformed() {
        let text = "{\"id\":\"a\",\"context\":\"x\"}\n{\"id\":\"b\",\"context\":\" \",\"question\":\"q\"}\n";
        let got = parse(&format!("{text}{}", THREE.lines().next().unwrap()), IngestMode::Lenient).unwrap();
        assert_eq!(got.documents.len(), 1);
        assert_eq!(got.warnings.len(), 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{THREE}{}\n", THREE.lines().next().unwrap());
        match parse(&text, IngestMode::Lenient) {
            Err(PipelineError::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_documents_is_an_error() {
        assert!(matches!(parse("\n{bad\n", IngestMode::Lenient), Err(PipelineError::NoDocuments(_))));
        assert!(matches!(
            ingest(Path::new("/nonexistent/corpus.jsonl"), IngestMode::Strict),
            Err(PipelineError::Io { .. })
        ));
    }
}
