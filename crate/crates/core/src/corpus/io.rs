use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{Corpus, CorpusError, LineDiagnostic, Session, Source};

/// Reads a JSONL corpus, one session per line. Blank lines are skipped.
///
/// Every line is checked; if any is malformed the whole file is rejected and
/// all diagnostics are returned together.
pub fn ingest_corpus(path: impl AsRef<Path>, schema: Source) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_str(&raw, schema)
}

pub fn ingest_str(raw: &str, schema: Source) -> Result<Corpus, CorpusError> {
    let mut sessions = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let session: Session = match serde_json::from_str(line) {
            Ok(s) => s,
            Err(e) => {
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut problem = session.validate().err();
        if problem.is_none() && session.source != schema {
            problem = Some(format!(
                "source {} does not match expected schema {schema}",
                session.source
            ));
        }
        if problem.is_none() && !seen.insert(session.session_id.clone()) {
            problem = Some(format!("duplicate session_id {:?}", session.session_id));
        }
        match problem {
            Some(message) => diagnostics.push(LineDiagnostic { line: line_no, message }),
            None => sessions.push(session),
        }
    }

    if !diagnostics.is_empty() {
        return Err(CorpusError::Schema(diagnostics));
    }
    Ok(Corpus { sessions })
}

/// Writes any serializable records as JSONL.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| CorpusError::InvalidRecord(e.to_string()))?;
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Writes a corpus in the JSONL format read by [`ingest_corpus`].
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(path, &corpus.sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"session_id":"s1","source":"simulation","utterances":[{"speaker":"teacher","text":"Let's read the problem."}],"annotations":{"objective":{"ratings":[1]}}}"#;

    #[test]
    fn single_record() {
        let corpus = ingest_str(ONE, Source::Simulation).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.sessions[0].utterances.len(), 1);
        assert_eq!(corpus.sessions[0].annotations["objective"].ratings, vec![1]);
    }

    #[test]
    fn rating_out_of_range_names_the_line() {
        let bad = ONE.replace("[1]", "[4]");
        let raw = format!("{ONE}\n{}\n", bad.replace("s1", "s2"));
        match ingest_str(&raw, Source::Simulation) {
            Err(CorpusError::Schema(diags)) => {
                assert_eq!(diags.len(), 1);
                assert_eq!(diags[0].line, 2);
                assert!(diags[0].message.contains("rating 4"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_missing_fields() {
        let extra = ONE.replace(r#""source""#, r#""extra":1,"source""#);
        assert!(ingest_str(&extra, Source::Simulation).is_err());
        let missing = ONE.replace(r#""source":"simulation","#, "");
        assert!(ingest_str(&missing, Source::Simulation).is_err());
    }

    #[test]
    fn schema_mismatch_and_duplicates() {
        assert!(ingest_str(ONE, Source::Classroom).is_err());
        let raw = format!("{ONE}\n{ONE}");
        match ingest_str(&raw, Source::Simulation) {
            Err(CorpusError::Schema(diags)) => assert_eq!(diags[0].line, 2),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_relevance_rejected() {
        let bad = ONE.replace(r#"{"ratings":[1]}"#, r#"{"ratings":[1],"relevance":[[0,1]]}"#);
        assert!(ingest_str(&bad, Source::Simulation).is_err());
        let good = ONE.replace(r#"{"ratings":[1]}"#, r#"{"ratings":[1],"relevance":[[0,0]]}"#);
        assert!(ingest_str(&good, Source::Simulation).is_ok());
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(ingest_str("", Source::Classroom).unwrap().is_empty());
    }
}
