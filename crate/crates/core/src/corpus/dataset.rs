use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, RawExample};

#[derive(Deserialize)]
struct Record {
    prompt: Option<String>,
    thinking: Option<String>,
    answer: Option<String>,
}

/// Reads line-delimited JSON records with `prompt`, `thinking` and `answer`
/// fields. Blank lines are skipped; line numbers in errors are 1-based.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RawExample>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

pub(crate) fn parse_dataset(text: &str) -> Result<Vec<RawExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            line: line_no,
            message,
        };
        let rec: Record =
            serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
        let field = |v: Option<String>, name: &str| {
            v.ok_or_else(|| malformed(format!("missing field \"{name}\"")))
        };
        let example = RawExample {
            prompt: field(rec.prompt, "prompt")?,
            thinking: field(rec.thinking, "thinking")?,
            answer: field(rec.answer, "answer")?,
        };
        example
            .validate()
            .map_err(|e| malformed(e.to_string()))?;
        out.push(example);
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, examples: &[RawExample]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex).expect("string fields always serialize");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}
