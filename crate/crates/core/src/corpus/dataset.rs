use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::vocab::is_reserved;
use crate::error::{Error, Result};

/// One (code, summary) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub sample_id: String,
    pub project_id: String,
    /// May contain `<NL>` statement markers.
    pub code_tokens: Vec<String>,
    pub summary_tokens: Vec<String>,
}

impl Sample {
    pub fn new(
        sample_id: impl Into<String>,
        project_id: impl Into<String>,
        code: &str,
        summary: &str,
    ) -> Self {
        Sample {
            sample_id: sample_id.into(),
            project_id: project_id.into(),
            code_tokens: code.split_whitespace().map(str::to_string).collect(),
            summary_tokens: summary.split_whitespace().map(str::to_string).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::format("dataset", msg));
        if self.sample_id.is_empty() || self.sample_id.contains(char::is_whitespace) {
            return bad(format!("bad sample id `{}`", self.sample_id));
        }
        if self.project_id.is_empty() || self.project_id.contains(char::is_whitespace) {
            return bad(format!("bad project id `{}`", self.project_id));
        }
        if self.code_tokens.is_empty() {
            return bad(format!("sample `{}` has no code tokens", self.sample_id));
        }
        if self.summary_tokens.is_empty() {
            return bad(format!("sample `{}` has an empty summary", self.sample_id));
        }
        if let Some(t) = self.summary_tokens.iter().find(|t| is_reserved(t)) {
            return bad(format!(
                "sample `{}` summary contains reserved token `{t}`",
                self.sample_id
            ));
        }
        Ok(())
    }
}

/// `sample_id \t project_id \t code tokens \t summary tokens`, one per line.
pub fn format_dataset(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.sample_id,
            s.project_id,
            s.code_tokens.join(" "),
            s.summary_tokens.join(" ")
        );
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [sid, pid, code, summary] = fields[..] else {
            return Err(Error::format(
                "dataset",
                format!("line {}: expected 4 tab-separated fields, found {}", lineno + 1, fields.len()),
            ));
        };
        let s = Sample::new(sid, pid, code, summary);
        s.validate()
            .map_err(|e| Error::format("dataset", format!("line {}: {e}", lineno + 1)))?;
        if !ids.insert(s.sample_id.clone()) {
            return Err(Error::format(
                "dataset",
                format!("line {}: duplicate sample id `{sid}`", lineno + 1),
            ));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn write_dataset(path: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::write(path, format_dataset(samples)).map_err(|e| Error::io(path, e))
}
