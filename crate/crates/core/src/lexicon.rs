//! Sectioned word lists: one stimulus per line under `[section]` headers.
//! Lines starting with `#` and blank lines are ignored.

use std::fs;
use std::path::Path;

use crate::error::{AuditError, Result};

/// The 25 pleasant and 25 unpleasant words of the classic valence IAT/WEAT.
pub const VALENCE_LEXICON: &str = include_str!("../data/valence_lexicon.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    sections: Vec<(String, Vec<String>)>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, Vec<String>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if sections.iter().any(|(n, _)| n == name) {
                    return Err(AuditError::Parse(format!(
                        "lexicon line {}: section [{name}] repeated",
                        lineno + 1
                    )));
                }
                sections.push((name.to_string(), Vec::new()));
                continue;
            }
            match sections.last_mut() {
                Some((_, words)) => words.push(line.to_string()),
                None => {
                    return Err(AuditError::Parse(format!(
                        "lexicon line {}: stimulus {line:?} before any [section] header",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn valence() -> Self {
        Self::parse(VALENCE_LEXICON).expect("bundled lexicon parses")
    }

    pub fn section(&self, name: &str) -> Result<&[String]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, w)| w.as_slice())
            .ok_or_else(|| AuditError::Parse(format!("lexicon has no [{name}] section")))
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }
}
