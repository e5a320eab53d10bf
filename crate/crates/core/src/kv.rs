//! Line-oriented `key = value` text files.
//!
//! Grammar: one entry per line; `#` starts a comment that runs to the end
//! of the line; blank lines are skipped; the key is everything before the
//! first `=`, the value everything after, both trimmed. Keys may repeat
//! only if the caller allows it.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format(format!("line {}: expected `key = value`, got {line:?}", i + 1)));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Format(format!("line {}: empty key", i + 1)));
        }
        out.push(Entry { line: i + 1, key: key.to_string(), value: v.trim().to_string() });
    }
    Ok(out)
}

/// Like [`parse`] but rejects a key that appears twice.
pub fn parse_unique(text: &str) -> Result<Vec<Entry>> {
    let entries = parse(text)?;
    let mut seen = std::collections::HashMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(e.key.as_str(), e.line) {
            return Err(Error::Format(format!("line {}: key {:?} already set on line {first}", e.line, e.key)));
        }
    }
    Ok(entries)
}
