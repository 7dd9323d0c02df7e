//! The small list-of-maps text format used by policy and demo files:
//!
//! ```text
//! - action: remind Buyer of Shipment until Payment
//!   when: 0 0 * * * // daily
//!   max tries: 5
//! ```
//!
//! `//` starts a comment. Keys may contain spaces; the first `:` splits key
//! from value.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ListMapError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Entry {
    pub line: usize,
    pub fields: Vec<Field>,
}

impl Entry {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|f| f.key == key)
            .map(|f| f.value.as_str())
    }
}

pub fn parse_listmap(text: &str) -> Result<Vec<Entry>, ListMapError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split("//").next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let trimmed = content.trim_start();
        let body = if let Some(rest) = trimmed.strip_prefix('-') {
            entries.push(Entry { line, fields: Vec::new() });
            rest
        } else if trimmed.len() < content.len() && !entries.is_empty() {
            trimmed
        } else {
            return Err(ListMapError {
                line,
                message: "expected `- key: value` or an indented `key: value`".into(),
            });
        };
        let (key, value) = body.split_once(':').ok_or_else(|| ListMapError {
            line,
            message: "missing `:`".into(),
        })?;
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
        if key.is_empty() {
            return Err(ListMapError {
                line,
                message: "empty key".into(),
            });
        }
        let entry = entries.last_mut().unwrap();
        if entry.get(&key).is_some() {
            return Err(ListMapError {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        entry.fields.push(Field {
            key,
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let text = "// reminders\n- action: remind Buyer of Shipment until Payment\n  when: 0 0 * * * // daily\n  max tries: 5\n\n-  action: x\n";
        let entries = parse_listmap(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].get("when"), Some("0 0 * * *"));
        assert_eq!(entries[0].get("max tries"), Some("5"));
        assert_eq!(entries[1].line, 6);
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(parse_listmap("when: 1").unwrap_err().line, 1);
        assert_eq!(parse_listmap("- a: 1\n  b\n").unwrap_err().line, 2);
        assert_eq!(parse_listmap("- a: 1\n  a: 2\n").unwrap_err().line, 2);
        assert!(parse_listmap("").unwrap().is_empty());
    }
}
