//! JSON-lines storage for atomic rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{AtomicRule, Ident, Label};

/// One line of an atomic-rule file.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomicRecord {
    pub subject: Ident,
    pub target: Ident,
    pub class: Ident,
    pub permission: Ident,
    pub label: Label,
    /// Image, file or generator the rule came from.
    #[serde(default)]
    pub source: String,
}

impl AtomicRecord {
    pub fn new(rule: &AtomicRule, source: impl Into<String>) -> Self {
        AtomicRecord {
            subject: rule.subject.clone(),
            target: rule.target.clone(),
            class: rule.class.clone(),
            permission: rule.permission.clone(),
            label: rule.label,
            source: source.into(),
        }
    }

    pub fn rule(&self) -> AtomicRule {
        AtomicRule::new(
            self.subject.clone(),
            self.target.clone(),
            self.class.clone(),
            self.permission.clone(),
            self.label,
        )
    }
}

/// One JSON object per line, in the given order.
pub fn write_atomics<'a>(records: impl IntoIterator<Item = &'a AtomicRecord>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_atomics(text: &str) -> Result<Vec<AtomicRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Op;

    #[test]
    fn round_trip() {
        let rule = AtomicRule::new(
            Ident::new("a").unwrap(),
            Ident::new("b").unwrap(),
            Ident::new("file").unwrap(),
            Ident::new("read").unwrap(),
            Op::Neverallow,
        );
        let records = vec![AtomicRecord::new(&rule, "img1")];
        let text = write_atomics(&records).unwrap();
        assert_eq!(
            text,
            "{\"subject\":\"a\",\"target\":\"b\",\"class\":\"file\",\"permission\":\"read\",\"label\":\"neverallow\",\"source\":\"img1\"}\n"
        );
        let back = read_atomics(&text).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[0].rule(), rule);
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_atomics("\n{\"subject\":\"a\"}\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
