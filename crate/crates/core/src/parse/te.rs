//! Line-level scanner for comments in TE source files.
//!
//! No macro expansion happens here. A run of `#` lines directly followed by
//! a statement is attached to that statement; a blank line detaches it.
//! Blocks in front of `neverallow` statements go to the neverallow document,
//! everything else (allow rules, macro calls, declarations) to the allow
//! document.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Ident, Op};

/// All comment sentences of one TE unit for one polarity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentDoc {
    pub unit: Ident,
    pub polarity: Op,
    pub sentences: Vec<String>,
}

/// A comment block and the statement it was attached to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommentBlock {
    /// Line of the first `#` line.
    pub line: usize,
    pub text: Vec<String>,
    pub polarity: Op,
}

pub fn scan_comment_blocks(text: &str) -> Vec<CommentBlock> {
    let mut blocks = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut pending_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if pending.is_empty() {
                pending_line = i + 1;
            }
            pending.push(comment.trim_start_matches('#').trim().to_string());
        } else if line.is_empty() {
            pending.clear();
        } else if !pending.is_empty() {
            let keyword: String = line
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            let polarity = if keyword == "neverallow" || keyword == "neverallowxperm" {
                Op::Neverallow
            } else {
                Op::Allow
            };
            blocks.push(CommentBlock {
                line: pending_line,
                text: std::mem::take(&mut pending),
                polarity,
            });
        }
    }
    blocks
}

/// Lowercases, drops non-ASCII characters and splits at `.`, `:` and line
/// boundaries.
pub fn split_sentences(lines: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for line in lines {
        let cleaned: String = line
            .chars()
            .filter(char::is_ascii)
            .map(|c| c.to_ascii_lowercase())
            .collect();
        for piece in cleaned.split(['.', ':']) {
            let sentence = piece.split_whitespace().collect::<Vec<_>>().join(" ");
            if !sentence.is_empty() {
                out.push(sentence);
            }
        }
    }
    out
}

pub fn parse_te_comments(text: &str, unit: &Ident) -> (CommentDoc, CommentDoc) {
    let mut allow = CommentDoc {
        unit: unit.clone(),
        polarity: Op::Allow,
        sentences: Vec::new(),
    };
    let mut never = CommentDoc {
        unit: unit.clone(),
        polarity: Op::Neverallow,
        sentences: Vec::new(),
    };
    for block in scan_comment_blocks(text) {
        let doc = match block.polarity {
            Op::Allow => &mut allow,
            Op::Neverallow => &mut never,
        };
        doc.sentences.extend(split_sentences(&block.text));
    }
    (allow, never)
}

/// Sentence file consumed by the CoNLL-U preprocessing tool:
///
/// ```text
/// ## unit=hal_wifi polarity=allow
/// allow hal_wifi to send dump information to dumpstate
/// ```
pub fn write_sentence_file(docs: &[CommentDoc]) -> String {
    let mut out = String::new();
    for doc in docs.iter().filter(|d| !d.sentences.is_empty()) {
        writeln!(out, "## unit={} polarity={}", doc.unit, doc.polarity).unwrap();
        for s in &doc.sentences {
            writeln!(out, "{s}").unwrap();
        }
    }
    out
}

pub fn read_sentence_file(text: &str) -> Result<Vec<CommentDoc>> {
    let mut docs: Vec<CommentDoc> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(header) = line.strip_prefix("## ") {
            let mut unit = None;
            let mut polarity = None;
            for kv in header.split_whitespace() {
                match kv.split_once('=') {
                    Some(("unit", v)) => unit = Some(Ident::new(v)?),
                    Some(("polarity", v)) => polarity = Some(v.parse::<Op>().map_err(Error::Format)?),
                    _ => {}
                }
            }
            let (Some(unit), Some(polarity)) = (unit, polarity) else {
                return Err(Error::Format(format!("line {}: bad document header", i + 1)));
            };
            docs.push(CommentDoc {
                unit,
                polarity,
                sentences: Vec::new(),
            });
        } else if !line.trim().is_empty() {
            let doc = docs
                .last_mut()
                .ok_or_else(|| Error::Format(format!("line {}: sentence before any header", i + 1)))?;
            doc.sentences.push(line.trim().to_string());
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(s: &str) -> Ident {
        Ident::new(s).unwrap()
    }

    #[test]
    fn allow_comment_routed_to_allow_doc() {
        let (allow, never) = parse_te_comments(
            "# Allow apps to send dump information to dumpstate:\nallow appdomain dumpstate:fd use;",
            &unit("app"),
        );
        assert_eq!(allow.sentences, vec!["allow apps to send dump information to dumpstate"]);
        assert!(never.sentences.is_empty());
    }

    #[test]
    fn neverallow_comment_routed_to_neverallow_doc() {
        let (allow, never) = parse_te_comments(
            "# Only audio HAL may access the audio hardware\n\
             neverallow { halserverdomain -hal_audio_server} audio_device:chr_file *;",
            &unit("hal_audio"),
        );
        assert!(allow.sentences.is_empty());
        assert_eq!(never.sentences, vec!["only audio hal may access the audio hardware"]);
    }

    #[test]
    fn no_comments_means_empty_docs() {
        let (allow, never) = parse_te_comments("allow a b:c d;\ntype x;\n", &unit("x"));
        assert!(allow.sentences.is_empty() && never.sentences.is_empty());
    }

    #[test]
    fn detached_blocks_and_macros() {
        let text = "# Copyright header\n\n\
                    # Dump heap for debugging.  Second sentence: here\n\
                    userdebug_or_eng(`\n\
                      allow appdomain heapdump_data_file:file append;\n\
                    ')\n";
        let blocks = scan_comment_blocks(text);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].polarity, Op::Allow);
        let (allow, _) = parse_te_comments(text, &unit("app"));
        assert_eq!(allow.sentences, vec!["dump heap for debugging", "second sentence", "here"]);
    }

    #[test]
    fn non_ascii_dropped() {
        assert_eq!(split_sentences(&["Caf\u{e9} r\u{e9}sum\u{e9} OK".into()]), vec!["caf rsum ok"]);
    }

    #[test]
    fn sentence_file_round_trip() {
        let (allow, never) = parse_te_comments(
            "# read logs\nallow a b:file read;\n# never write. ever\nneverallow a b:file write;",
            &unit("a"),
        );
        let docs = vec![allow, never];
        let text = write_sentence_file(&docs);
        assert!(text.starts_with("## unit=a polarity=allow\n"));
        assert_eq!(read_sentence_file(&text).unwrap(), docs);
    }
}
