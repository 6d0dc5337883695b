//! Readers for the policy and configuration formats found in AOSP trees and
//! firmware images.

mod android;
mod cil;
mod flat;
mod sexpr;
mod te;

pub use android::{parse_file_contexts, parse_rc, parse_seapp, FileContextEntry, Parsed, RcServiceEntry, SeappEntry};
pub use cil::parse_cil_fragment;
pub use flat::{parse_flat_fragment, write_flat};
pub use te::{
    parse_te_comments, read_sentence_file, scan_comment_blocks, split_sentences, write_sentence_file, CommentBlock,
    CommentDoc,
};

use rayon::prelude::*;

use crate::data::ClassPermTable;
use crate::error::Result;
use crate::policy::PolicyDb;

#[derive(Clone, Debug)]
pub struct ParseOptions {
    /// Recorded in rule origins.
    pub source: String,
    /// Reject undeclared names instead of synthesizing types for them.
    pub strict: bool,
    /// Expands `*`, `~{..}` and `(all)` in permission position.
    pub class_perms: ClassPermTable,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            source: "<input>".to_string(),
            strict: false,
            class_perms: ClassPermTable::bundled(),
        }
    }
}

impl ParseOptions {
    pub fn with_source(&self, source: impl Into<String>) -> Self {
        ParseOptions {
            source: source.into(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyFormat {
    Cil,
    Flat,
}

pub fn parse_cil(text: &str, opts: &ParseOptions) -> Result<PolicyDb> {
    let mut db = parse_cil_fragment(text, opts)?;
    db.finalize(opts.strict)?;
    Ok(db)
}

pub fn parse_flat(text: &str, opts: &ParseOptions) -> Result<PolicyDb> {
    let mut db = parse_flat_fragment(text, opts)?;
    db.finalize(opts.strict)?;
    Ok(db)
}

/// Parses `(source name, text)` pairs concurrently and merges them in
/// source-name order, then checks declarations across the merged result.
pub fn parse_sources(format: PolicyFormat, sources: &[(String, String)], opts: &ParseOptions) -> Result<PolicyDb> {
    let mut ordered: Vec<&(String, String)> = sources.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    let fragments: Vec<PolicyDb> = ordered
        .par_iter()
        .map(|(name, text)| {
            let opts = opts.with_source(name.clone());
            match format {
                PolicyFormat::Cil => parse_cil_fragment(text, &opts),
                PolicyFormat::Flat => parse_flat_fragment(text, &opts),
            }
            .map_err(|e| e.in_file(name.clone()))
        })
        .collect::<Result<_>>()?;
    let mut db = PolicyDb::new();
    for fragment in fragments {
        db.merge(fragment);
    }
    db.finalize(opts.strict)?;
    Ok(db)
}
