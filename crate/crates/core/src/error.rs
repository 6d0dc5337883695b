use std::io;

use thiserror::Error;

use crate::policy::Ident;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid identifier {0:?}")]
    InvalidIdent(String),

    #[error("unknown name `{0}`")]
    UnknownName(Ident),

    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("malformed dependency tree: {0}")]
    MalformedTree(String),

    #[error("no document has any keyword triplet")]
    EmptyCorpus,

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("{file}: {inner}")]
    InFile { file: String, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_file(self, file: impl Into<String>) -> Self {
        Error::InFile {
            file: file.into(),
            inner: Box::new(self),
        }
    }

    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
