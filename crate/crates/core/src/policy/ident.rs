use std::borrow::Borrow;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Name of a type, attribute, class or permission.
///
/// Always non-empty and restricted to `[A-Za-z0-9_.$-]`. Equality and
/// ordering are by the underlying string, so identifiers produced by
/// different interners compare consistently.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ident(Arc<str>);

/// Reserved target token meaning "the subject itself".
pub const SELF: &str = "self";

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '-')
}

impl Ident {
    pub fn new(s: &str) -> Result<Self> {
        if s.is_empty() || !s.chars().all(is_ident_char) {
            return Err(Error::InvalidIdent(s.to_string()));
        }
        Ok(Ident(Arc::from(s)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_self(&self) -> bool {
        &*self.0 == SELF
    }

    pub fn self_token() -> Self {
        Ident(Arc::from(SELF))
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl AsRef<str> for Ident {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Ident {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl std::str::FromStr for Ident {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ident::new(s)
    }
}

impl Serialize for Ident {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Ident {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ident::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Shares one allocation per distinct name.
#[derive(Debug, Default)]
pub struct Interner {
    names: HashSet<Arc<str>>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Result<Ident> {
        if let Some(existing) = self.names.get(s) {
            return Ok(Ident(existing.clone()));
        }
        let id = Ident::new(s)?;
        self.names.insert(id.0.clone());
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
