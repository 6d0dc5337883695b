//! Bundled data files: the class-permission table, the AID user map and the
//! keyword corpora. Each file can be overridden by placing a file of the same
//! name under the directory named by `SEPAL_DATA_DIR`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::policy::Ident;

pub const DATA_DIR_ENV: &str = "SEPAL_DATA_DIR";

pub const CLASS_PERMS_FILE: &str = "class_perms.txt";
pub const AID_MAP_FILE: &str = "aid_map.tsv";
pub const ACTIONS_FILE: &str = "corpus/actions.txt";
pub const RESOURCES_FILE: &str = "corpus/resources.txt";
pub const SYNONYMS_FILE: &str = "corpus/synonyms.txt";

const BUNDLED: &[(&str, &str)] = &[
    (CLASS_PERMS_FILE, include_str!("../data/class_perms.txt")),
    (AID_MAP_FILE, include_str!("../data/aid_map.tsv")),
    (ACTIONS_FILE, include_str!("../data/corpus/actions.txt")),
    (RESOURCES_FILE, include_str!("../data/corpus/resources.txt")),
    (SYNONYMS_FILE, include_str!("../data/corpus/synonyms.txt")),
];

pub fn bundled(name: &str) -> &'static str {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .unwrap_or_else(|| panic!("no bundled data file {name}"))
}

/// Reads `name` from `SEPAL_DATA_DIR` when present there, otherwise returns
/// the bundled copy.
pub fn load(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        let path = PathBuf::from(dir).join(name);
        if path.exists() {
            return Ok(std::fs::read_to_string(path)?);
        }
    }
    Ok(bundled(name).to_string())
}

/// Non-empty, non-comment lines.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

/// Permissions declared for each object class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassPermTable {
    classes: BTreeMap<Ident, BTreeSet<Ident>>,
}

impl ClassPermTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes: BTreeMap<Ident, BTreeSet<Ident>> = BTreeMap::new();
        for line in content_lines(text) {
            let mut words = line.split_whitespace();
            let class = Ident::new(words.next().unwrap())?;
            let perms = words.map(Ident::new).collect::<Result<Vec<_>>>()?;
            if perms.is_empty() {
                return Err(Error::Format(format!("class {class} lists no permissions")));
            }
            classes.entry(class).or_default().extend(perms);
        }
        Ok(ClassPermTable { classes })
    }

    pub fn bundled() -> Self {
        Self::parse(bundled(CLASS_PERMS_FILE)).expect("bundled class table parses")
    }

    pub fn load() -> Result<Self> {
        Self::parse(&load(CLASS_PERMS_FILE)?)
    }

    pub fn perms(&self, class: &Ident) -> Option<&BTreeSet<Ident>> {
        self.classes.get(class)
    }

    pub fn insert(&mut self, class: Ident, perms: impl IntoIterator<Item = Ident>) {
        self.classes.entry(class).or_default().extend(perms);
    }

    pub fn classes(&self) -> impl Iterator<Item = (&Ident, &BTreeSet<Ident>)> {
        self.classes.iter()
    }
}
