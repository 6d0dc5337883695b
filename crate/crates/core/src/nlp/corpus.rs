//! Action and resource lemma lists.

use std::collections::BTreeSet;
use std::path::Path;

use crate::data::{self, content_lines, ACTIONS_FILE, RESOURCES_FILE, SYNONYMS_FILE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub actions: BTreeSet<String>,
    pub resources: BTreeSet<String>,
}

fn lemmas(text: &str) -> BTreeSet<String> {
    content_lines(text).flat_map(str::split_whitespace).map(str::to_lowercase).collect()
}

impl Corpus {
    /// One lemma per line in `actions` and `resources`. Every word of the
    /// synonym list (`head syn syn ...` per line) joins the action set.
    pub fn parse(actions: &str, resources: &str, synonyms: &str) -> Result<Self> {
        let mut actions = lemmas(actions);
        actions.extend(lemmas(synonyms));
        let resources = lemmas(resources);
        if actions.is_empty() || resources.is_empty() {
            return Err(Error::Format("action and resource corpora must both be non-empty".into()));
        }
        Ok(Corpus { actions, resources })
    }

    pub fn bundled() -> Self {
        Self::parse(
            data::bundled(ACTIONS_FILE),
            data::bundled(RESOURCES_FILE),
            data::bundled(SYNONYMS_FILE),
        )
        .expect("bundled corpus parses")
    }

    /// Bundled lists, or their overrides under `SEPAL_DATA_DIR`.
    pub fn load() -> Result<Self> {
        Self::parse(
            &data::load(ACTIONS_FILE)?,
            &data::load(RESOURCES_FILE)?,
            &data::load(SYNONYMS_FILE)?,
        )
    }

    /// `actions.txt`, `resources.txt` and optional `synonyms.txt` in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        let synonyms = match read("synonyms.txt") {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        Self::parse(&read("actions.txt")?, &read("resources.txt")?, &synonyms)
    }

    pub fn is_action(&self, lemma: &str) -> bool {
        self.actions.contains(lemma)
    }

    pub fn is_resource(&self, lemma: &str) -> bool {
        self.resources.contains(lemma)
    }
}
