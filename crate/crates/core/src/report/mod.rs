//! Finding categorization and corpus aggregates.

mod debug;
mod stats;

pub use debug::{scan_debug_allows, DebugAllow, TeField};
pub use stats::{read_images, stats, summarize, write_stats_csv, CorpusStats, GroupStats, ImageMeta, ImageStats};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{AccessKey, AtomicRule, Ident, Op, PolicyDb, Resolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CoarseAttribute,
    DebugRule,
    Deprecated,
    UntrustedDomain,
    Uncategorized,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::CoarseAttribute => "coarse_attribute",
            Category::DebugRule => "debug_rule",
            Category::Deprecated => "deprecated",
            Category::UntrustedDomain => "untrusted_domain",
            Category::Uncategorized => "uncategorized",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A customized allow rule predicted neverallow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub atomic: AtomicRule,
    pub probability: f64,
    pub source_image: String,
    pub categories: BTreeSet<Category>,
}

impl Finding {
    pub fn new(atomic: AtomicRule, probability: f64, source_image: impl Into<String>) -> Self {
        Finding {
            atomic,
            probability,
            source_image: source_image.into(),
            categories: BTreeSet::from([Category::Uncategorized]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategorizeConfig {
    /// Resolved set size above which an originating rule counts as coarse.
    pub coarse_threshold: usize,
    /// Subjects always treated as untrusted.
    pub untrusted: BTreeSet<String>,
}

impl Default for CategorizeConfig {
    fn default() -> Self {
        CategorizeConfig {
            coarse_threshold: 20,
            untrusted: ["untrusted_app", "isolated_app"].into_iter().map(String::from).collect(),
        }
    }
}

/// Expanded reference policy of one release.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReferenceVersion {
    pub version: String,
    pub atomics: BTreeSet<AtomicRule>,
}

/// Optional evidence for categorization. Missing inputs leave their
/// category unassigned.
#[derive(Clone, Debug, Default)]
pub struct Evidence<'a> {
    /// The device policy the findings were expanded from.
    pub db: Option<&'a PolicyDb>,
    /// `(file name, text)` of the device TE sources.
    pub te_sources: &'a [(String, String)],
    pub history: &'a [ReferenceVersion],
}

/// Orders versions such as `5.1` and `10` numerically by dotted component.
fn version_key(v: &str) -> Vec<(u64, String)> {
    v.split(['.', '-', '_'])
        .map(|part| {
            let digits: String = part.chars().take_while(|c| c.is_ascii_digit()).collect();
            (digits.parse().unwrap_or(0), part[digits.len()..].to_string())
        })
        .collect()
}

/// Access keys present in some older reference release but absent from
/// the newest one. Releases sharing a version string are merged first.
pub fn deprecated_keys(history: &[ReferenceVersion]) -> BTreeSet<AccessKey> {
    let mut merged: BTreeMap<Vec<(u64, String)>, BTreeSet<AccessKey>> = BTreeMap::new();
    for r in history {
        merged
            .entry(version_key(&r.version))
            .or_default()
            .extend(r.atomics.iter().filter(|a| a.label == Op::Allow).map(AtomicRule::key));
    }
    let Some((_, newest)) = merged.pop_last() else {
        return BTreeSet::new();
    };
    merged.into_values().flatten().filter(|k| !newest.contains(k)).collect()
}

struct CoarseIndex {
    resolver: Resolver,
    /// Coarse allow rules as (subject bits, target bits with self, class, perms).
    rules: Vec<(fixedbitset::FixedBitSet, fixedbitset::FixedBitSet, bool, Ident, BTreeSet<Ident>)>,
}

impl CoarseIndex {
    fn new(db: &PolicyDb, threshold: usize) -> Result<Self> {
        let resolver = Resolver::new(db)?;
        let mut rules = Vec::new();
        for rule in db.rules.iter().filter(|r| r.op == Op::Allow) {
            let subjects = resolver.eval(&rule.subject)?;
            let (with_self, rest) = rule.target.split_self();
            let targets = match rest {
                Some(e) => resolver.eval(&e)?,
                None => fixedbitset::FixedBitSet::with_capacity(resolver.universe().len()),
            };
            if subjects.count_ones(..) > threshold || targets.count_ones(..) > threshold {
                rules.push((subjects, targets, with_self, rule.class.clone(), rule.permissions.clone()));
            }
        }
        Ok(CoarseIndex { resolver, rules })
    }

    fn covers(&self, a: &AtomicRule) -> bool {
        let (Some(s), Some(t)) = (self.resolver.type_index(&a.subject), self.resolver.type_index(&a.target)) else {
            return false;
        };
        self.rules.iter().any(|(subjects, targets, with_self, class, perms)| {
            *class == a.class
                && perms.contains(&a.permission)
                && subjects.contains(s)
                && (targets.contains(t) || (*with_self && s == t))
        })
    }
}

/// Attaches every matching category; findings are never dropped or
/// reordered. `uncategorized` stays only when nothing else matched.
pub fn categorize(findings: &mut [Finding], evidence: &Evidence<'_>, cfg: &CategorizeConfig) -> Result<()> {
    let coarse = evidence
        .db
        .map(|db| CoarseIndex::new(db, cfg.coarse_threshold))
        .transpose()?;
    let resolver = coarse.as_ref().map(|c| &c.resolver);
    let debug: Vec<DebugAllow> = evidence
        .te_sources
        .iter()
        .flat_map(|(name, text)| scan_debug_allows(name, text))
        .collect();
    let deprecated = deprecated_keys(evidence.history);

    for f in findings.iter_mut() {
        let a = &f.atomic;
        let mut cats = BTreeSet::new();
        if coarse.as_ref().is_some_and(|c| c.covers(a)) {
            cats.insert(Category::CoarseAttribute);
        }
        if a.subject.as_str() == "su" || debug.iter().any(|d| d.matches(a, resolver)) {
            cats.insert(Category::DebugRule);
        }
        if deprecated.contains(&a.key()) {
            cats.insert(Category::Deprecated);
        }
        if cfg.untrusted.contains(a.subject.as_str()) {
            cats.insert(Category::UntrustedDomain);
        }
        if cats.is_empty() {
            cats.insert(Category::Uncategorized);
        }
        f.categories = cats;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_findings(findings: &[Finding]) -> Result<String> {
    let mut out = String::new();
    for f in findings {
        out.push_str(&serde_json::to_string(f)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_findings(text: &str) -> Result<Vec<Finding>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Finding = serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            if f.categories.is_empty() {
                return Err(Error::Format(format!("line {}: finding without categories", i + 1)));
            }
            Ok(f)
        })
        .collect()
}
