//! Per-image and per-group counts of customized and flagged rules.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{version_key, Finding};
use crate::atomic::AtomicRecord;
use crate::error::{Error, Result};
use crate::policy::Op;

/// Sidecar metadata of one firmware image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image: String,
    pub manufacturer: String,
    pub version: String,
}

/// Reads `image<TAB>manufacturer<TAB>version` lines; `#` starts a comment.
pub fn read_images(text: &str) -> Result<Vec<ImageMeta>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [image, manufacturer, version] = cols[..] else {
            return Err(Error::Format(format!("line {}: expected 3 tab-separated columns", i + 1)));
        };
        out.push(ImageMeta {
            image: image.trim().to_string(),
            manufacturer: manufacturer.trim().to_string(),
            version: version.trim().to_string(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub meta: ImageMeta,
    pub customized: usize,
    pub flagged: usize,
}

impl ImageStats {
    pub fn pct_flagged(&self) -> f64 {
        pct(self.flagged, self.customized)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// `version/manufacturer`, or `all` for the whole corpus.
    pub group: String,
    pub images: usize,
    pub avg_customized: f64,
    pub avg_flagged: f64,
    /// Flagged share of all customized rules in the group, in percent.
    pub pct_flagged: f64,
    /// Set when the group has no customized rules; `pct_flagged` is 0.
    pub empty: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub images: Vec<ImageStats>,
    pub groups: Vec<GroupStats>,
}

fn pct(flagged: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * flagged as f64 / total as f64
    }
}

/// Counts customized allow atomics and findings per image. Images seen only
/// in the records get `unknown` metadata.
pub fn summarize(images: &[ImageMeta], customized: &[AtomicRecord], findings: &[Finding]) -> Vec<ImageStats> {
    let mut by_image: BTreeMap<&str, ImageStats> = images
        .iter()
        .map(|m| {
            (
                m.image.as_str(),
                ImageStats {
                    meta: m.clone(),
                    customized: 0,
                    flagged: 0,
                },
            )
        })
        .collect();
    let unknown = |image: &str| ImageStats {
        meta: ImageMeta {
            image: image.to_string(),
            manufacturer: "unknown".into(),
            version: "unknown".into(),
        },
        customized: 0,
        flagged: 0,
    };
    for r in customized.iter().filter(|r| r.label == Op::Allow) {
        by_image.entry(&r.source).or_insert_with(|| unknown(&r.source)).customized += 1;
    }
    for f in findings {
        by_image
            .entry(&f.source_image)
            .or_insert_with(|| unknown(&f.source_image))
            .flagged += 1;
    }
    by_image.into_values().collect()
}

fn group_stats(group: String, members: &[&ImageStats]) -> GroupStats {
    let customized: usize = members.iter().map(|s| s.customized).sum();
    let flagged: usize = members.iter().map(|s| s.flagged).sum();
    let n = members.len().max(1) as f64;
    if customized == 0 {
        warn!("group {group} has no customized rules");
    }
    GroupStats {
        group,
        images: members.len(),
        avg_customized: customized as f64 / n,
        avg_flagged: flagged as f64 / n,
        pct_flagged: pct(flagged, customized),
        empty: customized == 0,
    }
}

/// Sort key of a (version, manufacturer) group: parsed version, raw
/// version, manufacturer.
type GroupKey = (Vec<(u64, String)>, String, String);

/// Groups by (version, manufacturer) in version order, then one `all` row.
pub fn stats(images: Vec<ImageStats>) -> CorpusStats {
    let mut groups: BTreeMap<GroupKey, Vec<&ImageStats>> = BTreeMap::new();
    for s in &images {
        groups
            .entry((version_key(&s.meta.version), s.meta.version.clone(), s.meta.manufacturer.clone()))
            .or_default()
            .push(s);
    }
    let mut rows: Vec<GroupStats> = groups
        .into_iter()
        .map(|((_, version, manufacturer), members)| group_stats(format!("{version}/{manufacturer}"), &members))
        .collect();
    let all: Vec<&ImageStats> = images.iter().collect();
    rows.push(group_stats("all".into(), &all));
    CorpusStats { images, groups: rows }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    group: &'a str,
    images: usize,
    avg_customized: String,
    avg_flagged: String,
    pct_flagged: String,
}

/// `group,images,avg_customized,avg_flagged,pct_flagged` with two decimals.
pub fn write_stats_csv(stats: &CorpusStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for g in &stats.groups {
        w.serialize(CsvRow {
            group: &g.group,
            images: g.images,
            avg_customized: format!("{:.2}", g.avg_customized),
            avg_flagged: format!("{:.2}", g.avg_flagged),
            pct_flagged: format!("{:.2}", g.pct_flagged),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
