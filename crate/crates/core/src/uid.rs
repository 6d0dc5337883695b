//! Static inference of the Linux user each process domain runs as.
//!
//! App domains take their user class from `seapp_contexts`. Daemon domains
//! follow the chain `typetransition init X_exec:process D` → file_contexts
//! paths labeled `X_exec` → init services launching that path → the
//! service's `user`, bucketed through the AID table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{self, content_lines, AID_MAP_FILE};
use crate::error::{Error, Result};
use crate::parse::{FileContextEntry, RcServiceEntry, SeappEntry};
use crate::policy::{Ident, PolicyDb};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UidBucket {
    Root,
    System,
    Shell,
    Radio,
    Media,
    OtherDaemon,
    App,
    Isolated,
    Unknown,
}

impl UidBucket {
    pub const ALL: [UidBucket; 9] = [
        UidBucket::Root,
        UidBucket::System,
        UidBucket::Shell,
        UidBucket::Radio,
        UidBucket::Media,
        UidBucket::OtherDaemon,
        UidBucket::App,
        UidBucket::Isolated,
        UidBucket::Unknown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Privilege tier: root > system > shell, radio, media, other daemons >
    /// app > isolated > unknown.
    pub fn privilege(self) -> u8 {
        match self {
            UidBucket::Root => 5,
            UidBucket::System => 4,
            UidBucket::Shell | UidBucket::Radio | UidBucket::Media | UidBucket::OtherDaemon => 3,
            UidBucket::App => 2,
            UidBucket::Isolated => 1,
            UidBucket::Unknown => 0,
        }
    }

    /// The more privileged of two buckets; within a tier, the earlier one.
    pub fn higher(self, other: Self) -> Self {
        if (other.privilege(), std::cmp::Reverse(other)) > (self.privilege(), std::cmp::Reverse(self)) {
            other
        } else {
            self
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UidBucket::Root => "root",
            UidBucket::System => "system",
            UidBucket::Shell => "shell",
            UidBucket::Radio => "radio",
            UidBucket::Media => "media",
            UidBucket::OtherDaemon => "other_daemon",
            UidBucket::App => "app",
            UidBucket::Isolated => "isolated",
            UidBucket::Unknown => "unknown",
        }
    }
}

impl fmt::Display for UidBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UidBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown uid bucket {s:?}")))
    }
}

/// Android user name to bucket. Named users absent from the table are
/// other daemons.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AidTable {
    users: HashMap<String, UidBucket>,
}

impl AidTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut users = HashMap::new();
        for line in content_lines(text) {
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (Some(user), Some(bucket), None) => {
                    users.insert(user.to_string(), bucket.parse()?);
                }
                _ => return Err(Error::Format(format!("bad AID table line {line:?}"))),
            }
        }
        Ok(AidTable { users })
    }

    pub fn bundled() -> Self {
        Self::parse(data::bundled(AID_MAP_FILE)).expect("bundled AID table parses")
    }

    pub fn load() -> Result<Self> {
        Self::parse(&data::load(AID_MAP_FILE)?)
    }

    pub fn bucket(&self, user: &str) -> UidBucket {
        self.users.get(user).copied().unwrap_or(UidBucket::OtherDaemon)
    }
}

/// Domain → bucket for every transition-result and seapp domain.
pub type UidMap = BTreeMap<Ident, UidBucket>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UidInference {
    pub map: UidMap,
    pub warnings: Vec<String>,
}

impl UidInference {
    pub fn unknown_count(&self) -> usize {
        self.map.values().filter(|b| **b == UidBucket::Unknown).count()
    }
}

fn seapp_bucket(user: &str, aid: &AidTable) -> UidBucket {
    match user {
        "_app" => UidBucket::App,
        "_isolated" => UidBucket::Isolated,
        "" => UidBucket::Unknown,
        other => aid.bucket(other),
    }
}

/// Drops regex escapes from a file_contexts pattern so literal executable
/// paths compare equal.
fn unescape_path(pattern: &str) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(next);
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn infer_users(
    db: &PolicyDb,
    fc: &[FileContextEntry],
    rc: &[RcServiceEntry],
    seapp: &[SeappEntry],
    aid: &AidTable,
) -> UidInference {
    let mut paths_by_type: HashMap<&str, BTreeSet<String>> = HashMap::new();
    for entry in fc {
        paths_by_type
            .entry(entry.label_type.as_str())
            .or_default()
            .insert(unescape_path(&entry.path_pattern));
    }
    let mut users_by_path: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for service in rc {
        users_by_path
            .entry(service.executable_path.as_str())
            .or_default()
            .insert(service.user.as_str());
    }

    // Candidate buckets per domain, deduplicated and ordered.
    let mut candidates: BTreeMap<Ident, BTreeSet<UidBucket>> = BTreeMap::new();
    for tr in &db.transitions {
        if tr.source.as_str() != "init" || tr.class.as_str() != "process" {
            continue;
        }
        let slot = candidates.entry(tr.result.clone()).or_default();
        for path in paths_by_type.get(tr.exec_type.as_str()).into_iter().flatten() {
            for user in users_by_path.get(path.as_str()).into_iter().flatten() {
                slot.insert(aid.bucket(user));
            }
        }
    }
    for tr in &db.transitions {
        candidates.entry(tr.result.clone()).or_default();
    }
    for entry in seapp {
        let slot = candidates.entry(entry.domain.clone()).or_default();
        let bucket = seapp_bucket(&entry.assigned_user_class, aid);
        if bucket != UidBucket::Unknown {
            slot.insert(bucket);
        }
    }

    let mut out = UidInference::default();
    for (domain, buckets) in candidates {
        let bucket = buckets.iter().copied().reduce(UidBucket::higher).unwrap_or(UidBucket::Unknown);
        if buckets.len() > 1 {
            let all: Vec<&str> = buckets.iter().map(|b| b.as_str()).collect();
            let msg = format!("domain {domain} runs as several users ({}); using {bucket}", all.join(", "));
            warn!("{msg}");
            out.warnings.push(msg);
        }
        out.map.insert(domain, bucket);
    }
    out
}

/// `domain<TAB>bucket` lines in domain order.
pub fn write_uid_map(map: &UidMap) -> String {
    map.iter().map(|(d, b)| format!("{d}\t{b}\n")).collect()
}

/// Reads `domain<TAB>bucket` lines. A domain listed more than once gets
/// the most privileged of its buckets, so maps can be concatenated.
pub fn read_uid_map(text: &str) -> Result<UidMap> {
    let mut map = UidMap::new();
    for line in content_lines(text) {
        let Some((domain, bucket)) = line.split_once('\t') else {
            return Err(Error::Format(format!("bad uid map line {line:?}")));
        };
        let bucket: UidBucket = bucket.trim().parse()?;
        map.entry(Ident::new(domain.trim())?)
            .and_modify(|b| *b = b.higher(bucket))
            .or_insert(bucket);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_file_contexts, parse_flat, parse_rc, parse_seapp, ParseOptions};

    fn id(s: &str) -> Ident {
        Ident::new(s).unwrap()
    }

    fn infer(policy: &str, fc: &str, rc: &str, seapp: &str) -> UidInference {
        let db = parse_flat(policy, &ParseOptions::default()).unwrap();
        infer_users(
            &db,
            &parse_file_contexts(fc).entries,
            &parse_rc(rc).entries,
            &parse_seapp(seapp).entries,
            &AidTable::bundled(),
        )
    }

    #[test]
    fn mediadrmserver_chain() {
        let out = infer(
            "type init; type mediadrmserver; type mediadrmserver_exec;\n\
             type_transition init mediadrmserver_exec:process mediadrmserver;",
            "/system/bin/mediadrmserver    u:object_r:mediadrmserver_exec:s0\n",
            "service mediadrm /system/bin/mediadrmserver\n    class main\n    user media\n    group mediadrm drmrpc\n",
            "",
        );
        assert_eq!(out.map, UidMap::from([(id("mediadrmserver"), UidBucket::Media)]));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn escaped_paths_match() {
        let out = infer(
            "type init; type d; type d_exec; type_transition init d_exec:process d;",
            "/vendor/bin/hw/android\\.hardware\\.foo@1\\.0-service u:object_r:d_exec:s0",
            "service foo /vendor/bin/hw/android.hardware.foo@1.0-service\n    user system",
            "",
        );
        assert_eq!(out.map[&id("d")], UidBucket::System);
    }

    #[test]
    fn seapp_domains() {
        let out = infer(
            "type untrusted_app; type isolated_app; type platform_app;",
            "",
            "",
            "user=_app domain=untrusted_app\nuser=_isolated domain=isolated_app\nuser=system seinfo=platform domain=platform_app",
        );
        assert_eq!(out.map[&id("untrusted_app")], UidBucket::App);
        assert_eq!(out.map[&id("isolated_app")], UidBucket::Isolated);
        assert_eq!(out.map[&id("platform_app")], UidBucket::System);
    }

    #[test]
    fn unmapped_and_unlisted_domains() {
        let out = infer(
            "type init; type a; type a_exec; type b; type b_exec; type lonely;\n\
             type_transition init a_exec:process a;\ntype_transition init b_exec:process b;",
            "/system/bin/a u:object_r:a_exec:s0",
            "service a /system/bin/a\n    user gps",
            "",
        );
        assert_eq!(out.map[&id("a")], UidBucket::OtherDaemon);
        assert_eq!(out.map[&id("b")], UidBucket::Unknown);
        assert!(!out.map.contains_key(&id("lonely")));
        assert_eq!(out.map.len(), 2);
        assert_eq!(out.unknown_count(), 1);
    }

    #[test]
    fn ambiguity_takes_higher_bucket() {
        let out = infer(
            "type init; type d; type d_exec; type_transition init d_exec:process d;",
            "/system/bin/d1 u:object_r:d_exec:s0\n/system/bin/d2 u:object_r:d_exec:s0",
            "service one /system/bin/d1\n    user media\nservice two /system/bin/d2\n    user system",
            "",
        );
        assert_eq!(out.map[&id("d")], UidBucket::System);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn non_init_transitions_do_not_chain() {
        let out = infer(
            "type zygote; type d; type d_exec; type_transition zygote d_exec:process d;",
            "/system/bin/d u:object_r:d_exec:s0",
            "service d /system/bin/d\n    user root",
            "",
        );
        assert_eq!(out.map[&id("d")], UidBucket::Unknown);
    }

    #[test]
    fn bucket_order() {
        assert_eq!(UidBucket::Media.higher(UidBucket::Root), UidBucket::Root);
        assert_eq!(UidBucket::Media.higher(UidBucket::Shell), UidBucket::Shell);
        assert_eq!(UidBucket::App.higher(UidBucket::Isolated), UidBucket::App);
        for b in UidBucket::ALL {
            assert_eq!(b.as_str().parse::<UidBucket>().unwrap(), b);
            assert_eq!(UidBucket::from_index(b.index()), Some(b));
        }
    }

    #[test]
    fn map_round_trip() {
        let map = UidMap::from([(id("a"), UidBucket::Media), (id("b"), UidBucket::Unknown)]);
        assert_eq!(read_uid_map(&write_uid_map(&map)).unwrap(), map);
    }

    #[test]
    fn concatenated_maps_keep_the_most_privileged_bucket() {
        let map = read_uid_map("d\tunknown\nd\tmedia\ne\tapp\ne\tunknown\nf\tshell\nf\tmedia\n").unwrap();
        assert_eq!(map[&id("d")], UidBucket::Media);
        assert_eq!(map[&id("e")], UidBucket::App);
        assert_eq!(map[&id("f")], UidBucket::Shell);
    }
}
