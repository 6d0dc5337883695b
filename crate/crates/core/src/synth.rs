//! Planted synthetic corpus.
//!
//! Domains fall into four privilege tiers and file types into four
//! sensitivity levels. An access is legal when the subject's tier is at
//! least the target's sensitivity, plus one for write-like permissions.
//! The reference policy forbids every illegal access through neverallow
//! rules over negated tier attributes, and allows a random sample of the
//! legal ones, partly through attribute rules. Tiers are visible to the
//! feature pipeline only through attribute membership, the init or app
//! user each domain runs as, and the wording of its policy comments.
//!
//! Each device image adds vendor domains with a tier's attribute signature,
//! legal vendor accesses, and injected illegal accesses recorded as planted
//! violations.
//!
//! Layout of the output directory:
//!
//! | path                                 | content                                   |
//! |--------------------------------------|-------------------------------------------|
//! | `reference/plat_sepolicy.cil`        | reference policy                          |
//! | `reference/file_contexts`, `init.rc`, `seapp_contexts` | uid sources            |
//! | `reference/comments.conllu`          | parsed policy comments                    |
//! | `images/<name>/vendor_sepolicy.cil`  | vendor additions to the reference         |
//! | `images/<name>/file_contexts`, `init.rc`, `seapp_contexts`, `comments.conllu` | vendor side files |
//! | `images.tsv`                         | `image`, manufacturer, version            |
//! | `truth.jsonl`                        | every customized allow atomic with a `violation` flag |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::atomic::expand;
use crate::parse::{parse_cil, ParseOptions};
use crate::policy::{AccessKey, AtomicRule, Ident, Op};

pub const TIERS: usize = 4;
pub const LEVELS: usize = 4;

const TIER_PREFIX: [&str; TIERS] = ["sandbox", "app", "daemon", "sysd"];
const LEVEL_PREFIX: [&str; LEVELS] = ["pub", "int", "priv", "sec"];
const TIER_USERS: [&[&str]; TIERS] = [&["_isolated"], &["_app"], &["media", "drm", "audioserver", "cameraserver"], &["system", "root"]];

/// Class, read-like permissions, write-like permissions.
const CLASSES: [(&str, [&str; 3], [&str; 3]); 2] = [
    ("file", ["getattr", "open", "read"], ["append", "unlink", "write"]),
    ("dir", ["getattr", "read", "search"], ["add_name", "remove_name", "write"]),
];

/// Comment vocabulary per tier: noun for the domain, actions, modifiers,
/// resources.
struct Words {
    who: &'static str,
    actions: &'static [&'static str],
    modifiers: &'static [&'static str],
    resources: &'static [&'static str],
}

const WORDS: [Words; TIERS] = [
    Words {
        who: "sandbox",
        actions: &["read", "use", "receive"],
        modifiers: &["public", "cache", "temporary"],
        resources: &["data", "file", "information"],
    },
    Words {
        who: "app",
        actions: &["read", "use", "send", "query"],
        modifiers: &["shared", "user", "app"],
        resources: &["data", "storage", "message"],
    },
    Words {
        who: "daemon",
        actions: &["access", "write", "update", "register"],
        modifiers: &["media", "audio", "vendor"],
        resources: &["service", "device", "buffer", "log"],
    },
    Words {
        who: "daemon",
        actions: &["manage", "load", "control", "modify"],
        modifiers: &["kernel", "security", "boot"],
        resources: &["policy", "key", "partition", "firmware"],
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Reference domains per tier, lowest tier first.
    pub domains_per_tier: [usize; TIERS],
    pub types_per_level: usize,
    /// Chance that a legal (subject, target, class) triple gets an allow rule.
    pub allow_rate: f64,
    /// Chance that each legal permission joins a sampled allow rule.
    pub perm_rate: f64,
    pub images: usize,
    pub vendor_domains_per_image: usize,
    pub legal_per_image: usize,
    pub violations_per_image: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            domains_per_tier: [6, 10, 10, 6],
            types_per_level: 8,
            allow_rate: 0.55,
            perm_rate: 0.7,
            images: 6,
            vendor_domains_per_image: 2,
            legal_per_image: 30,
            violations_per_image: 8,
        }
    }
}

/// One customized allow atomic of an image and whether it was planted as a
/// violation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthRecord {
    pub image: String,
    pub subject: Ident,
    pub target: Ident,
    pub class: Ident,
    pub permission: Ident,
    pub violation: bool,
}

impl TruthRecord {
    pub fn rule(&self) -> AtomicRule {
        AtomicRule::new(
            self.subject.clone(),
            self.target.clone(),
            self.class.clone(),
            self.permission.clone(),
            Op::Allow,
        )
    }
}

pub fn read_truth(text: &str) -> Result<Vec<TruthRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthImage {
    pub name: String,
    pub manufacturer: String,
    pub version: String,
    pub vendor_cil: String,
    pub file_contexts: String,
    pub init_rc: String,
    pub seapp_contexts: String,
    pub comments: String,
}

/// A generated corpus held in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthCorpus {
    pub reference_cil: String,
    pub file_contexts: String,
    pub init_rc: String,
    pub seapp_contexts: String,
    pub comments: String,
    pub images: Vec<SynthImage>,
    pub truth: Vec<TruthRecord>,
    /// Tier of every domain, reference and vendor.
    pub tiers: BTreeMap<String, usize>,
    /// Sensitivity level of every file type.
    pub levels: BTreeMap<String, usize>,
}

/// Whether `perm` of `class` is write-like.
pub fn is_write(class: &str, perm: &str) -> bool {
    CLASSES.iter().any(|(c, _, w)| *c == class && w.contains(&perm))
}

/// The planted ground truth.
pub fn is_legal(tier: usize, level: usize, class: &str, perm: &str) -> bool {
    tier >= level + is_write(class, perm) as usize
}

struct Domain {
    name: String,
    tier: usize,
    user: &'static str,
}

fn domain_attributes(tier: usize) -> Vec<&'static str> {
    let mut attrs = vec!["domain"];
    match tier {
        3 => attrs.extend(["coredomain", "mlstrustedsubject"]),
        2 => attrs.push("coredomain"),
        1 => attrs.extend(["appdomain", "netdomain"]),
        _ => attrs.extend(["appdomain", "netdomain", "untrusted_app_all"]),
    }
    attrs.extend((1..=tier).map(tier_attr_index));
    attrs
}

fn tier_attr_index(k: usize) -> &'static str {
    ["tier_ge_0", "tier_ge_1", "tier_ge_2", "tier_ge_3"][k]
}

fn level_attr(k: usize) -> String {
    format!("sens_{k}")
}

fn perm_list(perms: &[&str]) -> String {
    perms.join(" ")
}

/// Declarations and membership statements for one domain.
fn declare_domain(out: &mut String, d: &Domain, exec_dir: &str) -> (String, String) {
    let _ = writeln!(out, "(type {})", d.name);
    for attr in domain_attributes(d.tier) {
        let _ = writeln!(out, "(typeattributeset {attr} ({}))", d.name);
    }
    if d.user.starts_with('_') {
        return (String::new(), String::new());
    }
    let exec = format!("{}_exec", d.name);
    let _ = writeln!(out, "(type {exec})");
    let _ = writeln!(out, "(typetransition init {exec} process {})", d.name);
    let path = format!("/{exec_dir}/bin/{}", d.name);
    let fc = format!("{}    u:object_r:{exec}:s0\n", path.replace('.', "\\."));
    let rc = format!("service {} {path}\n    class main\n    user {}\n\n", d.name, d.user);
    (fc, rc)
}

fn pick(rng: &mut ChaCha8Rng, items: &[&'static str]) -> &'static str {
    items.choose(rng).copied().expect("non-empty word list")
}

/// One CoNLL-U sentence: "[Never] allow <who>s to <action> <modifier> <resource>".
fn sentence(out: &mut String, unit: &str, polarity: Op, who: &str, action: &str, modifier: &str, resource: &str) {
    let never = polarity == Op::Neverallow;
    let plural = format!("{who}s");
    let text = if never {
        format!("Never allow {plural} to {action} {modifier} {resource}")
    } else {
        format!("Allow {plural} to {action} {modifier} {resource}")
    };
    let _ = writeln!(out, "# unit = {unit}");
    let _ = writeln!(out, "# polarity = {}", polarity.as_str());
    let _ = writeln!(out, "# text = {text}");
    let mut rows: Vec<(String, String, &str, usize, &str)> = Vec::new();
    let o = never as usize;
    if never {
        rows.push(("Never".into(), "never".into(), "ADV", 2, "advmod"));
    }
    let allow_form = if never { "allow" } else { "Allow" };
    rows.push((allow_form.into(), "allow".into(), "VERB", 0, "root"));
    rows.push((plural.clone(), who.into(), "NOUN", 1 + o, "obj"));
    rows.push(("to".into(), "to".into(), "PART", 4 + o, "mark"));
    rows.push((action.into(), action.into(), "VERB", 1 + o, "xcomp"));
    rows.push((modifier.into(), modifier.into(), "ADJ", 6 + o, "amod"));
    rows.push((resource.into(), resource.into(), "NOUN", 4 + o, "obj"));
    for (i, (form, lemma, upos, head, rel)) in rows.into_iter().enumerate() {
        let _ = writeln!(out, "{}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{rel}\t_\t_", i + 1);
    }
    out.push('\n');
}

/// Comment sentences for one domain: what its tier does and what the tier
/// above does that it must not.
fn domain_comments(out: &mut String, rng: &mut ChaCha8Rng, d: &Domain) {
    let own = &WORDS[d.tier];
    for _ in 0..rng.gen_range(2..=3) {
        sentence(out, &d.name, Op::Allow, own.who, pick(rng, own.actions), pick(rng, own.modifiers), pick(rng, own.resources));
    }
    let above = &WORDS[(d.tier + 1).min(TIERS - 1)];
    for _ in 0..rng.gen_range(1..=2) {
        let modifier = if d.tier + 1 >= TIERS { "raw" } else { pick(rng, above.modifiers) };
        sentence(out, &d.name, Op::Neverallow, own.who, pick(rng, above.actions), modifier, pick(rng, above.resources));
    }
}

fn seapp_line(d: &Domain) -> String {
    let seinfo = if d.tier == 0 { "untrusted" } else { "platform" };
    format!("user={} seinfo={seinfo} name={} domain={} type=app_data_file levelFrom=user\n", d.user, d.name, d.name)
}

/// Generates the corpus for `cfg`. The same configuration always yields
/// the same corpus.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.types_per_level == 0 || cfg.domains_per_tier.contains(&0) {
        return Err(Error::DegenerateData("every tier and level needs at least one type".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut corpus = SynthCorpus::default();
    let mut cil = String::new();

    cil.push_str("(class process (transition))\n");
    for (class, r, w) in CLASSES {
        let mut perms: Vec<&str> = r.iter().chain(w.iter()).copied().collect();
        perms.sort_unstable();
        perms.dedup();
        let _ = writeln!(cil, "(class {class} ({}))", perm_list(&perms));
    }
    for attr in ["domain", "coredomain", "mlstrustedsubject", "appdomain", "netdomain", "untrusted_app_all"] {
        let _ = writeln!(cil, "(typeattribute {attr})");
    }
    for k in 1..TIERS {
        let _ = writeln!(cil, "(typeattribute {})", tier_attr_index(k));
    }
    for k in 0..LEVELS {
        let _ = writeln!(cil, "(typeattribute {})", level_attr(k));
    }
    cil.push_str("(type init)\n");

    let mut domains = Vec::new();
    for (tier, &n) in cfg.domains_per_tier.iter().enumerate() {
        for i in 0..n {
            let user = TIER_USERS[tier][i % TIER_USERS[tier].len()];
            domains.push(Domain {
                name: format!("{}_{i}", TIER_PREFIX[tier]),
                tier,
                user,
            });
        }
    }
    for d in &domains {
        let (fc, rc) = declare_domain(&mut cil, d, "system");
        corpus.file_contexts.push_str(&fc);
        corpus.init_rc.push_str(&rc);
        if d.user.starts_with('_') {
            corpus.seapp_contexts.push_str(&seapp_line(d));
        }
        corpus.tiers.insert(d.name.clone(), d.tier);
        domain_comments(&mut corpus.comments, &mut rng, d);
    }
    let mut targets = Vec::new();
    for level in 0..LEVELS {
        for i in 0..cfg.types_per_level {
            let name = format!("{}_{i}_file", LEVEL_PREFIX[level]);
            let _ = writeln!(cil, "(type {name})");
            let _ = writeln!(cil, "(typeattributeset {} ({name}))", level_attr(level));
            corpus.levels.insert(name.clone(), level);
            targets.push((name, level));
        }
    }

    // Attribute-level allows: each tier reads its own level.
    for k in 1..TIERS {
        for (class, r, _) in CLASSES {
            let _ = writeln!(
                cil,
                "(allow {} {} ({class} ({})))",
                tier_attr_index(k),
                level_attr(k),
                perm_list(&r)
            );
        }
    }
    // Sampled concrete allows.
    for d in &domains {
        for (t, level) in &targets {
            for (class, r, w) in CLASSES {
                if !rng.gen_bool(cfg.allow_rate) {
                    continue;
                }
                let perms: Vec<&str> = r
                    .iter()
                    .chain(w.iter())
                    .copied()
                    .filter(|p| is_legal(d.tier, *level, class, p))
                    .filter(|_| rng.gen_bool(cfg.perm_rate))
                    .collect();
                if !perms.is_empty() {
                    let _ = writeln!(cil, "(allow {} {t} ({class} ({})))", d.name, perm_list(&perms));
                }
            }
        }
    }
    // Neverallows: read-like at level k needs tier >= k, write-like needs
    // tier >= k + 1.
    let mut base = 0;
    let mut forbid = |cil: &mut String, need: usize, level: usize, class: &str, perms: &[&str]| {
        let subject = if need >= TIERS {
            "domain".to_string()
        } else {
            base += 1;
            let name = format!("base_typeattr_{base}");
            let _ = writeln!(cil, "(typeattribute {name})");
            let _ = writeln!(cil, "(typeattributeset {name} (and (domain) (not ({}))))", tier_attr_index(need));
            name
        };
        let _ = writeln!(cil, "(neverallow {subject} {} ({class} ({})))", level_attr(level), perm_list(perms));
    };
    for level in 0..LEVELS {
        for (class, r, w) in CLASSES {
            if level >= 1 {
                forbid(&mut cil, level, level, class, &r);
            }
            forbid(&mut cil, level + 1, level, class, &w);
        }
    }
    let reference_db = parse_cil(&cil, &ParseOptions::default().with_source("reference"))?;
    let reference_keys: BTreeSet<AccessKey> = expand(&reference_db)?
        .into_iter()
        .filter(|a| a.label == Op::Allow)
        .map(|a| a.key())
        .collect();
    let reference_allows: BTreeSet<(&str, &str, &str, &str)> = reference_keys
        .iter()
        .map(|(s, t, c, p)| (s.as_str(), t.as_str(), c.as_str(), p.as_str()))
        .collect();
    corpus.reference_cil = cil;

    // Device images.
    let makers = ["acme", "bolt", "crest"];
    let versions = ["9", "10"];
    let mut seen_names = BTreeSet::new();
    for img in 0..cfg.images {
        let manufacturer = makers[img % makers.len()].to_string();
        let version = versions[(img / makers.len()) % versions.len()].to_string();
        let name = format!("{manufacturer}-{version}-{img}");
        let mut image = SynthImage {
            name: name.clone(),
            manufacturer,
            version,
            ..SynthImage::default()
        };
        let mut vendor = Vec::new();
        for j in 0..cfg.vendor_domains_per_image {
            let tier = rng.gen_range(0..TIERS);
            let dname = format!("vnd{img}_{}_{j}", TIER_PREFIX[tier]);
            let user = TIER_USERS[tier][j % TIER_USERS[tier].len()];
            vendor.push(Domain { name: dname, tier, user });
        }
        let mut vcil = String::new();
        for d in &vendor {
            let (fc, rc) = declare_domain(&mut vcil, d, "vendor");
            image.file_contexts.push_str(&fc);
            image.init_rc.push_str(&rc);
            if d.user.starts_with('_') {
                image.seapp_contexts.push_str(&seapp_line(d));
            }
            corpus.tiers.insert(d.name.clone(), d.tier);
            domain_comments(&mut image.comments, &mut rng, d);
        }

        let mut legal: BTreeSet<(String, String, &str, &str)> = BTreeSet::new();
        let mut illegal: BTreeSet<(String, String, &str, &str)> = BTreeSet::new();
        let mut attempts = 0;
        while (legal.len() < cfg.legal_per_image || illegal.len() < cfg.violations_per_image) && attempts < 100_000 {
            attempts += 1;
            // Half of the accesses come from vendor domains.
            let d = if !vendor.is_empty() && rng.gen_bool(0.5) {
                &vendor[rng.gen_range(0..vendor.len())]
            } else {
                &domains[rng.gen_range(0..domains.len())]
            };
            let (t, level) = &targets[rng.gen_range(0..targets.len())];
            let (class, r, w) = CLASSES[rng.gen_range(0..CLASSES.len())];
            let perm = if rng.gen_bool(0.5) { pick(&mut rng, &r) } else { pick(&mut rng, &w) };
            let key = (d.name.clone(), t.clone(), class, perm);
            if reference_allows.contains(&(d.name.as_str(), t.as_str(), class, perm)) {
                continue;
            }
            if is_legal(d.tier, *level, class, perm) {
                if legal.len() < cfg.legal_per_image {
                    legal.insert(key);
                }
            } else if illegal.len() < cfg.violations_per_image {
                illegal.insert(key);
            }
        }
        for (s, t, class, perm) in legal.iter().chain(illegal.iter()) {
            let _ = writeln!(vcil, "(allow {s} {t} ({class} ({perm})))");
        }
        image.vendor_cil = vcil;
        debug_assert!(illegal.iter().all(|(s, t, c, p)| !is_legal(corpus.tiers[s], corpus.levels[t], c, p)));
        // Vendor attribute memberships customize more than the written rules,
        // so the truth comes from the expanded device policy.
        let device_db = parse_cil(
            &format!("{}\n{}", corpus.reference_cil, image.vendor_cil),
            &ParseOptions::default().with_source(name.as_str()),
        )?;
        let device = expand(&device_db)?;
        for a in device.iter().filter(|a| a.label == Op::Allow && !reference_keys.contains(&a.key())) {
            let tier = corpus.tiers[a.subject.as_str()];
            let level = corpus.levels[a.target.as_str()];
            corpus.truth.push(TruthRecord {
                image: name.clone(),
                subject: a.subject.clone(),
                target: a.target.clone(),
                class: a.class.clone(),
                permission: a.permission.clone(),
                violation: !is_legal(tier, level, a.class.as_str(), a.permission.as_str()),
            });
        }
        if !seen_names.insert(name) {
            return Err(Error::DegenerateData("duplicate image name".into()));
        }
        corpus.images.push(image);
    }
    corpus.truth.sort();
    Ok(corpus)
}

impl SynthCorpus {
    /// Relative path and content of every output file.
    pub fn files(&self) -> Result<Vec<(PathBuf, String)>> {
        let mut out = vec![
            (PathBuf::from("reference/plat_sepolicy.cil"), self.reference_cil.clone()),
            (PathBuf::from("reference/file_contexts"), self.file_contexts.clone()),
            (PathBuf::from("reference/init.rc"), self.init_rc.clone()),
            (PathBuf::from("reference/seapp_contexts"), self.seapp_contexts.clone()),
            (PathBuf::from("reference/comments.conllu"), self.comments.clone()),
        ];
        let mut tsv = String::from("# image\tmanufacturer\tversion\n");
        for img in &self.images {
            let dir = PathBuf::from("images").join(&img.name);
            out.push((dir.join("vendor_sepolicy.cil"), img.vendor_cil.clone()));
            out.push((dir.join("file_contexts"), img.file_contexts.clone()));
            out.push((dir.join("init.rc"), img.init_rc.clone()));
            out.push((dir.join("seapp_contexts"), img.seapp_contexts.clone()));
            out.push((dir.join("comments.conllu"), img.comments.clone()));
            let _ = writeln!(tsv, "{}\t{}\t{}", img.name, img.manufacturer, img.version);
        }
        out.push((PathBuf::from("images.tsv"), tsv));
        let mut truth = String::new();
        for t in &self.truth {
            truth.push_str(&serde_json::to_string(t)?);
            truth.push('\n');
        }
        out.push((PathBuf::from("truth.jsonl"), truth));
        Ok(out)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (rel, content) in self.files()? {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, content)?;
        }
        Ok(())
    }

    /// Planted violations as allow atomics.
    pub fn violations(&self) -> BTreeSet<AtomicRule> {
        self.truth.iter().filter(|t| t.violation).map(TruthRecord::rule).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{augment_from_negations, customized, expand};
    use crate::nlp::{parse_conllu, triplet_docs, Corpus};
    use crate::parse::{parse_cil, parse_file_contexts, parse_rc, parse_seapp, ParseOptions};
    use crate::uid::{infer_users, AidTable, UidBucket};

    fn small() -> SynthConfig {
        SynthConfig {
            domains_per_tier: [2, 2, 2, 2],
            types_per_level: 2,
            images: 2,
            legal_per_image: 6,
            violations_per_image: 3,
            ..SynthConfig::default()
        }
    }

    fn labels_follow_planted_rule(cil: &str, corpus: &SynthCorpus) {
        let db = parse_cil(cil, &ParseOptions::default()).unwrap();
        for a in expand(&db).unwrap() {
            let Some(&tier) = corpus.tiers.get(a.subject.as_str()) else { continue };
            let level = corpus.levels[a.target.as_str()];
            let legal = is_legal(tier, level, a.class.as_str(), a.permission.as_str());
            assert_eq!(legal, a.label == Op::Allow, "{a:?}");
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn reference_labels_match_ground_truth() {
        let c = generate(&small()).unwrap();
        labels_follow_planted_rule(&c.reference_cil, &c);
    }

    #[test]
    fn neverallows_cover_every_illegal_access() {
        let c = generate(&small()).unwrap();
        let db = parse_cil(&c.reference_cil, &ParseOptions::default()).unwrap();
        let never: BTreeSet<_> = expand(&db)
            .unwrap()
            .into_iter()
            .filter(|a| a.label == Op::Neverallow)
            .map(|a| a.key())
            .collect();
        let mut illegal = 0;
        for (s, &tier) in &c.tiers {
            if s.starts_with("vnd") {
                continue;
            }
            for (t, &level) in &c.levels {
                for (class, r, w) in CLASSES {
                    for p in r.iter().chain(w.iter()) {
                        if !is_legal(tier, level, class, p) {
                            illegal += 1;
                            let key = (Ident::new(s).unwrap(), Ident::new(t).unwrap(), Ident::new(class).unwrap(), Ident::new(p).unwrap());
                            assert!(never.contains(&key));
                        }
                    }
                }
            }
        }
        assert_eq!(never.len(), illegal);
    }

    #[test]
    fn augmentation_only_adds_legal_accesses() {
        let c = generate(&small()).unwrap();
        let db = parse_cil(&c.reference_cil, &ParseOptions::default()).unwrap();
        let aug = augment_from_negations(&db, usize::MAX).unwrap();
        assert!(!aug.atomics.is_empty());
        assert_eq!(aug.dropped_contradictions, 0);
        for a in aug.atomics {
            let tier = c.tiers[a.subject.as_str()];
            assert!(is_legal(tier, c.levels[a.target.as_str()], a.class.as_str(), a.permission.as_str()));
        }
    }

    #[test]
    fn device_customizations_match_truth() {
        let c = generate(&small()).unwrap();
        let reference = expand(&parse_cil(&c.reference_cil, &ParseOptions::default()).unwrap()).unwrap();
        for img in &c.images {
            let text = format!("{}\n{}", c.reference_cil, img.vendor_cil);
            let device = expand(&parse_cil(&text, &ParseOptions::default()).unwrap()).unwrap();
            let custom = customized(&device, &reference);
            let expected: BTreeSet<AtomicRule> = c
                .truth
                .iter()
                .filter(|t| t.image == img.name)
                .map(TruthRecord::rule)
                .collect();
            assert_eq!(custom, expected);
        }
        let violations = c.violations();
        assert_eq!(violations.len(), c.truth.iter().filter(|t| t.violation).count());
        for v in &violations {
            let tier = c.tiers[v.subject.as_str()];
            assert!(!is_legal(tier, c.levels[v.target.as_str()], v.class.as_str(), v.permission.as_str()));
        }
    }

    #[test]
    fn uid_sources_resolve_tiers() {
        let c = generate(&small()).unwrap();
        let db = parse_cil(&c.reference_cil, &ParseOptions::default()).unwrap();
        let fc = parse_file_contexts(&c.file_contexts);
        let rc = parse_rc(&c.init_rc);
        let seapp = parse_seapp(&c.seapp_contexts);
        let out = infer_users(&db, &fc.entries, &rc.entries, &seapp.entries, &AidTable::bundled());
        assert_eq!(out.map[&Ident::new("sandbox_0").unwrap()], UidBucket::Isolated);
        assert_eq!(out.map[&Ident::new("app_1").unwrap()], UidBucket::App);
        assert_eq!(out.map[&Ident::new("daemon_0").unwrap()], UidBucket::Media);
        assert_eq!(out.map[&Ident::new("sysd_0").unwrap()], UidBucket::System);
        assert_eq!(out.map[&Ident::new("sysd_1").unwrap()], UidBucket::Root);
    }

    #[test]
    fn comments_parse_into_tier_triplets() {
        let c = generate(&small()).unwrap();
        let sentences = parse_conllu(&c.comments).unwrap();
        let docs = triplet_docs(&sentences, &Corpus::bundled()).unwrap();
        assert_eq!(docs.len(), 2 * c.tiers.keys().filter(|k| !k.starts_with("vnd")).count());
        assert!(docs.iter().all(|d| !d.triplets.is_empty()));
        let files = c.files().unwrap();
        assert!(files.iter().any(|(p, _)| p.ends_with("truth.jsonl")));
        let truth = &files.last().unwrap().1;
        assert_eq!(read_truth(truth).unwrap(), c.truth);
    }

    #[test]
    fn write_to_creates_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&small()).unwrap();
        c.write_to(dir.path()).unwrap();
        assert!(dir.path().join("reference/plat_sepolicy.cil").is_file());
        assert!(dir.path().join("images").join(&c.images[0].name).join("vendor_sepolicy.cil").is_file());
    }
}
