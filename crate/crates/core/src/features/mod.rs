//! Per-atomic feature vectors for the wide and deep model parts.
//!
//! Wide index space, in order:
//!
//! | block            | size              |
//! |------------------|-------------------|
//! | hashed crosses   | `hash_buckets`    |
//! | subject one-hot  | subjects + 1      |
//! | target one-hot   | targets + 1       |
//! | class one-hot    | classes + 1       |
//! | permission one-hot | permissions + 1 |
//! | flags            | 12 (6 flags × {false, true}) |
//! | uid bucket       | 9                 |
//!
//! Index 0 of each one-hot block is the out-of-vocabulary slot. Crosses are
//! target×class, class×permission, target×class×permission and
//! subject×flags, hashed with 64-bit FNV-1a.

mod io;

pub use io::{read_examples, write_examples, FeatureFileHeader, SEPF_VERSION};

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nlp::DocVectors;
use crate::policy::{AtomicRule, Ident, Op, PolicyDb, Resolver};
use crate::uid::{UidBucket, UidMap};

pub const DEFAULT_HASH_BUCKETS: u32 = 1 << 18;
pub const FLAG_COUNT: usize = 6;
pub const UID_COUNT: usize = 9;
/// Wide indices per example: 4 one-hot fields, 6 flags, 1 uid, 4 crosses.
pub const WIDE_SLOTS: usize = 15;

/// Dense per-field dictionaries built from training atomics. Ids start at 1;
/// 0 is out of vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub fields: [BTreeMap<Ident, u32>; 4],
}

impl Vocabulary {
    pub fn build<'a>(train: impl IntoIterator<Item = &'a AtomicRule>) -> Self {
        let mut names: [std::collections::BTreeSet<&Ident>; 4] = Default::default();
        for a in train {
            for (set, name) in names.iter_mut().zip(a.fields()) {
                set.insert(name);
            }
        }
        let fields = names.map(|set| {
            set.into_iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i as u32 + 1))
                .collect()
        });
        Vocabulary { fields }
    }

    pub fn id(&self, field: usize, name: &Ident) -> u32 {
        self.fields[field].get(name).copied().unwrap_or(0)
    }

    /// Rows per field including the out-of-vocabulary row.
    pub fn rows(&self) -> [usize; 4] {
        std::array::from_fn(|f| self.fields[f].len() + 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlagSet {
    pub domain: bool,
    pub mls: bool,
    pub core: bool,
    pub app: bool,
    pub net: bool,
    pub untrusted: bool,
}

impl FlagSet {
    pub fn to_array(self) -> [bool; FLAG_COUNT] {
        [self.domain, self.mls, self.core, self.app, self.net, self.untrusted]
    }

    pub fn from_array(a: [bool; FLAG_COUNT]) -> Self {
        FlagSet {
            domain: a[0],
            mls: a[1],
            core: a[2],
            app: a[3],
            net: a[4],
            untrusted: a[5],
        }
    }

    pub fn bits(self) -> u8 {
        self.to_array()
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &f)| acc | ((f as u8) << i))
    }

    pub fn from_bits(bits: u8) -> Self {
        Self::from_array(std::array::from_fn(|i| bits & (1 << i) != 0))
    }
}

/// Attribute names that set each flag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSpec {
    pub domain: Ident,
    pub mls: Ident,
    pub core: Ident,
    pub app: Ident,
    pub net: Ident,
    pub untrusted: Vec<Ident>,
}

impl Default for FlagSpec {
    fn default() -> Self {
        let id = |s: &str| Ident::new(s).expect("valid name");
        FlagSpec {
            domain: id("domain"),
            mls: id("mlstrustedsubject"),
            core: id("coredomain"),
            app: id("appdomain"),
            net: id("netdomain"),
            untrusted: ["untrusted_app_all", "untrusted_app", "isolated_app"].map(id).to_vec(),
        }
    }
}

/// Flags of every concrete type of a policy.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlagTable {
    flags: BTreeMap<Ident, FlagSet>,
}

impl FlagTable {
    pub fn from_db(db: &PolicyDb, spec: &FlagSpec) -> Result<Self> {
        let resolver = Resolver::new(db)?;
        let flags = db
            .types
            .iter()
            .map(|t| {
                let is = |attr: &Ident| resolver.belongs(t, attr);
                let set = FlagSet {
                    domain: is(&spec.domain),
                    mls: is(&spec.mls),
                    core: is(&spec.core),
                    app: is(&spec.app),
                    net: is(&spec.net),
                    untrusted: spec.untrusted.iter().any(is),
                };
                (t.clone(), set)
            })
            .collect();
        Ok(FlagTable { flags })
    }

    pub fn get(&self, ty: &Ident) -> FlagSet {
        self.flags.get(ty).copied().unwrap_or_default()
    }
}

/// 64-bit FNV-1a of the parts joined by `\x1f`, reduced mod `buckets`.
pub fn hash_cross(parts: &[&str], buckets: u32) -> u32 {
    let mut h = FnvHasher::default();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.write(b"\x1f");
        }
        h.write(p.as_bytes());
    }
    (h.finish() % buckets as u64) as u32
}

/// Offsets of the wide index blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideLayout {
    pub hash_buckets: u32,
    pub field_offsets: [u32; 4],
    pub flag_offset: u32,
    pub uid_offset: u32,
    pub dim: u32,
}

impl WideLayout {
    pub fn new(hash_buckets: u32, vocab: &Vocabulary) -> Self {
        let mut next = hash_buckets;
        let rows = vocab.rows();
        let field_offsets = std::array::from_fn(|f| {
            let at = next;
            next += rows[f] as u32;
            at
        });
        let flag_offset = next;
        let uid_offset = flag_offset + 2 * FLAG_COUNT as u32;
        WideLayout {
            hash_buckets,
            field_offsets,
            flag_offset,
            uid_offset,
            dim: uid_offset + UID_COUNT as u32,
        }
    }
}

/// The feature view of one atomic rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    /// Active wide indices, each with value 1. A hashed index may repeat.
    pub wide: [u32; WIDE_SLOTS],
    /// Subject, target, class and permission vocabulary ids.
    pub deep_ids: [u32; 4],
    pub flags: FlagSet,
    pub uid: UidBucket,
    pub allow_vec: Arc<[f32]>,
    pub neverallow_vec: Arc<[f32]>,
    /// 1 for allow, 0 for neverallow.
    pub label: u8,
}

impl EncodedExample {
    pub fn target(&self) -> f64 {
        self.label as f64
    }
}

pub fn label_value(label: Op) -> u8 {
    match label {
        Op::Allow => 1,
        Op::Neverallow => 0,
    }
}

/// Everything `encode` needs besides the atomic itself.
#[derive(Clone, Debug)]
pub struct EncoderContext {
    pub vocab: Vocabulary,
    pub layout: WideLayout,
    pub flags: FlagTable,
    pub uids: UidMap,
    pub vectors: DocVectors,
    /// Subject type → TE unit whose comment vectors it takes. Subjects
    /// missing here use their own name.
    pub units: BTreeMap<Ident, Ident>,
    zero: Arc<[f32]>,
    cache: BTreeMap<(Ident, Op), Arc<[f32]>>,
}

impl EncoderContext {
    pub fn new(
        vocab: Vocabulary,
        hash_buckets: u32,
        flags: FlagTable,
        uids: UidMap,
        vectors: DocVectors,
        units: BTreeMap<Ident, Ident>,
    ) -> Self {
        let layout = WideLayout::new(hash_buckets, &vocab);
        let zero: Arc<[f32]> = vec![0.0; vectors.dim].into();
        let cache = vectors.iter().map(|(k, v)| (k.clone(), Arc::from(v))).collect();
        EncoderContext {
            vocab,
            layout,
            flags,
            uids,
            vectors,
            units,
            zero,
            cache,
        }
    }

    pub fn vec_dim(&self) -> usize {
        self.vectors.dim
    }

    fn vector(&self, subject: &Ident, polarity: Op) -> Arc<[f32]> {
        let unit = self.units.get(subject).unwrap_or(subject);
        self.cache
            .get(&(unit.clone(), polarity))
            .cloned()
            .unwrap_or_else(|| self.zero.clone())
    }

    pub fn encode(&self, a: &AtomicRule) -> EncodedExample {
        let l = &self.layout;
        let deep_ids: [u32; 4] = std::array::from_fn(|f| self.vocab.id(f, a.fields()[f]));
        let flags = self.flags.get(&a.subject);
        let uid = self.uids.get(&a.subject).copied().unwrap_or(UidBucket::Unknown);
        let mut wide = [0u32; WIDE_SLOTS];
        for f in 0..4 {
            wide[f] = l.field_offsets[f] + deep_ids[f];
        }
        for (k, on) in flags.to_array().into_iter().enumerate() {
            wide[4 + k] = l.flag_offset + 2 * k as u32 + on as u32;
        }
        wide[10] = l.uid_offset + uid.index() as u32;
        let (t, c, p) = (a.target.as_str(), a.class.as_str(), a.permission.as_str());
        let b = l.hash_buckets;
        wide[11] = hash_cross(&["t_c", t, c], b);
        wide[12] = hash_cross(&["c_p", c, p], b);
        wide[13] = hash_cross(&["t_c_p", t, c, p], b);
        wide[14] = hash_cross(&["s_flags", a.subject.as_str(), &flags.bits().to_string()], b);
        EncodedExample {
            wide,
            deep_ids,
            flags,
            uid,
            allow_vec: self.vector(&a.subject, Op::Allow),
            neverallow_vec: self.vector(&a.subject, Op::Neverallow),
            label: label_value(a.label),
        }
    }

    pub fn encode_all(&self, atomics: &[AtomicRule]) -> Vec<EncodedExample> {
        atomics.par_iter().map(|a| self.encode(a)).collect()
    }
}
