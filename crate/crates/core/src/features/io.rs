//! `SEPF` binary feature files. All integers and floats are little-endian.
//!
//! Header (26 bytes):
//!
//! | offset | type    | field          |
//! |--------|---------|----------------|
//! | 0      | [u8; 4] | magic `SEPF`   |
//! | 4      | u16     | version (1)    |
//! | 6      | u32     | hash_buckets   |
//! | 10     | u32     | wide_dim       |
//! | 14     | u32     | vec_dim        |
//! | 18     | u64     | record count   |
//!
//! Each record (`80 + 8 * vec_dim` bytes):
//!
//! | type          | field                                  |
//! |---------------|----------------------------------------|
//! | u8            | label (1 allow, 0 neverallow)          |
//! | u8            | uid bucket index                       |
//! | u8            | flag bits (domain, mls, core, app, net, untrusted from bit 0) |
//! | u8            | reserved, 0                            |
//! | [u32; 4]      | deep ids: subject, target, class, permission |
//! | [u32; 15]     | wide indices                           |
//! | [f32; vec_dim]| allow comment vector                   |
//! | [f32; vec_dim]| neverallow comment vector              |

use std::io::{Read, Write};
use std::sync::Arc;

use super::{EncodedExample, FlagSet, WIDE_SLOTS};
use crate::error::{Error, Result};
use crate::uid::UidBucket;

pub const SEPF_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SEPF";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub hash_buckets: u32,
    pub wide_dim: u32,
    pub vec_dim: u32,
}

pub fn write_examples(out: &mut impl Write, header: FeatureFileHeader, examples: &[EncodedExample]) -> Result<()> {
    let mut buf = Vec::with_capacity(26 + examples.len() * (80 + 8 * header.vec_dim as usize));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SEPF_VERSION.to_le_bytes());
    buf.extend_from_slice(&header.hash_buckets.to_le_bytes());
    buf.extend_from_slice(&header.wide_dim.to_le_bytes());
    buf.extend_from_slice(&header.vec_dim.to_le_bytes());
    buf.extend_from_slice(&(examples.len() as u64).to_le_bytes());
    for e in examples {
        if e.allow_vec.len() != header.vec_dim as usize || e.neverallow_vec.len() != header.vec_dim as usize {
            return Err(Error::Format("comment vector length differs from header".into()));
        }
        buf.extend_from_slice(&[e.label, e.uid.index() as u8, e.flags.bits(), 0]);
        for v in e.deep_ids.iter().chain(&e.wide) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for x in e.allow_vec.iter().chain(e.neverallow_vec.iter()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("feature file truncated".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Arc<[f32]>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.take()?))).collect()
    }
}

pub fn read_examples(input: &mut impl Read) -> Result<(FeatureFileHeader, Vec<EncodedExample>)> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(Error::Format("not a SEPF feature file".into()));
    }
    let version = u16::from_le_bytes(c.take()?);
    if version != SEPF_VERSION {
        return Err(Error::Format(format!("unsupported SEPF version {version}")));
    }
    let header = FeatureFileHeader {
        hash_buckets: c.u32()?,
        wide_dim: c.u32()?,
        vec_dim: c.u32()?,
    };
    let count = u64::from_le_bytes(c.take()?) as usize;
    let mut examples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let [label, uid, flags, _] = c.take::<4>()?;
        let mut ids = [0u32; 4 + WIDE_SLOTS];
        for v in ids.iter_mut() {
            *v = c.u32()?;
        }
        let uid = UidBucket::from_index(uid as usize)
            .ok_or_else(|| Error::Format(format!("bad uid bucket index {uid}")))?;
        examples.push(EncodedExample {
            deep_ids: ids[..4].try_into().expect("4 ids"),
            wide: ids[4..].try_into().expect("15 slots"),
            flags: FlagSet::from_bits(flags),
            uid,
            allow_vec: c.f32s(header.vec_dim as usize)?,
            neverallow_vec: c.f32s(header.vec_dim as usize)?,
            label,
        });
    }
    if c.pos != data.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok((header, examples))
}
