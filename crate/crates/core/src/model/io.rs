//! `SEPM` model files. Little-endian throughout.
//!
//! | field            | encoding                                         |
//! |------------------|--------------------------------------------------|
//! | magic            | `SEPM`                                           |
//! | version          | u16                                              |
//! | header           | u32 length + JSON `{config, arch, vocab}`        |
//! | parameter blocks | per block: u32 name length, name, u64 count, `count` f32 values |
//!
//! Blocks appear in declared order: `wide.w`, `wide.b`, the four embedding
//! tables, each dense layer's weights then bias, and `out.w`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::{Architecture, DeepParams, WideWeights};
use super::{Model, TrainConfig};
use crate::error::{Error, Result};
use crate::features::Vocabulary;

pub const SEPM_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SEPM";

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    arch: Architecture,
    vocab: Vocabulary,
}

fn put_block(buf: &mut Vec<u8>, name: &str, values: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn write_model(out: &mut impl Write, model: &Model) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        arch: model.arch.clone(),
        vocab: model.vocab.clone(),
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SEPM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    put_block(&mut buf, "wide.w", &model.wide.w);
    put_block(&mut buf, "wide.b", &[model.wide.b]);
    for (name, values) in model.deep.blocks() {
        put_block(&mut buf, &name, values);
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format("model file truncated".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn block(&mut self, expected: &str, dst: &mut [f64]) -> Result<()> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.bytes(len)?).map_err(|_| Error::Format("bad block name".into()))?;
        if name != expected {
            return Err(Error::Format(format!("expected block {expected}, found {name}")));
        }
        let count = u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")) as usize;
        if count != dst.len() {
            return Err(Error::Format(format!("block {name} has {count} values, expected {}", dst.len())));
        }
        for (d, chunk) in dst.iter_mut().zip(self.bytes(count * 4)?.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        }
        Ok(())
    }
}

pub fn read_model(input: &mut impl Read) -> Result<Model> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut r = Reader { data: &data, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(Error::Format("not a SEPM model file".into()));
    }
    let version = u16::from_le_bytes(r.bytes(2)?.try_into().expect("2 bytes"));
    if version != SEPM_VERSION {
        return Err(Error::Format(format!("unsupported SEPM version {version}")));
    }
    let len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.bytes(len)?)?;
    let mut rng = super::params::seeded_rng(0);
    let mut deep = DeepParams::init(&header.arch, &mut rng);
    let mut wide = WideWeights::zeros(header.arch.wide_dim);
    r.block("wide.w", &mut wide.w)?;
    let mut b = [0.0];
    r.block("wide.b", &mut b)?;
    wide.b = b[0];
    for (name, values) in deep.blocks_mut() {
        r.block(&name, values)?;
    }
    if r.pos != data.len() {
        return Err(Error::Format("trailing bytes after last block".into()));
    }
    Ok(Model {
        config: header.config,
        arch: header.arch,
        vocab: header.vocab,
        wide,
        deep,
    })
}
