//! Binary persistence plumbing shared by checkpoints and index files:
//! CRC-64/XZ integrity trailers, a position-tracking byte reader, and the
//! versioned named-tower checkpoint format.
//!
//! Every artifact is a single little-endian byte stream ending in an 8-byte
//! CRC-64/XZ of everything before it. Writers serialize fully in memory and
//! publish with a temp-file rename so readers never observe a torn file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, EmbeddingTable, Tower};

/// CRC-64/XZ (reflected, poly 0x42F0E1EBA9EA3693, init/xorout all-ones).
/// Check value: `crc64(b"123456789") == 0x995DC9BBDF1939FA`.
const CRC64_POLY_REFLECTED: u64 = 0xC96C_5795_D787_0F42;

const fn build_crc64_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u64;
        let mut j = 0;
        while j < 8 {
            crc = if crc & 1 == 1 { (crc >> 1) ^ CRC64_POLY_REFLECTED } else { crc >> 1 };
            j += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC64_TABLE: [u64; 256] = build_crc64_table();

/// Streaming CRC-64/XZ.
#[derive(Debug, Clone)]
pub struct Crc64 {
    state: u64,
}

impl Crc64 {
    pub fn new() -> Crc64 {
        Crc64 { state: !0 }
    }

    pub fn update(&mut self, data: &[u8]) {
        for &b in data {
            self.state = CRC64_TABLE[((self.state ^ b as u64) & 0xFF) as usize] ^ (self.state >> 8);
        }
    }

    pub fn finalize(&self) -> u64 {
        !self.state
    }
}

impl Default for Crc64 {
    fn default() -> Self {
        Crc64::new()
    }
}

/// One-shot CRC-64/XZ of a byte slice.
pub fn crc64(data: &[u8]) -> u64 {
    let mut c = Crc64::new();
    c.update(data);
    c.finalize()
}

/// Append the CRC trailer to `body` and publish at `path` via temp + rename,
/// so a crash mid-write can never leave a plausible-looking partial file.
pub fn write_artifact(path: &Path, mut body: Vec<u8>) -> Result<()> {
    let crc = crc64(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read an artifact, verify and strip its CRC trailer, return the body.
pub fn read_artifact(path: &Path) -> Result<Vec<u8>> {
    let mut data = fs::read(path)?;
    if data.len() < 8 {
        return Err(Error::format(data.len() as u64, "file too short for CRC trailer"));
    }
    let tail = data.split_off(data.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
    let actual = crc64(&data);
    if stored != actual {
        return Err(Error::format(
            data.len() as u64,
            format!("checksum mismatch: stored {stored:#018x}, computed {actual:#018x}"),
        ));
    }
    Ok(data)
}

/// Cursor over a verified artifact body; every decode error carries the
/// byte offset where parsing stopped.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    pub fn pos(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos(),
                format!("need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos();
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::format(
                at,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32_le(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// Bulk-decode `n` f32 values.
    pub fn f32_slice(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    pub fn str_u8(&mut self) -> Result<String> {
        let at = self.pos();
        let len = self.u8()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(at, "name is not valid UTF-8"))
    }

    pub fn done(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                self.pos(),
                format!("{} trailing bytes after end of structure", self.remaining()),
            ));
        }
        Ok(())
    }
}

/// Append-only encoder mirroring [`Reader`].
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    pub fn magic(&mut self, magic: &[u8; 4]) {
        self.buf.extend_from_slice(magic);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32_le(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64_le(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32_le(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str_u8(&mut self, s: &str) -> Result<()> {
        if s.len() > u8::MAX as usize {
            return Err(Error::config(format!("name too long for u8 length: {s:?}")));
        }
        self.u8(s.len() as u8);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn activation_from_code(code: u8, at: u64) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Identity),
        other => Err(Error::format(at, format!("unknown activation code {other}"))),
    }
}

/// Serialize named towers under the given 4-byte magic. Architecture is
/// self-describing; parameters are downcast to f32 in flat export order.
pub fn save_towers(path: &Path, magic: &[u8; 4], towers: &[(&str, &Tower)]) -> Result<()> {
    let mut w = Writer::new();
    w.magic(magic);
    w.u32_le(CHECKPOINT_VERSION);
    w.u8(u8::try_from(towers.len()).map_err(|_| Error::config("too many towers"))?);
    let mut params = Vec::new();
    for (name, tower) in towers {
        w.str_u8(name)?;
        w.u8(tower.normalize as u8);
        w.u32_le(tower.numeric_dim as u32);
        w.u8(u8::try_from(tower.embeddings.len())
            .map_err(|_| Error::config("too many embedding fields"))?);
        for e in &tower.embeddings {
            w.u64_le(e.rows as u64);
            w.u32_le(e.dim as u32);
        }
        w.u8(u8::try_from(tower.layers.len()).map_err(|_| Error::config("too many layers"))?);
        for l in &tower.layers {
            w.u32_le(l.in_dim as u32);
            w.u32_le(l.out_dim as u32);
            w.u8(activation_code(l.activation));
        }
        params.clear();
        tower.export_params(&mut params);
        for &p in &params {
            w.f32_le(p as f32);
        }
    }
    write_artifact(path, w.into_bytes())
}

/// Load a checkpoint written by [`save_towers`], verifying magic, version,
/// and CRC. Parameters come back as f64 (exact f32 widening).
pub fn load_towers(path: &Path, magic: &[u8; 4]) -> Result<Vec<(String, Tower)>> {
    let body = read_artifact(path)?;
    let mut r = Reader::new(&body);
    r.expect_magic(magic)?;
    let at = r.pos();
    let version = r.u32_le()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            at,
            format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let count = r.u8()? as usize;
    let mut towers = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str_u8()?;
        let normalize = r.u8()? != 0;
        let numeric_dim = r.u32_le()? as usize;
        let n_emb = r.u8()? as usize;
        let mut embeddings = Vec::with_capacity(n_emb);
        for _ in 0..n_emb {
            let rows = r.u64_le()? as usize;
            let dim = r.u32_le()? as usize;
            embeddings.push(EmbeddingTable::zeros(rows, dim));
        }
        let n_layers = r.u8()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = r.u32_le()? as usize;
            let out_dim = r.u32_le()? as usize;
            let at = r.pos();
            let act = activation_from_code(r.u8()?, at)?;
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                w: vec![0.0; in_dim * out_dim],
                b: vec![0.0; out_dim],
                activation: act,
            });
        }
        let mut tower = Tower::new(embeddings, numeric_dim, layers, normalize)?;
        let n_params = tower.param_count();
        let raw = r.f32_slice(n_params)?;
        let params: Vec<f64> = raw.into_iter().map(f64::from).collect();
        tower.import_params(&params)?;
        towers.push((name, tower));
    }
    r.done()?;
    Ok(towers)
}
