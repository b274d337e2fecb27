//! Binary checkpoint format.
//!
//! ```text
//! "MIXGRAD1"
//! repeated per parameter array:
//!     u64 name length, UTF-8 name
//!     u64 rank, rank × u64 dims
//!     product(dims) × f64 values
//! ```
//! All integers and floats are little-endian. Arrays are written in
//! [`param_layout`] order; loading accepts any order but requires exactly the
//! reference set of names and dimensions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{param_layout, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MIXGRAD1";

pub fn write_checkpoint<W: Write>(m: &ModelParams, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for ((name, data), (_, dims)) in m.arrays().iter().zip(param_layout()) {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(dims.len() as u64).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in data.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_checkpoint(m: &ModelParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(m, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|detail| Error::format(path, detail))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Decodes and validates a checkpoint held in memory.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParams, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err("missing MIXGRAD1 magic".into());
    }
    let expected: HashMap<&str, Vec<usize>> = param_layout().into_iter().collect();
    let mut found: HashMap<String, Vec<f64>> = HashMap::new();

    while !cur.at_end() {
        let name_len = cur.u64()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| "parameter name is not UTF-8".to_string())?
            .to_owned();
        let Some(dims) = expected.get(name.as_str()) else {
            return Err(format!("unknown parameter array {name:?}"));
        };
        let rank = cur.u64()? as usize;
        if rank > 8 {
            return Err(format!("{name}: implausible rank {rank}"));
        }
        let got: Vec<usize> = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<_, _>>()?;
        if &got != dims {
            return Err(format!("{name}: dims {got:?}, reference architecture needs {dims:?}"));
        }
        let count: usize = dims.iter().product();
        let raw = cur.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if found.insert(name.clone(), values).is_some() {
            return Err(format!("duplicate parameter array {name:?}"));
        }
    }

    let mut m = ModelParams::zeros();
    for (name, dst) in m.arrays_mut() {
        let src = found
            .remove(name)
            .ok_or_else(|| format!("missing parameter array {name:?}"))?;
        dst.copy_from_slice(&src);
    }
    Ok(m)
}
