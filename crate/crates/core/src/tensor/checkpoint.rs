//! Binary parameter checkpoints.
//!
//! Layout: the magic `DSCSR1`, then per parameter a `u32` name length, the
//! UTF-8 name, a `u32` rank, `rank` × `u64` dims and the values as `f64`.
//! All integers and floats are little-endian.

use std::io::{self, Read, Write};

use super::{ParameterSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"DSCSR1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint lacks parameter `{0}`")]
    Missing(String),
    #[error("checkpoint has unexpected parameter `{0}`")]
    Unexpected(String),
    #[error("parameter `{name}` has shape {found:?}, architecture expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

pub fn write_checkpoint<W: Write>(params: &ParameterSet, mut out: W) -> io::Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    for (name, _, t) in params.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rank() as u32).to_le_bytes())?;
        for d in t.shape() {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

/// Reads a checkpoint into a copy of `template`, which fixes the expected
/// names, shapes and partitions.
pub fn read_checkpoint<R: Read>(
    template: &ParameterSet,
    mut input: R,
) -> Result<ParameterSet, CheckpointError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut cursor = Cursor {
        bytes: &bytes,
        pos: 6,
    };
    let mut params = template.clone();
    let mut seen = std::collections::BTreeSet::new();
    while !cursor.done() {
        let name_len = cursor.u32()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?;
        let rank = cursor.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("rank {rank} for `{name}`")));
        }
        let dims = (0..rank)
            .map(|_| cursor.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let expected = template
            .get(&name)
            .ok_or_else(|| CheckpointError::Unexpected(name.clone()))?
            .shape()
            .to_vec();
        if dims != expected {
            return Err(CheckpointError::Shape {
                name,
                expected,
                found: dims,
            });
        }
        let n: usize = dims.iter().product();
        let raw = cursor.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        params
            .set(&name, t)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if !seen.insert(name.clone()) {
            return Err(CheckpointError::Corrupt(format!("`{name}` stored twice")));
        }
    }
    if let Some(missing) = template.names().find(|n| !seen.contains(*n)) {
        return Err(CheckpointError::Missing(missing.to_string()));
    }
    Ok(params)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
